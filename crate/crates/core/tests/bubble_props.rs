use crnirenberg::bubbles::*;
use crnirenberg::field::ScalarField;
use crnirenberg::functional::{pde_residual, SubcriticalExponent};
use crnirenberg::group::HPoint;
use crnirenberg::multibump::RSpec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bubbles_solve_the_critical_equation(
        cx in -3.0..3.0f64, cy in -3.0..3.0f64, ct in -3.0..3.0f64,
        lam in 0.2..5.0f64,
        px in -2.0..2.0f64, py in -2.0..2.0f64, pt in -2.0..2.0f64,
    ) {
        let cst = Constants::<f64>::new(1).unwrap();
        let w = bubble(BumpParams::new(1.0, HPoint::xyt(cx, cy, ct), lam).unwrap(), &cst);
        let p = HPoint::xyt(cx + px / lam, cy + py / lam, ct + pt / (lam * lam));
        let exp = SubcriticalExponent::critical(&cst);
        let res = pde_residual(&w, &RSpec::constant(1, 1.0), &exp, &p).unwrap();
        let scale = w.value(&p).powi(3);
        prop_assert!(res.abs() <= 1e-9 * scale, "{res} vs {scale}");
    }

    #[test]
    fn peak_and_scale_are_inverse(alpha in 0.2..3.0f64, lam in 0.1..20.0f64) {
        let cst = Constants::<f64>::new(1).unwrap();
        let p = BumpParams::new(alpha, HPoint::xyt(0.5, 0.0, -1.0), lam).unwrap();
        let back = scale_from_peak(peak_value(&p, &cst), alpha, &cst);
        prop_assert!((back / lam - 1.0).abs() < 1e-12);
    }
}

#[test]
fn energy_levels_scale_with_curvature() {
    let cst = Constants::<f64>::new(1).unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((energy_level(1.0, &cst).unwrap() - pi2).abs() < 1e-12);
    assert!((energy_level(4.0, &cst).unwrap() - pi2 / 4.0).abs() < 1e-12);
    assert!(energy_level(0.0, &cst).is_err());
}
