use crnirenberg::audit::*;
use crnirenberg::bubbles::{bubble, BumpParams, Constants};
use crnirenberg::fields::{Frame, GaugeRule};
use crnirenberg::functional::SubcriticalExponent;
use crnirenberg::group::HPoint;
use crnirenberg::multibump::{RSpec, Ramp};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pohozaev_balances_on_random_bubbles(
        cx in -2.0..2.0f64, ct in -2.0..2.0f64, lam in 0.5..3.0f64, sigma in 0.3..2.0f64,
    ) {
        let cst = Constants::<f64>::new(1).unwrap();
        let center = HPoint::xyt(cx, 0.0, ct);
        let w = bubble(BumpParams::new(1.0, center.clone(), lam).unwrap(), &cst);
        let exp = SubcriticalExponent::critical(&cst);
        let t = pohozaev_identity(&w, &RSpec::constant(1, 1.0), &exp, &center, sigma, &GaugeRule::default_for(1)).unwrap();
        prop_assert!(t.report("pohozaev", 0.02).pass, "{t:?}");
    }

    #[test]
    fn kazdan_warner_vanishes_for_constant_curvature(cx in -2.0..2.0f64, lam in 0.5..3.0f64, r0 in 0.5..2.0f64) {
        let cst = Constants::<f64>::new(1).unwrap();
        let b = BumpParams::new(r0.powf(-0.5), HPoint::xyt(cx, 1.0, 0.0), lam).unwrap();
        let quad = Quadrature::frames(&cst, vec![Frame::of(&b)]).unwrap();
        let rep = kazdan_warner(&bubble(b, &cst), &RSpec::constant(1, r0), 2.0, &quad, &cst).unwrap();
        prop_assert!(rep.pass);
    }
}

#[test]
fn kazdan_warner_pairing_is_positive_for_increasing_curvature() {
    let cst = Constants::<f64>::new(1).unwrap();
    let r = RSpec::Ramp(Ramp { n: 1, level: 2.0, amp: 1.0, width: 2.0, axis: 0 });
    for x in [-1.0, 0.0, 2.0] {
        let b = BumpParams::new(1.0, HPoint::xyt(x, 0.5, 0.0), 1.5).unwrap();
        let quad = Quadrature::frames(&cst, vec![Frame::of(&b)]).unwrap();
        let rep = kazdan_warner(&bubble(b, &cst), &r, 2.0, &quad, &cst).unwrap();
        assert!(rep.computed[1] > 10.0 * rep.tolerance, "{rep:?}");
        assert!(!rep.pass);
    }
}

#[test]
fn grid_and_frame_quadrature_agree_on_pairings() {
    let cst = Constants::<f64>::new(1).unwrap();
    let r = RSpec::Ramp(Ramp { n: 1, level: 2.0, amp: 1.0, width: 2.0, axis: 0 });
    let b = BumpParams::new(1.0, HPoint::origin(1), 1.0).unwrap();
    let w = bubble(b.clone(), &cst);
    let frames = kazdan_warner(&w, &r, 2.0, &Quadrature::frames(&cst, vec![Frame::of(&b)]).unwrap(), &cst).unwrap();
    let spec = crnirenberg::fields::GridSpec::symmetric(1, 6.0, 36.0, 0.1, 0.4).unwrap();
    let grid = kazdan_warner(&w, &r, 2.0, &Quadrature::Grid(spec), &cst).unwrap();
    assert!((grid.computed[1] / frames.computed[1] - 1.0).abs() < 0.02, "{:?} {:?}", grid.computed, frames.computed);
}
