use crnirenberg::group::*;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = HPoint<f64>> {
    (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, t)| HPoint::xyt(x, y, t))
}

fn close(a: &HPoint<f64>, b: &HPoint<f64>, tol: f64) -> bool {
    a.coords().iter().zip(b.coords().iter()).all(|(u, v)| (u - v).abs() <= tol * (1.0 + u.abs().max(v.abs())))
}

proptest! {
    #[test]
    fn associativity(a in point(), b in point(), c in point()) {
        prop_assert!(close(&compose(&compose(&a, &b), &c), &compose(&a, &compose(&b, &c)), 1e-13));
    }

    #[test]
    fn inverse_is_two_sided(a in point()) {
        let e = HPoint::origin(1);
        prop_assert!(close(&compose(&a, &inverse(&a)), &e, 1e-14));
        prop_assert!(close(&compose(&inverse(&a), &a), &e, 1e-14));
    }

    #[test]
    fn dilation_is_an_automorphism(a in point(), b in point(), l in 0.1..10.0f64) {
        let lhs = dilate(l, &compose(&a, &b)).unwrap();
        let rhs = compose(&dilate(l, &a).unwrap(), &dilate(l, &b).unwrap());
        prop_assert!(close(&lhs, &rhs, 1e-12));
        prop_assert!((gauge_norm(&dilate(l, &a).unwrap()) - l * gauge_norm(&a)).abs() < 1e-12 * (1.0 + l * gauge_norm(&a)));
    }

    #[test]
    fn distance_is_left_invariant(a in point(), b in point(), c in point()) {
        let d0 = dist(&a, &b);
        let d1 = dist(&compose(&c, &a), &compose(&c, &b));
        prop_assert!((d0 - d1).abs() < 1e-11 * (1.0 + d0));
    }

    #[test]
    fn inversion_inverts_the_gauge(a in point()) {
        prop_assume!(gauge_norm(&a) > 1e-3);
        let b = cr_inversion(&a).unwrap();
        prop_assert!((gauge_norm(&b) * gauge_norm(&a) - 1.0).abs() < 1e-13);
        prop_assert!(close(&cr_inversion(&b).unwrap(), &a, 1e-12));
    }

    #[test]
    fn cayley_round_trip(a in point()) {
        let z = cayley(&a);
        let norm: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-13);
        prop_assert!(close(&cayley_inverse(&z).unwrap(), &a, 1e-9));
    }
}
