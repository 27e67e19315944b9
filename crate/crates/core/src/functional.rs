//! The subcritical functional
//! `I_{R,τ}(u) = ½∫|∇_H u|² − 1/(p+1) ∫ R H^τ |u|^{p+1}`, `p = (Q+2)/(Q−2) − τ`,
//! its first variation, the pointwise PDE residual and the translation and
//! rescaling operators.

use crate::bubbles::{weight_h, Constants};
use crate::field::{AffineMap, Composed, ScalarField};
use crate::fields::{grad_inner, integrate_fn, GridSpec, Nodes};
use crate::group::HPoint;
use crate::multibump::RSpec;
use crate::ops::{cartesian_gradient, horizontal_from_gradient, sub_laplacian};
use crate::{lit, to_f64, Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubcriticalExponent<T: Scalar> {
    pub tau: T,
    pub p: T,
}

impl<T: Scalar> SubcriticalExponent<T> {
    /// `τ ∈ [0, 2/(Q−2)]`.
    pub fn new(tau: T, cst: &Constants<T>) -> Result<Self> {
        let two = lit::<T>(2.0);
        let hi = two / (cst.q - two);
        if !(tau >= T::zero() && tau <= hi) {
            return Err(Error::Invalid(format!("tau = {} outside [0, {}]", to_f64(tau), to_f64(hi))));
        }
        Ok(SubcriticalExponent { tau, p: cst.critical_power() - tau })
    }

    pub fn critical(cst: &Constants<T>) -> Self {
        SubcriticalExponent { tau: T::zero(), p: cst.critical_power() }
    }

    /// `|u|^{p−1} u`.
    #[inline]
    pub fn signed_power(&self, u: T) -> T {
        if u == T::zero() {
            T::zero()
        } else {
            u.abs().powf(self.p - T::one()) * u
        }
    }

    /// `|u|^{p+1} / (p+1)`.
    #[inline]
    pub fn primitive(&self, u: T) -> T {
        let e = self.p + T::one();
        if u == T::zero() {
            T::zero()
        } else {
            u.abs().powf(e) / e
        }
    }

    /// `R H^τ` at `ξ`.
    #[inline]
    pub fn weight(&self, r: &RSpec<T>, p: &HPoint<T>) -> T {
        if self.tau == T::zero() {
            r.value(p)
        } else {
            r.value(p) * weight_h(p).powf(self.tau)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown<T: Scalar> {
    pub kinetic: T,
    pub potential: T,
    pub total: T,
    pub estimated_error: T,
}

impl<T: Scalar> EnergyBreakdown<T> {
    fn from_parts(kinetic: T, potential: T, estimated_error: T) -> Self {
        EnergyBreakdown { kinetic, potential, total: kinetic - potential, estimated_error }
    }
}

/// Tail exponent of `R H^τ |u|^{p+1}` for `u ~ |ξ|^{2−Q}`: `2Q − growth(R)`.
fn potential_tail<T: Scalar>(r: &RSpec<T>, q: T) -> T {
    lit::<T>(2.0) * q - r.growth()
}

/// `I_{R,τ}(u)` on a grid with analytic tails.
pub fn energy<T: Scalar, U: ScalarField<T> + ?Sized>(
    u: &U,
    r: &RSpec<T>,
    exp: &SubcriticalExponent<T>,
    spec: &GridSpec<T>,
) -> Result<EnergyBreakdown<T>> {
    let q = lit::<T>((2 * spec.n + 2) as f64);
    let half = lit::<T>(0.5);
    let kin = grad_inner(u, u, spec)?;
    let pot = integrate_fn(spec, Some(potential_tail(r, q)), |p| {
        let v = u.value(p);
        if v == T::zero() {
            T::zero()
        } else {
            exp.weight(r, p) * exp.primitive(v)
        }
    })?;
    Ok(EnergyBreakdown::from_parts(
        half * kin.value,
        pot.value,
        half * kin.estimated_error + pot.estimated_error,
    ))
}

/// `I_{R,τ}(u)` with a node set (for example bubble-frame nodes).
pub fn energy_nodes<T: Scalar, U: ScalarField<T> + ?Sized>(
    u: &U,
    r: &RSpec<T>,
    exp: &SubcriticalExponent<T>,
    nodes: &Nodes<T>,
) -> EnergyBreakdown<T> {
    let v = nodes.integrate_many(2, |p, out| {
        let val = u.value(p);
        let h = cartesian_gradient(u, p).map(|g| horizontal_from_gradient(p, &g)).unwrap_or_default();
        out[0] = lit::<T>(0.5) * h.iter().fold(T::zero(), |s, &a| s + a * a);
        out[1] = if val == T::zero() { T::zero() } else { exp.weight(r, p) * exp.primitive(val) };
    });
    EnergyBreakdown::from_parts(v[0], v[1], T::zero())
}

/// `I'_{R,τ}(u)φ = ∫∇_H u·∇_H φ − ∫ R H^τ |u|^{p−1}u φ`.
pub fn first_variation<T: Scalar, U, P>(
    u: &U,
    r: &RSpec<T>,
    exp: &SubcriticalExponent<T>,
    spec: &GridSpec<T>,
    phi: &P,
) -> Result<T>
where
    U: ScalarField<T> + ?Sized,
    P: ScalarField<T> + ?Sized,
{
    let q = lit::<T>((2 * spec.n + 2) as f64);
    let a = grad_inner(u, phi, spec)?;
    let b = integrate_fn(spec, Some(potential_tail(r, q)), |p| {
        let v = u.value(p);
        if v == T::zero() {
            T::zero()
        } else {
            exp.weight(r, p) * exp.signed_power(v) * phi.value(p)
        }
    })?;
    Ok(a.value - b.value)
}

/// `−Δ_H u − R H^τ |u|^{p−1}u` at a point.
pub fn pde_residual<T: Scalar, U: ScalarField<T> + ?Sized>(
    u: &U,
    r: &RSpec<T>,
    exp: &SubcriticalExponent<T>,
    at: &HPoint<T>,
) -> Result<T> {
    Ok(-sub_laplacian(u, at)? - exp.weight(r, at) * exp.signed_power(u.value(at)))
}

/// `T_a u = u(a ∘ ·)`.
pub fn translate_field<T: Scalar, U: ScalarField<T>>(a: &HPoint<T>, u: U) -> Composed<T, U> {
    Composed::new(u, AffineMap { a: a.clone(), s: T::one() }, T::one())
}

/// `𝒯_{λ,ξ} u = λ^{2/(1−p)} u(ξ ∘ δ_{1/λ}(·))`.
pub fn rescale_field<T: Scalar, U: ScalarField<T>>(
    lambda: T,
    xi: &HPoint<T>,
    exp: &SubcriticalExponent<T>,
    u: U,
) -> Result<Composed<T, U>> {
    if !(lambda > T::zero()) {
        return Err(Error::NonPositiveScale(to_f64(lambda)));
    }
    let e = lit::<T>(2.0) / (T::one() - exp.p);
    Ok(Composed::new(u, AffineMap { a: xi.clone(), s: T::one() / lambda }, lambda.powf(e)))
}

/// Inverse of [`rescale_field`]: `v ↦ λ^{−2/(1−p)} v(δ_λ(ξ^{-1} ∘ ·))`.
pub fn rescale_inverse<T: Scalar, U: ScalarField<T>>(
    lambda: T,
    xi: &HPoint<T>,
    exp: &SubcriticalExponent<T>,
    v: U,
) -> Result<Composed<T, U>> {
    if !(lambda > T::zero()) {
        return Err(Error::NonPositiveScale(to_f64(lambda)));
    }
    let e = lit::<T>(2.0) / (T::one() - exp.p);
    let map = AffineMap { a: xi.clone(), s: T::one() / lambda }.inverse();
    Ok(Composed::new(v, map, lambda.powf(-e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::{bubble, standard_bubble, BumpParams};
    use crate::field::Zero;
    use crate::fields::{Frame, FrameRule};

    fn cst() -> Constants<f64> {
        Constants::new(1).unwrap()
    }

    #[test]
    fn exponent_range() {
        let c = cst();
        assert!(SubcriticalExponent::new(-0.1, &c).is_err());
        assert!(SubcriticalExponent::new(1.1, &c).is_err());
        let e = SubcriticalExponent::new(0.0, &c).unwrap();
        assert_eq!(e.p, 3.0);
        assert_eq!(e.p + 1.0, c.qstar);
    }

    #[test]
    fn bubble_residuals() {
        let c = cst();
        let e = SubcriticalExponent::critical(&c);
        let w = bubble(BumpParams::new(1.0, HPoint::xyt(0.3, -0.2, 0.5), 1.4).unwrap(), &c);
        let one = RSpec::constant(1, 1.0);
        let two = RSpec::constant(1, 2.0);
        for p in [HPoint::xyt(0.1, 0.2, 0.3), HPoint::xyt(-1.0, 0.5, 2.0)] {
            let r = pde_residual(&w, &one, &e, &p).unwrap();
            let s = w.value(&p).powi(3);
            assert!(r.abs() < 1e-9 * s, "{r}");
            let r2 = pde_residual(&w, &two, &e, &p).unwrap();
            assert!((r2 + s).abs() < 1e-9 * s);
            assert_eq!(pde_residual(&Zero(1), &one, &e, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn bubble_energy_on_frames() {
        let c = cst();
        let e = SubcriticalExponent::critical(&c);
        let w = standard_bubble(&c);
        let rule = FrameRule::default_for(&c).unwrap();
        let nodes = rule.single_nodes(&Frame::new(HPoint::origin(1), 1.0));
        let en = energy_nodes(&w, &RSpec::constant(1, 1.0), &e, &nodes);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((en.total / pi2 - 1.0).abs() < 1e-6, "{en:?}");
    }

    #[test]
    fn rescale_round_trip() {
        let c = cst();
        let e = SubcriticalExponent::new(0.05, &c).unwrap();
        let w = standard_bubble(&c);
        let xi = HPoint::xyt(0.4, -1.0, 0.7);
        let f = rescale_field(2.5, &xi, &e, &w).unwrap();
        let g = rescale_inverse(2.5, &xi, &e, &f).unwrap();
        for p in [HPoint::xyt(0.1, 0.2, 0.3), HPoint::xyt(1.0, -0.5, 2.0)] {
            let (a, b) = (g.value(&p), w.value(&p));
            assert!((a - b).abs() <= 8.0 * f64::EPSILON * b.abs(), "{a} {b}");
        }
        let t = translate_field(&HPoint::origin(1), &w);
        assert_eq!(t.value(&xi), w.value(&xi));
    }

    #[test]
    fn critical_rescale_is_a_bubble() {
        let c = cst();
        let e = SubcriticalExponent::critical(&c);
        let w = standard_bubble(&c);
        let xi = HPoint::xyt(0.4, -1.0, 0.7);
        let lam = 3.0;
        // λ^{(2−Q)/2} w(ξ ∘ δ_{1/λ}·) is the bubble centered at δ_λ(ξ^{-1}) with scale λ^{-1}.
        let f = rescale_field(lam, &xi, &e, &w).unwrap();
        let center = crate::group::dilate_unchecked(lam, &crate::group::inverse(&xi));
        let b = bubble(BumpParams::new(1.0, center, 1.0 / lam).unwrap(), &c);
        let p = HPoint::xyt(0.3, 2.0, -4.0);
        assert!((f.value(&p) - b.value(&p)).abs() < 1e-14);
    }
}
