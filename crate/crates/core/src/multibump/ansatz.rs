//! Path-family endpoints `g^{(i)}(θ_i) = θ_i C₁ R(ξ^{(i)})^{(2−Q)/4} η(·) w`,
//! used as flow initializers.

use crate::bubbles::{BumpParams, Constants};
use crate::field::{AffineMap, ScalarField};
use crate::fields::gauge::gauge_gradient;
use crate::group::{compose, gauge_norm, inverse, HPoint};
use crate::multibump::{check_regions, MultiBump, RSpec, Region};
use crate::{lit, to_f64, Error, Result, Scalar};

/// The constant `C₁` of the path family.
pub const ANSATZ_C1: f64 = 2.0;

/// Radial cutoff `χ(d(ξ, center))`: 1 inside `r_in`, 0 outside `r_out`,
/// quintic smoothstep between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff<T: Scalar> {
    pub r_in: T,
    pub r_out: T,
}

impl<T: Scalar> Cutoff<T> {
    pub fn new(r_in: T, r_out: T) -> Result<Self> {
        if !(r_in > T::zero() && r_out > r_in) {
            return Err(Error::Invalid("cutoff needs 0 < r_in < r_out".into()));
        }
        Ok(Cutoff { r_in, r_out })
    }

    fn profile(&self, r: T) -> (T, T) {
        if r <= self.r_in {
            return (T::one(), T::zero());
        }
        if r >= self.r_out {
            return (T::zero(), T::zero());
        }
        let w = self.r_out - self.r_in;
        let s = (r - self.r_in) / w;
        let s2 = s * s;
        let v = T::one() - s2 * s * (lit::<T>(10.0) - lit::<T>(15.0) * s + lit::<T>(6.0) * s2);
        let dv = -lit::<T>(30.0) * s2 * (T::one() - s) * (T::one() - s) / w;
        (v, dv)
    }

    pub fn value(&self, center: &HPoint<T>, p: &HPoint<T>) -> T {
        self.profile(gauge_norm(&compose(&inverse(center), p))).0
    }

    /// Value and Cartesian gradient.
    pub fn jet(&self, center: &HPoint<T>, p: &HPoint<T>) -> (T, Vec<T>) {
        let a = inverse(center);
        let eta = compose(&a, p);
        let r = gauge_norm(&eta);
        let (v, dv) = self.profile(r);
        let d = 2 * p.n() + 1;
        if dv == T::zero() {
            return (v, vec![T::zero(); d]);
        }
        let mut g = gauge_gradient(&eta);
        AffineMap { a, s: T::one() }.pull_gradient(&mut g);
        g.iter_mut().for_each(|x| *x *= dv);
        (v, g)
    }
}

/// Point of largest `R` on an interior lattice of the region (first on ties).
pub fn region_peak<T: Scalar>(region: &Region<T>, r: &RSpec<T>, m: usize) -> HPoint<T> {
    let mut best = region.center();
    let mut bv = r.value(&best);
    for p in region.interior_lattice(m) {
        let v = r.value(&p);
        if v > bv {
            bv = v;
            best = p;
        }
    }
    best
}

/// One bump per region at the lattice maximum of `R`, amplitude
/// `θ_i C₁ R(ξ_i)^{(2−Q)/4}`, concentration `lam`, common cutoff radii
/// `r_out` = smallest inscribed radius, `r_in = r_out/2`.
pub fn ansatz<T: Scalar>(
    regions: &[Region<T>],
    r: &RSpec<T>,
    cst: &Constants<T>,
    lam: T,
    thetas: &[T],
) -> Result<MultiBump<T>> {
    if thetas.len() != regions.len() {
        return Err(Error::Dimension { expected: regions.len(), got: thetas.len() });
    }
    if !(lam > T::zero()) {
        return Err(Error::NonPositiveScale(to_f64(lam)));
    }
    check_regions(regions)?;
    let mut bumps = Vec::with_capacity(regions.len());
    let mut r_out = T::infinity();
    for (reg, th) in regions.iter().zip(thetas) {
        let c = region_peak(reg, r, 21);
        let rv = r.value(&c);
        if !(rv > T::zero()) {
            return Err(Error::Invalid("R must be positive at the ansatz centers".into()));
        }
        r_out = r_out.min(reg.inscribed_radius(&c));
        let alpha = *th * lit::<T>(ANSATZ_C1) * rv.powf(cst.amplitude_exponent());
        bumps.push(BumpParams::new(alpha, c, lam)?);
    }
    let cutoff = Cutoff::new(r_out / lit(2.0), r_out)?;
    Ok(MultiBump { bumps, corrections: Vec::new(), cutoff: Some(cutoff) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_gradient() {
        let c = Cutoff::<f64>::new(0.5, 1.0).unwrap();
        let center = HPoint::xyt(0.2, -0.1, 0.3);
        let p = HPoint::xyt(0.8, 0.1, 0.4);
        let (v, g) = c.jet(&center, &p);
        assert!(v > 0.0 && v < 1.0);
        for k in 0..3 {
            let h = 1e-6;
            let (mut a, mut b) = (p.clone(), p.clone());
            a.set_coord(k, p.coord(k) + h);
            b.set_coord(k, p.coord(k) - h);
            let fd = (c.value(&center, &a) - c.value(&center, &b)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "{k} {fd} {}", g[k]);
        }
    }
}
