//! Jerison–Lee bubbles `w_{a,λ}`, their normalization, the weight `H` and
//! the energy levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{AffineMap, ScalarField};
use crate::group::{dilate_unchecked, HPoint};
use crate::ops::sub_laplacian_from_jet;
use crate::{lit, to_f64, Error, Result, Scalar};

/// Dimensional constants for `H^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constants<T: Scalar> {
    pub n: usize,
    pub q: T,
    pub qstar: T,
    pub c0: T,
    pub sn: T,
}

impl<T: Scalar> Constants<T> {
    /// Resolves `c0` by the constancy check of [`resolve_c0`].
    pub fn new(n: usize) -> Result<Self> {
        let c0 = resolve_c0::<T>(n)?;
        Ok(Self::with_c0(n, c0))
    }

    /// Constants with a caller-supplied `c0` (no check).
    pub fn with_c0(n: usize, c0: T) -> Self {
        let q = lit::<T>((2 * n + 2) as f64);
        let two = lit::<T>(2.0);
        Constants { n, q, qstar: two * q / (q - two), c0, sn: sobolev_constant(n) }
    }

    /// `(Q+2)/(Q−2) = Q* − 1`.
    pub fn critical_power(&self) -> T {
        self.qstar - T::one()
    }

    /// `(2−Q)/4`, the exponent in `α = R^{(2−Q)/4}`.
    pub fn amplitude_exponent(&self) -> T {
        (lit::<T>(2.0) - self.q) / lit(4.0)
    }

    /// Constant `κ_n` with `w_{0,1}^{Q*} = κ_n |J_C|`.
    pub fn jacobian_ratio(&self) -> T {
        self.c0.powf(self.qstar) / lit::<T>(2.0).powi(2 * self.n as i32 + 1)
    }
}

/// `S_n = 2n√π / (2^{2n} n!)^{1/(2(n+1))}`.
pub fn sobolev_constant<T: Scalar>(n: usize) -> T {
    let nf = n as f64;
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    lit(2.0 * nf * std::f64::consts::PI.sqrt() / (4f64.powi(n as i32) * fact).powf(1.0 / (2.0 * (nf + 1.0))))
}

/// Jet of `f = D^m`, `D = t² + (1+|z|²)²`, `m = (2−Q)/4`:
/// value, Cartesian gradient and Hessian.
fn profile_jet<T: Scalar>(eta: &HPoint<T>, g: Option<&mut [T]>, h: Option<&mut [T]>) -> T {
    let n = eta.n();
    let d = 2 * n + 1;
    let q = lit::<T>((2 * n + 2) as f64);
    let m = (lit::<T>(2.0) - q) / lit(4.0);
    let s = T::one() + eta.z_norm2();
    let dd = eta.t * eta.t + s * s;
    let f = dd.powf(m);
    if g.is_none() && h.is_none() {
        return f;
    }
    let four = lit::<T>(4.0);
    let mut dg = [T::zero(); 16];
    for j in 0..n {
        dg[j] = four * s * eta.x[j];
        dg[n + j] = four * s * eta.y[j];
    }
    dg[2 * n] = lit::<T>(2.0) * eta.t;
    let f1 = m * f / dd;
    if let Some(g) = g {
        for k in 0..d {
            g[k] = f1 * dg[k];
        }
    }
    if let Some(h) = h {
        let f2 = m * (m - T::one()) * f / (dd * dd);
        let eight = lit::<T>(8.0);
        let zc = |k: usize| if k < n { eta.x[k] } else { eta.y[k - n] };
        for a in 0..d {
            for b in 0..d {
                let mut hd = T::zero();
                if a < 2 * n && b < 2 * n {
                    hd = eight * zc(a) * zc(b);
                    if a == b {
                        hd += four * s;
                    }
                } else if a == 2 * n && b == 2 * n {
                    hd = lit(2.0);
                }
                h[a * d + b] = f1 * hd + f2 * dg[a] * dg[b];
            }
        }
    }
    f
}

/// Resolves `c0` from `−Δ_H f = c f^{(Q+2)/(Q−2)}` for
/// `f = (t²+(1+|z|²)²)^{(2−Q)/4}`: `c0 = c^{(Q−2)/4}`.
///
/// The ratio is evaluated at the origin and at 50 pseudo-random points; a
/// relative spread above `1e−8` is an internal formula error.
pub fn resolve_c0<T: Scalar>(n: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::Invalid("n must be at least 1".into()));
    }
    let (ratio, spread) = profile_ratio::<T>(n, 50, 0x5eed);
    let tol = if T::epsilon() < lit(1e-10) { 1e-8 } else { 1e-3 };
    if spread > tol {
        return Err(Error::NonConstantRatio(spread));
    }
    let q = lit::<T>((2 * n + 2) as f64);
    Ok(ratio.powf((q - lit(2.0)) / lit(4.0)))
}

/// `(ratio at the origin, max relative spread over `count` random points)`.
pub fn profile_ratio<T: Scalar>(n: usize, count: usize, seed: u64) -> (T, f64) {
    let d = 2 * n + 1;
    let q = lit::<T>((2 * n + 2) as f64);
    let p0 = (q + lit(2.0)) / (q - lit(2.0));
    let mut g = vec![T::zero(); d];
    let mut h = vec![T::zero(); d * d];
    let ratio_at = |p: &HPoint<T>, g: &mut [T], h: &mut [T]| {
        let f = profile_jet(p, Some(g), Some(h));
        -sub_laplacian_from_jet(p, g, h) / f.powf(p0)
    };
    let r0 = ratio_at(&HPoint::origin(n), &mut g, &mut h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spread = 0.0f64;
    for _ in 0..count {
        let c: Vec<T> = (0..d).map(|_| lit::<T>(rng.random_range(-3.0..3.0))).collect();
        let r = ratio_at(&HPoint::from_coords(&c), &mut g, &mut h);
        spread = spread.max(to_f64((r - r0).abs() / r0.abs()));
    }
    (r0, spread)
}

/// One bubble `α w_{a,λ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpParams<T: Scalar> {
    pub alpha: T,
    pub center: HPoint<T>,
    pub scale: T,
}

impl<T: Scalar> BumpParams<T> {
    pub fn new(alpha: T, center: HPoint<T>, scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::NonPositiveScale(to_f64(scale)));
        }
        Ok(BumpParams { alpha, center, scale })
    }

    pub fn unit(n: usize) -> Self {
        BumpParams { alpha: T::one(), center: HPoint::origin(n), scale: T::one() }
    }

    /// Membership in `D_ε`: `1/(2A₂^{(Q−2)/4}) ≤ α ≤ 2A₂^{(Q−2)/4}` and
    /// `λ ≥ 1/ε`.
    pub fn in_domain(&self, eps: T, a2: T) -> bool {
        let q = lit::<T>((2 * self.center.n() + 2) as f64);
        let b = a2.powf((q - lit(2.0)) / lit(4.0));
        let two = lit::<T>(2.0);
        self.alpha >= T::one() / (two * b) && self.alpha <= two * b && self.scale >= T::one() / eps
    }

    /// Number of real parameters per bump: `α`, the `2n+1` center
    /// coordinates and `log λ`.
    pub fn param_count(n: usize) -> usize {
        2 * n + 3
    }
}

/// `α w_{a,λ}(ξ) = α λ^{(Q−2)/2} w_{0,1}(δ_λ(a^{-1} ∘ ξ))`, closed form.
#[derive(Clone, Debug)]
pub struct Bubble<T: Scalar> {
    pub params: BumpParams<T>,
    pub c0: T,
    map: AffineMap<T>,
    amp: T,
}

impl<T: Scalar> Bubble<T> {
    pub fn new(params: BumpParams<T>, cst: &Constants<T>) -> Self {
        let map = AffineMap { a: params.center.clone(), s: T::one() / params.scale }.inverse();
        let amp = params.alpha * cst.c0 * params.scale.powf((cst.q - lit(2.0)) / lit(2.0));
        Bubble { params, c0: cst.c0, map, amp }
    }

    /// `δ_λ(a^{-1} ∘ ξ)`.
    pub fn local(&self, p: &HPoint<T>) -> HPoint<T> {
        self.map.apply(p)
    }

    /// Unit-amplitude value `w_{a,λ}(ξ)` (no `α`).
    pub fn unit_value(&self, p: &HPoint<T>) -> T {
        self.amp_unit() * profile_jet(&self.local(p), None, None)
    }

    /// Value and the derivatives of `α w_{a,λ}(ξ)` with respect to
    /// `(α, a_1..a_{2n+1}, log λ)`.
    pub fn param_jet(&self, p: &HPoint<T>, out: &mut [T]) -> T {
        let n = p.n();
        let eta = self.local(p);
        let mut g = [T::zero(); 16];
        let f = profile_jet(&eta, Some(&mut g[..2 * n + 1]), None);
        let v = self.amp * f;
        let two = lit::<T>(2.0);
        let lam = self.params.scale;
        out[0] = if self.params.alpha == T::zero() {
            self.amp_unit() * f
        } else {
            v / self.params.alpha
        };
        // ∂η/∂a_k from (a^{-1}∘ξ)_t = t − t_a − 2y_a·x + 2x_a·y, then δ_λ.
        for k in 0..n {
            out[1 + k] = self.amp * (-lam * g[k] + lam * lam * two * p.y[k] * g[2 * n]);
            out[1 + n + k] = self.amp * (-lam * g[n + k] - lam * lam * two * p.x[k] * g[2 * n]);
        }
        out[1 + 2 * n] = -self.amp * lam * lam * g[2 * n];
        let mut xf = two * eta.t * g[2 * n];
        for j in 0..n {
            xf += eta.x[j] * g[j] + eta.y[j] * g[n + j];
        }
        let q = lit::<T>((2 * n + 2) as f64);
        out[2 + 2 * n] = (q - two) / two * v + self.amp * xf;
        v
    }

    fn amp_unit(&self) -> T {
        self.c0 * self.params.scale.powf(lit::<T>(self.params.center.n() as f64))
    }
}

impl<T: Scalar> ScalarField<T> for Bubble<T> {
    fn n(&self) -> usize {
        self.params.center.n()
    }

    fn value(&self, p: &HPoint<T>) -> T {
        self.amp * profile_jet(&self.local(p), None, None)
    }

    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        profile_jet(&self.local(p), Some(g), None);
        self.map.pull_gradient(g);
        g.iter_mut().for_each(|v| *v *= self.amp);
        true
    }

    fn hessian(&self, p: &HPoint<T>, h: &mut [T]) -> bool {
        profile_jet(&self.local(p), None, Some(h));
        self.map.pull_hessian(h);
        h.iter_mut().for_each(|v| *v *= self.amp);
        true
    }
}

/// `w_{0,1} = c0 (t² + (1+|z|²)²)^{(2−Q)/4}`.
pub fn standard_bubble<T: Scalar>(cst: &Constants<T>) -> Bubble<T> {
    Bubble::new(BumpParams::unit(cst.n), cst)
}

/// `α w_{a,λ}`.
pub fn bubble<T: Scalar>(p: BumpParams<T>, cst: &Constants<T>) -> Bubble<T> {
    Bubble::new(p, cst)
}

/// `H(ξ) = (4/(t² + (1+|z|²)²))^{(Q−2)/4}`.
pub fn weight_h<T: Scalar>(p: &HPoint<T>) -> T {
    let q = lit::<T>((2 * p.n() + 2) as f64);
    let s = T::one() + p.z_norm2();
    (lit::<T>(4.0) / (p.t * p.t + s * s)).powf((q - lit(2.0)) / lit(4.0))
}

/// Cartesian gradient of `H`.
pub fn weight_h_gradient<T: Scalar>(p: &HPoint<T>, g: &mut [T]) -> T {
    let n = p.n();
    let d = 2 * n + 1;
    let f = profile_jet(p, Some(&mut g[..d]), None);
    // H = 4^{(Q−2)/4} f with the same profile f = D^{(2−Q)/4}.
    let q = lit::<T>((2 * n + 2) as f64);
    let c = lit::<T>(4.0).powf((q - lit(2.0)) / lit(4.0));
    g[..d].iter_mut().for_each(|v| *v *= c);
    c * f
}

/// `c(a) = a^{(2−Q)/2} S_n^Q / Q`.
pub fn energy_level<T: Scalar>(a: T, cst: &Constants<T>) -> Result<T> {
    if !(a > T::zero()) {
        return Err(Error::Invalid(format!("curvature level must be positive, got {}", to_f64(a))));
    }
    let two = lit::<T>(2.0);
    Ok(a.powf((two - cst.q) / two) * cst.sn.powf(cst.q) / cst.q)
}

/// `(2|J_C|)^{(Q−2)/(2Q)} / H` at `p`; identically 1.
pub fn weight_jacobian_ratio<T: Scalar>(p: &HPoint<T>) -> T {
    let q = lit::<T>((2 * p.n() + 2) as f64);
    let two = lit::<T>(2.0);
    (two * crate::group::cayley_jacobian(p)).powf((q - two) / (two * q)) / weight_h(p)
}

/// Peak value `α c0 λ^{(Q−2)/2}` of `α w_{a,λ}`.
pub fn peak_value<T: Scalar>(p: &BumpParams<T>, cst: &Constants<T>) -> T {
    p.alpha * cst.c0 * p.scale.powf((cst.q - lit(2.0)) / lit(2.0))
}

/// Inverts [`peak_value`] for `λ`.
pub fn scale_from_peak<T: Scalar>(peak: T, alpha: T, cst: &Constants<T>) -> T {
    (peak / (alpha * cst.c0)).powf(lit::<T>(2.0) / (cst.q - lit(2.0)))
}

/// `δ_λ` applied to `ξ`, re-exported for bubble-frame users.
pub fn dilate<T: Scalar>(lambda: T, p: &HPoint<T>) -> HPoint<T> {
    dilate_unchecked(lambda, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c0_for_n1_is_two() {
        let c0 = resolve_c0::<f64>(1).unwrap();
        assert!((c0 - 2.0).abs() < 1e-12, "{c0}");
        let (_, spread) = profile_ratio::<f64>(1, 50, 7);
        assert!(spread < 1e-10);
    }

    #[test]
    fn sobolev_constant_n1() {
        let s: f64 = sobolev_constant(1);
        assert!((s - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn h_at_origin_and_energy_levels() {
        assert!((weight_h(&HPoint::<f64>::origin(1)) - 2.0).abs() < 1e-15);
        let cst = Constants::<f64>::new(1).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((energy_level(1.0, &cst).unwrap() - pi2).abs() < 1e-12);
        // Q = 4: exponent (2−Q)/2 = −1.
        assert!((energy_level(16.0, &cst).unwrap() - pi2 / 16.0).abs() < 1e-12);
        assert!(energy_level(0.0, &cst).is_err());
    }

    #[test]
    fn standard_bubble_peak() {
        let cst = Constants::<f64>::new(1).unwrap();
        let w = standard_bubble(&cst);
        assert_eq!(w.value(&HPoint::origin(1)), cst.c0);
    }
}
