//! Prescribed-curvature functions `R`.

use std::sync::Arc;

use crate::field::{AffineMap, DynField, ScalarField};
use crate::fields::{GridField, GridSpec};
use crate::group::{compose, inverse, HPoint};
use crate::ops::cartesian_gradient;
use crate::{lit, to_f64, Error, Result, Scalar};

/// Which homogeneous polynomial-like family `Q^{(β)}` is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlatnessFamily {
    /// `Σ a_j|x_j|^β + b_j|y_j|^β + c|t|^{β/2}`.
    Even,
    /// `Σ a_j|x_j|^{β−1}x_j + b_j|y_j|^{β−1}y_j + c|t|^{β/2−1}t`.
    Signed,
}

/// `R(ξ) = r0 + Q^{(β)}(ξ̄^{-1} ∘ ξ)` with the remainder set to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Flatness<T: Scalar> {
    pub base: HPoint<T>,
    pub r0: T,
    pub beta: T,
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c: T,
    pub family: FlatnessFamily,
}

fn spow<T: Scalar>(x: T, e: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x.abs().powf(e)
    }
}

impl<T: Scalar> Flatness<T> {
    pub fn new(
        base: HPoint<T>,
        r0: T,
        beta: T,
        a: Vec<T>,
        b: Vec<T>,
        c: T,
        family: FlatnessFamily,
    ) -> Result<Self> {
        let n = base.n();
        if a.len() != n || b.len() != n {
            return Err(Error::Dimension { expected: n, got: a.len().min(b.len()) });
        }
        let q = (2 * n + 2) as f64;
        let bf = to_f64(beta);
        if !(bf > q - 2.0 && bf < q) {
            return Err(Error::BetaRange { beta: bf, lo: q - 2.0, hi: q });
        }
        if a.iter().chain(&b).any(|v| *v == T::zero()) || c == T::zero() {
            return Err(Error::Invalid("flatness coefficients must be nonzero".into()));
        }
        Ok(Flatness { base, r0, beta, a, b, c, family })
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// `Q^{(β)}(η)`.
    pub fn q_beta(&self, eta: &HPoint<T>) -> T {
        let half = self.beta / lit(2.0);
        let mut s = T::zero();
        match self.family {
            FlatnessFamily::Even => {
                for j in 0..self.n() {
                    s += self.a[j] * spow(eta.x[j], self.beta) + self.b[j] * spow(eta.y[j], self.beta);
                }
                s + self.c * spow(eta.t, half)
            }
            FlatnessFamily::Signed => {
                let one = T::one();
                for j in 0..self.n() {
                    s += self.a[j] * spow(eta.x[j], self.beta - one) * eta.x[j]
                        + self.b[j] * spow(eta.y[j], self.beta - one) * eta.y[j];
                }
                s + self.c * spow(eta.t, half - one) * eta.t
            }
        }
    }

    /// Cartesian gradient of `Q^{(β)}` at `η`.
    pub fn q_gradient(&self, eta: &HPoint<T>, g: &mut [T]) {
        let n = self.n();
        let one = T::one();
        let two = lit::<T>(2.0);
        let half = self.beta / two;
        match self.family {
            FlatnessFamily::Even => {
                for j in 0..n {
                    g[j] = self.a[j] * self.beta * spow(eta.x[j], self.beta - two) * eta.x[j];
                    g[n + j] = self.b[j] * self.beta * spow(eta.y[j], self.beta - two) * eta.y[j];
                }
                g[2 * n] = self.c * half * spow(eta.t, half - two) * eta.t;
            }
            FlatnessFamily::Signed => {
                for j in 0..n {
                    g[j] = self.a[j] * self.beta * spow(eta.x[j], self.beta - one);
                    g[n + j] = self.b[j] * self.beta * spow(eta.y[j], self.beta - one);
                }
                g[2 * n] = self.c * half * spow(eta.t, half - one);
            }
        }
    }

    fn local(&self, p: &HPoint<T>) -> HPoint<T> {
        compose(&inverse(&self.base), p)
    }
}

/// `R(ξ) = level + Σ_{m∈Z} ψ(ξ̂^{-m} ∘ ξ)` with one well
/// `ψ(η) = h (1 − Φ(η))³₊`, `Φ = Σ a_j|x_j|^β + b_j|y_j|^β + c|t|^{β/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSum<T: Scalar> {
    pub level: T,
    pub period: HPoint<T>,
    pub height: T,
    pub beta: T,
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c: T,
}

impl<T: Scalar> PeriodicSum<T> {
    pub fn new(level: T, period: HPoint<T>, height: T, beta: T, a: Vec<T>, b: Vec<T>, c: T) -> Result<Self> {
        let n = period.n();
        if a.len() != n || b.len() != n {
            return Err(Error::Dimension { expected: n, got: a.len().min(b.len()) });
        }
        if period.is_origin() {
            return Err(Error::Invalid("period element must be nonzero".into()));
        }
        if !(beta >= lit(2.0)) {
            return Err(Error::Invalid(format!("well exponent must be at least 2, got {}", to_f64(beta))));
        }
        if a.iter().chain(&b).any(|v| !(*v > T::zero())) || !(c > T::zero()) {
            return Err(Error::Invalid("well coefficients must be positive".into()));
        }
        Ok(PeriodicSum { level, period, height, beta, a, b, c })
    }

    pub fn n(&self) -> usize {
        self.period.n()
    }

    /// `ξ̂^m`.
    pub fn well_center(&self, m: i64) -> HPoint<T> {
        scale_point(&self.period, lit(m as f64))
    }

    fn phi(&self, eta: &HPoint<T>) -> T {
        let mut s = self.c * spow(eta.t, self.beta / lit(2.0));
        for j in 0..self.n() {
            s += self.a[j] * spow(eta.x[j], self.beta) + self.b[j] * spow(eta.y[j], self.beta);
        }
        s
    }

    fn phi_gradient(&self, eta: &HPoint<T>, g: &mut [T]) {
        let n = self.n();
        let two = lit::<T>(2.0);
        for j in 0..n {
            g[j] = self.a[j] * self.beta * spow(eta.x[j], self.beta - two) * eta.x[j];
            g[n + j] = self.b[j] * self.beta * spow(eta.y[j], self.beta - two) * eta.y[j];
        }
        let half = self.beta / two;
        g[2 * n] = self.c * half * spow(eta.t, half - two) * eta.t;
    }

    /// Indices `m` with `ξ` inside the support of the `m`-th well. Each local
    /// coordinate of `ξ̂^{-m} ∘ ξ` is `c_k − m d_k`, linear in `m`.
    pub fn wells_near(&self, p: &HPoint<T>) -> Vec<i64> {
        let n = self.n();
        let d = 2 * n + 1;
        let two = lit::<T>(2.0);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for k in 0..d {
            let (ck, dk, rk) = if k < n {
                (p.x[k], self.period.x[k], self.a[k].powf(-T::one() / self.beta))
            } else if k < 2 * n {
                (p.y[k - n], self.period.y[k - n], self.b[k - n].powf(-T::one() / self.beta))
            } else {
                let mut tw = self.period.t;
                for j in 0..n {
                    tw += two * (self.period.y[j] * p.x[j] - self.period.x[j] * p.y[j]);
                }
                (p.t, tw, self.c.powf(-two / self.beta))
            };
            let (ck, dk, rk) = (to_f64(ck), to_f64(dk), to_f64(rk));
            if dk == 0.0 {
                if ck.abs() >= rk {
                    return Vec::new();
                }
                continue;
            }
            let (a, b) = ((ck - rk) / dk, (ck + rk) / dk);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Vec::new();
        }
        let (m0, m1) = (lo.floor() as i64, hi.ceil() as i64);
        (m0..=m1.min(m0 + 1000)).collect()
    }

    fn value(&self, p: &HPoint<T>) -> T {
        let mut s = self.level;
        for m in self.wells_near(p) {
            let eta = compose(&inverse(&self.well_center(m)), p);
            let f = T::one() - self.phi(&eta);
            if f > T::zero() {
                s += self.height * f * f * f;
            }
        }
        s
    }

    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) {
        let d = 2 * self.n() + 1;
        g[..d].iter_mut().for_each(|v| *v = T::zero());
        let mut gl = vec![T::zero(); d];
        for m in self.wells_near(p) {
            let a = inverse(&self.well_center(m));
            let eta = compose(&a, p);
            let f = T::one() - self.phi(&eta);
            if f > T::zero() {
                self.phi_gradient(&eta, &mut gl);
                let c = -lit::<T>(3.0) * self.height * f * f;
                gl.iter_mut().for_each(|v| *v *= c);
                AffineMap { a, s: T::one() }.pull_gradient(&mut gl);
                for k in 0..d {
                    g[k] += gl[k];
                }
            }
        }
    }
}

/// Componentwise `m ξ` (equal to `ξ^m` for integer `m`).
fn scale_point<T: Scalar>(p: &HPoint<T>, m: T) -> HPoint<T> {
    let x: Vec<T> = p.x.iter().map(|v| *v * m).collect();
    let y: Vec<T> = p.y.iter().map(|v| *v * m).collect();
    HPoint::new(&x, &y, p.t * m)
}

/// `R = level + amp · tanh(x_axis / width)`: `X_axis R ≥ 0` everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct Ramp<T: Scalar> {
    pub n: usize,
    pub level: T,
    pub amp: T,
    pub width: T,
    pub axis: usize,
}

/// One perturbed component `Ω̃_l^{(i)}`, flood-filled on a grid in the
/// coordinates `η = (e_i)^{-l} ∘ ξ`.
#[derive(Clone, Debug)]
pub struct Component<T: Scalar> {
    pub anchor: HPoint<T>,
    pub grid: GridSpec<T>,
    pub mask: Vec<bool>,
}

impl<T: Scalar> Component<T> {
    fn contains_node(&self, eta: &HPoint<T>) -> bool {
        let d = self.grid.dim();
        let counts = self.grid.counts();
        let mut multi = [0usize; 16];
        for k in 0..d {
            let r = to_f64((eta.coord(k) - self.grid.lo[k]) / self.grid.spacing[k]).round();
            if r < 0.0 || r > (counts[k] - 1) as f64 {
                return false;
            }
            multi[k] = r as usize;
        }
        self.mask[self.grid.index(&multi[..d])]
    }

    pub fn node_count(&self) -> usize {
        self.mask.iter().filter(|v| **v).count()
    }
}

/// `R_{ε,k,m,l}`: `ε(ψ((e_i)^{-l}∘ξ) − ψ_∞) + R_∞ − A_{√l}` on `Ω̃_l^{(i)}`,
/// the base `R` elsewhere.
#[derive(Clone)]
pub struct Perturbation<T: Scalar> {
    pub base: RSpec<T>,
    pub psi: DynField<T>,
    pub psi_inf: T,
    pub eps: T,
    pub l: T,
    pub r_inf: T,
    pub a_sqrt_l: T,
    pub components: Vec<Component<T>>,
}

impl<T: Scalar> std::fmt::Debug for Perturbation<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Perturbation")
            .field("base", &self.base)
            .field("eps", &self.eps)
            .field("l", &self.l)
            .field("r_inf", &self.r_inf)
            .field("a_sqrt_l", &self.a_sqrt_l)
            .field("components", &self.components.len())
            .finish()
    }
}

impl<T: Scalar> Perturbation<T> {
    /// The perturbed expression on component `i` (without the membership test).
    pub fn candidate(&self, i: usize, p: &HPoint<T>) -> T {
        let eta = compose(&inverse(&self.components[i].anchor), p);
        self.eps * (self.psi.value(&eta) - self.psi_inf) + self.r_inf - self.a_sqrt_l
    }

    /// Index of the component containing `p`, if any.
    pub fn component_of(&self, p: &HPoint<T>) -> Option<usize> {
        for (i, c) in self.components.iter().enumerate() {
            let eta = compose(&inverse(&c.anchor), p);
            if c.contains_node(&eta) && self.candidate(i, p) > self.base.value(p) {
                return Some(i);
            }
        }
        None
    }
}

/// A prescribed curvature function.
#[derive(Clone, Debug)]
pub enum RSpec<T: Scalar> {
    Constant { n: usize, value: T },
    Flatness(Flatness<T>),
    PeriodicSum(PeriodicSum<T>),
    Ramp(Ramp<T>),
    Perturbation(Arc<Perturbation<T>>),
    /// `ξ ↦ inner(by ∘ ξ)`, the curvature moved with a translated field.
    Translated { inner: Box<RSpec<T>>, by: HPoint<T> },
    /// Grid samples (interpolated, zero outside the box).
    Sampled(Arc<GridField<T>>),
}

impl<T: Scalar> RSpec<T> {
    pub fn constant(n: usize, value: T) -> Self {
        RSpec::Constant { n, value }
    }

    pub fn translated(self, by: HPoint<T>) -> Self {
        RSpec::Translated { inner: Box::new(self), by }
    }

    /// Growth exponent `γ` with `|R(ξ)| = O(|ξ|^γ)`.
    pub fn growth(&self) -> T {
        match self {
            RSpec::Flatness(f) => f.beta,
            RSpec::Translated { inner, .. } => inner.growth(),
            _ => T::zero(),
        }
    }

    /// `lim_{|ξ|→∞} R`, when the family has one.
    pub fn limit_at_infinity(&self) -> Option<T> {
        match self {
            RSpec::Constant { value, .. } => Some(*value),
            RSpec::Perturbation(p) => p.base.limit_at_infinity(),
            RSpec::Translated { inner, .. } => inner.limit_at_infinity(),
            _ => None,
        }
    }

    /// `sup R` when known in closed form.
    pub fn max_value(&self) -> Option<T> {
        match self {
            RSpec::Constant { value, .. } => Some(*value),
            RSpec::PeriodicSum(p) => Some(p.level + p.height.max(T::zero())),
            RSpec::Ramp(r) => Some(r.level + r.amp.abs()),
            RSpec::Flatness(f) => {
                let nonpos = f.a.iter().chain(&f.b).all(|v| *v < T::zero()) && f.c < T::zero();
                (f.family == FlatnessFamily::Even && nonpos).then_some(f.r0)
            }
            RSpec::Translated { inner, .. } => inner.max_value(),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RSpec::Constant { .. } => "constant",
            RSpec::Flatness(_) => "flatness",
            RSpec::PeriodicSum(_) => "periodic_sum",
            RSpec::Ramp(_) => "ramp",
            RSpec::Perturbation(_) => "perturbation",
            RSpec::Translated { .. } => "translated",
            RSpec::Sampled(_) => "sampled",
        }
    }
}

impl<T: Scalar> ScalarField<T> for RSpec<T> {
    fn n(&self) -> usize {
        match self {
            RSpec::Constant { n, .. } => *n,
            RSpec::Flatness(f) => f.n(),
            RSpec::PeriodicSum(p) => p.n(),
            RSpec::Ramp(r) => r.n,
            RSpec::Perturbation(p) => p.base.n(),
            RSpec::Translated { inner, .. } => inner.n(),
            RSpec::Sampled(g) => g.n(),
        }
    }

    fn value(&self, p: &HPoint<T>) -> T {
        match self {
            RSpec::Constant { value, .. } => *value,
            RSpec::Flatness(f) => f.r0 + f.q_beta(&f.local(p)),
            RSpec::PeriodicSum(s) => s.value(p),
            RSpec::Ramp(r) => r.level + r.amp * (p.coord(r.axis) / r.width).tanh(),
            RSpec::Perturbation(pt) => match pt.component_of(p) {
                Some(i) => pt.candidate(i, p),
                None => pt.base.value(p),
            },
            RSpec::Translated { inner, by } => inner.value(&compose(by, p)),
            RSpec::Sampled(g) => g.value(p),
        }
    }

    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        let d = 2 * self.n() + 1;
        match self {
            RSpec::Constant { .. } => {
                g[..d].iter_mut().for_each(|v| *v = T::zero());
                true
            }
            RSpec::Flatness(f) => {
                f.q_gradient(&f.local(p), g);
                AffineMap { a: inverse(&f.base), s: T::one() }.pull_gradient(g);
                true
            }
            RSpec::PeriodicSum(s) => {
                s.gradient(p, g);
                true
            }
            RSpec::Ramp(r) => {
                g[..d].iter_mut().for_each(|v| *v = T::zero());
                let th = (p.coord(r.axis) / r.width).tanh();
                g[r.axis] = r.amp / r.width * (T::one() - th * th);
                true
            }
            RSpec::Perturbation(pt) => match pt.component_of(p) {
                Some(i) => {
                    let a = inverse(&pt.components[i].anchor);
                    match cartesian_gradient(&pt.psi, &compose(&a, p)) {
                        Ok(gl) => {
                            g[..d].copy_from_slice(&gl);
                            AffineMap { a, s: T::one() }.pull_gradient(g);
                            g[..d].iter_mut().for_each(|v| *v *= pt.eps);
                            true
                        }
                        Err(_) => false,
                    }
                }
                None => pt.base.gradient(p, g),
            },
            RSpec::Translated { inner, by } => {
                if !inner.gradient(&compose(by, p), g) {
                    return false;
                }
                AffineMap { a: by.clone(), s: T::one() }.pull_gradient(g);
                true
            }
            RSpec::Sampled(_) => false,
        }
    }

    fn grid(&self) -> Option<&GridSpec<T>> {
        match self {
            RSpec::Sampled(g) => g.grid(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::dilate_unchecked;
    use crate::ops::cartesian_gradient;

    fn fd_check(r: &RSpec<f64>, p: &HPoint<f64>) {
        let mut g = vec![0.0; 3];
        assert!(r.gradient(p, &mut g));
        for k in 0..3 {
            let h = 1e-6;
            let (mut a, mut b) = (p.clone(), p.clone());
            a.set_coord(k, p.coord(k) + h);
            b.set_coord(k, p.coord(k) - h);
            let fd = (r.value(&a) - r.value(&b)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()), "k={k} fd={fd} g={}", g[k]);
        }
    }

    #[test]
    fn flatness_gradients() {
        for fam in [FlatnessFamily::Even, FlatnessFamily::Signed] {
            let f = Flatness::new(HPoint::xyt(0.5, -0.2, 0.3), 2.0, 3.0, vec![-1.0], vec![-0.5], 0.7, fam).unwrap();
            fd_check(&RSpec::Flatness(f), &HPoint::xyt(1.1, 0.4, -0.9));
        }
    }

    #[test]
    fn flatness_validation() {
        let o = HPoint::<f64>::origin(1);
        assert!(matches!(
            Flatness::new(o.clone(), 1.0, 2.0, vec![1.0], vec![1.0], 1.0, FlatnessFamily::Even),
            Err(Error::BetaRange { .. })
        ));
        assert!(Flatness::new(o, 1.0, 3.0, vec![0.0], vec![1.0], 1.0, FlatnessFamily::Even).is_err());
    }

    #[test]
    fn flatness_homogeneity() {
        let f = Flatness::new(HPoint::origin(1), 0.0, 3.0, vec![1.3], vec![-0.4], 0.9, FlatnessFamily::Even).unwrap();
        let p = HPoint::xyt(0.7, -0.3, 0.5);
        let lam: f64 = 1.7;
        let lhs = f.q_beta(&dilate_unchecked(lam, &p));
        assert!((lhs - lam.powf(3.0) * f.q_beta(&p)).abs() < 1e-12);
    }

    #[test]
    fn periodic_sum_wells() {
        let r = PeriodicSum::<f64>::new(1.0, HPoint::xyt(4.0, 0.0, 0.0), 0.5, 2.0, vec![1.0], vec![1.0], 1.0).unwrap();
        let rs = RSpec::PeriodicSum(r.clone());
        for m in -2..=2 {
            let c = r.well_center(m);
            assert!((rs.value(&c) - 1.5).abs() < 1e-14);
        }
        assert_eq!(rs.value(&HPoint::xyt(2.0, 0.0, 0.0)), 1.0);
        fd_check(&rs, &HPoint::xyt(4.3, 0.2, -0.1));
        fd_check(&rs, &HPoint::xyt(-3.8, -0.3, 0.2));
        // The twisted t-coordinate: a point displaced in y sees a shifted well.
        let p = compose(&r.well_center(1), &HPoint::xyt(0.1, 0.2, 0.3));
        assert!(r.wells_near(&p).contains(&1));
        assert!(rs.value(&p) > 1.0);
    }

    #[test]
    fn ramp_and_translation() {
        let r = RSpec::Ramp(Ramp { n: 1, level: 1.0, amp: 0.3, width: 2.0, axis: 0 });
        fd_check(&r, &HPoint::xyt(0.4, 1.0, -2.0));
        let a = HPoint::xyt(1.0, -2.0, 0.5);
        let t = r.clone().translated(a.clone());
        let p = HPoint::xyt(0.2, 0.3, 0.4);
        assert_eq!(t.value(&p), r.value(&compose(&a, &p)));
        let g = cartesian_gradient(&t, &p).unwrap();
        let mut h = vec![0.0; 3];
        assert!(t.gradient(&p, &mut h));
        assert_eq!(g, h);
        fd_check(&t, &p);
    }
}
