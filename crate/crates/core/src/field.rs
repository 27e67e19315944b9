//! Scalar fields on `H^n` and the affine compositions used throughout
//! (left translations, dilations, linear combinations).

use std::sync::Arc;

use crate::fields::GridSpec;
use crate::group::{compose, dilate_unchecked, inverse, Coords, HPoint};
use crate::{lit, Scalar};

/// A real function on `H^n`.
///
/// `gradient`/`hessian` return `false` when no closed form is available; the
/// operators in [`crate::ops`] then fall back to finite differences. Grid
/// sampled fields report their grid so the stencils use its spacing.
pub trait ScalarField<T: Scalar>: Send + Sync {
    fn n(&self) -> usize;

    fn value(&self, p: &HPoint<T>) -> T;

    /// Cartesian gradient `[∂x_1..∂x_n, ∂y_1..∂y_n, ∂t]`.
    fn gradient(&self, _p: &HPoint<T>, _g: &mut [T]) -> bool {
        false
    }

    /// Cartesian Hessian, row-major `(2n+1)×(2n+1)`.
    fn hessian(&self, _p: &HPoint<T>, _h: &mut [T]) -> bool {
        false
    }

    fn grid(&self) -> Option<&GridSpec<T>> {
        None
    }

    /// Finite-difference spacing per coordinate for fields built from grid
    /// samples; `None` means smooth enough for the default tiny step.
    fn fd_spacing(&self) -> Option<Coords<T>> {
        self.grid().map(|g| g.spacing.clone())
    }
}

impl<T: Scalar, F: ScalarField<T> + ?Sized> ScalarField<T> for &F {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn value(&self, p: &HPoint<T>) -> T {
        (**self).value(p)
    }
    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        (**self).gradient(p, g)
    }
    fn hessian(&self, p: &HPoint<T>, h: &mut [T]) -> bool {
        (**self).hessian(p, h)
    }
    fn grid(&self) -> Option<&GridSpec<T>> {
        (**self).grid()
    }
    fn fd_spacing(&self) -> Option<Coords<T>> {
        (**self).fd_spacing()
    }
}

impl<T: Scalar, F: ScalarField<T> + ?Sized> ScalarField<T> for Box<F> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn value(&self, p: &HPoint<T>) -> T {
        (**self).value(p)
    }
    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        (**self).gradient(p, g)
    }
    fn hessian(&self, p: &HPoint<T>, h: &mut [T]) -> bool {
        (**self).hessian(p, h)
    }
    fn grid(&self) -> Option<&GridSpec<T>> {
        (**self).grid()
    }
    fn fd_spacing(&self) -> Option<Coords<T>> {
        (**self).fd_spacing()
    }
}

impl<T: Scalar, F: ScalarField<T> + ?Sized> ScalarField<T> for Arc<F> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn value(&self, p: &HPoint<T>) -> T {
        (**self).value(p)
    }
    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        (**self).gradient(p, g)
    }
    fn hessian(&self, p: &HPoint<T>, h: &mut [T]) -> bool {
        (**self).hessian(p, h)
    }
    fn grid(&self) -> Option<&GridSpec<T>> {
        (**self).grid()
    }
    fn fd_spacing(&self) -> Option<Coords<T>> {
        (**self).fd_spacing()
    }
}

pub type DynField<T> = Arc<dyn ScalarField<T>>;

type ValueFn<T> = dyn Fn(&HPoint<T>) -> T + Send + Sync;
type GradFn<T> = dyn Fn(&HPoint<T>, &mut [T]) + Send + Sync;

/// Closure-backed field, optionally with a closed-form gradient.
pub struct FnField<T: Scalar> {
    n: usize,
    f: Box<ValueFn<T>>,
    g: Option<Box<GradFn<T>>>,
    h: Option<Box<GradFn<T>>>,
}

impl<T: Scalar> FnField<T> {
    pub fn new(n: usize, f: impl Fn(&HPoint<T>) -> T + Send + Sync + 'static) -> Self {
        FnField { n, f: Box::new(f), g: None, h: None }
    }

    pub fn with_gradient(mut self, g: impl Fn(&HPoint<T>, &mut [T]) + Send + Sync + 'static) -> Self {
        self.g = Some(Box::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&HPoint<T>, &mut [T]) + Send + Sync + 'static) -> Self {
        self.h = Some(Box::new(h));
        self
    }
}

impl<T: Scalar> ScalarField<T> for FnField<T> {
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, p: &HPoint<T>) -> T {
        (self.f)(p)
    }
    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        match &self.g {
            Some(gf) => {
                gf(p, g);
                true
            }
            None => false,
        }
    }
    fn hessian(&self, p: &HPoint<T>, h: &mut [T]) -> bool {
        match &self.h {
            Some(hf) => {
                hf(p, h);
                true
            }
            None => false,
        }
    }
}

/// The zero function.
pub struct Zero(pub usize);

impl<T: Scalar> ScalarField<T> for Zero {
    fn n(&self) -> usize {
        self.0
    }
    fn value(&self, _p: &HPoint<T>) -> T {
        T::zero()
    }
    fn gradient(&self, _p: &HPoint<T>, g: &mut [T]) -> bool {
        g.iter_mut().for_each(|v| *v = T::zero());
        true
    }
    fn hessian(&self, _p: &HPoint<T>, h: &mut [T]) -> bool {
        h.iter_mut().for_each(|v| *v = T::zero());
        true
    }
}

/// A constant function.
pub struct Constant<T: Scalar>(pub usize, pub T);

impl<T: Scalar> ScalarField<T> for Constant<T> {
    fn n(&self) -> usize {
        self.0
    }
    fn value(&self, _p: &HPoint<T>) -> T {
        self.1
    }
    fn gradient(&self, _p: &HPoint<T>, g: &mut [T]) -> bool {
        g.iter_mut().for_each(|v| *v = T::zero());
        true
    }
    fn hessian(&self, _p: &HPoint<T>, h: &mut [T]) -> bool {
        h.iter_mut().for_each(|v| *v = T::zero());
        true
    }
}

/// The affine map `η ↦ a ∘ δ_s(η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap<T: Scalar> {
    pub a: HPoint<T>,
    pub s: T,
}

impl<T: Scalar> AffineMap<T> {
    pub fn identity(n: usize) -> Self {
        AffineMap { a: HPoint::origin(n), s: T::one() }
    }

    pub fn apply(&self, eta: &HPoint<T>) -> HPoint<T> {
        if self.s == T::one() {
            compose(&self.a, eta)
        } else {
            compose(&self.a, &dilate_unchecked(self.s, eta))
        }
    }

    /// The inverse map, `ξ ↦ δ_{1/s}(a^{-1} ∘ ξ) = δ_{1/s}(a^{-1}) ∘ δ_{1/s}(ξ)`.
    pub fn inverse(&self) -> Self {
        let r = T::one() / self.s;
        AffineMap { a: dilate_unchecked(r, &inverse(&self.a)), s: r }
    }

    /// Jacobian `∂ξ/∂η`, row-major.
    pub fn jacobian(&self) -> Vec<T> {
        let n = self.a.n();
        let d = 2 * n + 1;
        let mut j = vec![T::zero(); d * d];
        let two = lit::<T>(2.0);
        for k in 0..2 * n {
            j[k * d + k] = self.s;
        }
        j[d * d - 1] = self.s * self.s;
        for k in 0..n {
            j[2 * n * d + k] = two * self.a.y[k] * self.s;
            j[2 * n * d + n + k] = -two * self.a.x[k] * self.s;
        }
        j
    }

    /// `g ← Jᵀ g`.
    pub fn pull_gradient(&self, g: &mut [T]) {
        let n = self.a.n();
        let two = lit::<T>(2.0);
        let gt = g[2 * n];
        for k in 0..n {
            g[k] = self.s * (g[k] + two * self.a.y[k] * gt);
            g[n + k] = self.s * (g[n + k] - two * self.a.x[k] * gt);
        }
        g[2 * n] = self.s * self.s * gt;
    }

    /// `h ← Jᵀ h J`.
    pub fn pull_hessian(&self, h: &mut [T]) {
        let d = 2 * self.a.n() + 1;
        let j = self.jacobian();
        let mut tmp = vec![T::zero(); d * d];
        for r in 0..d {
            for c in 0..d {
                let mut s = T::zero();
                for k in 0..d {
                    s += h[r * d + k] * j[k * d + c];
                }
                tmp[r * d + c] = s;
            }
        }
        for r in 0..d {
            for c in 0..d {
                let mut s = T::zero();
                for k in 0..d {
                    s += j[k * d + r] * tmp[k * d + c];
                }
                h[r * d + c] = s;
            }
        }
    }
}

/// `η ↦ factor · inner(map(η))`.
pub struct Composed<T: Scalar, F> {
    pub inner: F,
    pub map: AffineMap<T>,
    pub factor: T,
}

impl<T: Scalar, F: ScalarField<T>> Composed<T, F> {
    pub fn new(inner: F, map: AffineMap<T>, factor: T) -> Self {
        Composed { inner, map, factor }
    }
}

impl<T: Scalar, F: ScalarField<T>> ScalarField<T> for Composed<T, F> {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn value(&self, p: &HPoint<T>) -> T {
        self.factor * self.inner.value(&self.map.apply(p))
    }
    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        if self.inner.grid().is_some() || !self.inner.gradient(&self.map.apply(p), g) {
            return false;
        }
        self.map.pull_gradient(g);
        g.iter_mut().for_each(|v| *v *= self.factor);
        true
    }
    fn hessian(&self, p: &HPoint<T>, h: &mut [T]) -> bool {
        if self.inner.grid().is_some() || !self.inner.hessian(&self.map.apply(p), h) {
            return false;
        }
        self.map.pull_hessian(h);
        h.iter_mut().for_each(|v| *v *= self.factor);
        true
    }
    fn fd_spacing(&self) -> Option<Coords<T>> {
        let n = self.inner.n();
        self.inner.fd_spacing().map(|mut sp| {
            for (k, v) in sp.iter_mut().enumerate() {
                *v = if k < 2 * n { *v / self.map.s } else { *v / (self.map.s * self.map.s) };
            }
            sp
        })
    }
}

/// `Σ c_i f_i`.
pub struct LinearCombination<T: Scalar> {
    pub terms: Vec<(T, DynField<T>)>,
}

impl<T: Scalar> LinearCombination<T> {
    pub fn new(terms: Vec<(T, DynField<T>)>) -> Self {
        assert!(!terms.is_empty(), "empty linear combination");
        LinearCombination { terms }
    }
}

impl<T: Scalar> ScalarField<T> for LinearCombination<T> {
    fn n(&self) -> usize {
        self.terms[0].1.n()
    }
    fn value(&self, p: &HPoint<T>) -> T {
        self.terms.iter().fold(T::zero(), |s, (c, f)| s + *c * f.value(p))
    }
    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        let mut buf = vec![T::zero(); g.len()];
        g.iter_mut().for_each(|v| *v = T::zero());
        for (c, f) in &self.terms {
            if f.grid().is_some() || !f.gradient(p, &mut buf) {
                return false;
            }
            for (a, b) in g.iter_mut().zip(&buf) {
                *a += *c * *b;
            }
        }
        true
    }
    fn hessian(&self, p: &HPoint<T>, h: &mut [T]) -> bool {
        let mut buf = vec![T::zero(); h.len()];
        h.iter_mut().for_each(|v| *v = T::zero());
        for (c, f) in &self.terms {
            if f.grid().is_some() || !f.hessian(p, &mut buf) {
                return false;
            }
            for (a, b) in h.iter_mut().zip(&buf) {
                *a += *c * *b;
            }
        }
        true
    }
    fn fd_spacing(&self) -> Option<Coords<T>> {
        let mut out: Option<Coords<T>> = None;
        for (_, f) in &self.terms {
            if let Some(sp) = f.fd_spacing() {
                out = Some(match out {
                    None => sp,
                    Some(o) => o.iter().zip(&sp).map(|(a, b)| a.min(*b)).collect(),
                });
            }
        }
        out
    }
}
