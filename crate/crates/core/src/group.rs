//! Heisenberg group algebra: group law, gauge norm, dilations, CR inversion
//! and the Cayley transform.
//!
//! Coordinates are stored as `x`, `y` (length `n`) and `t`. Flattened
//! coordinate vectors, used for Cartesian derivatives and Jacobians, are laid
//! out as `[x_1..x_n, y_1..y_n, t]`.

use num_complex::Complex;
use smallvec::SmallVec;

use crate::{lit, to_f64, Error, Result, Scalar};

pub type Coords<T> = SmallVec<[T; 4]>;

/// A point `(x, y, t)` of the Heisenberg group `H^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HPoint<T: Scalar> {
    pub x: Coords<T>,
    pub y: Coords<T>,
    pub t: T,
}

impl<T: Scalar> HPoint<T> {
    pub fn new(x: &[T], y: &[T], t: T) -> Self {
        assert_eq!(x.len(), y.len(), "x and y must have the same length");
        HPoint {
            x: x.iter().copied().collect(),
            y: y.iter().copied().collect(),
            t,
        }
    }

    pub fn origin(n: usize) -> Self {
        HPoint {
            x: SmallVec::from_elem(T::zero(), n),
            y: SmallVec::from_elem(T::zero(), n),
            t: T::zero(),
        }
    }

    /// `n = 1` shorthand.
    pub fn xyt(x: T, y: T, t: T) -> Self {
        Self::new(&[x], &[y], t)
    }

    /// Builds a point from `[x_1..x_n, y_1..y_n, t]`.
    pub fn from_coords(c: &[T]) -> Self {
        assert!(c.len() % 2 == 1, "coordinate vector must have odd length");
        let n = c.len() / 2;
        Self::new(&c[..n], &c[n..2 * n], c[2 * n])
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn coords(&self) -> Coords<T> {
        let mut c: Coords<T> = SmallVec::with_capacity(2 * self.n() + 1);
        c.extend_from_slice(&self.x);
        c.extend_from_slice(&self.y);
        c.push(self.t);
        c
    }

    pub fn coord(&self, i: usize) -> T {
        let n = self.n();
        if i < n {
            self.x[i]
        } else if i < 2 * n {
            self.y[i - n]
        } else {
            self.t
        }
    }

    pub fn set_coord(&mut self, i: usize, v: T) {
        let n = self.n();
        if i < n {
            self.x[i] = v
        } else if i < 2 * n {
            self.y[i - n] = v
        } else {
            self.t = v
        }
    }

    /// `|z|^2`.
    pub fn z_norm2(&self) -> T {
        self.x
            .iter()
            .zip(&self.y)
            .fold(T::zero(), |s, (&a, &b)| s + a * a + b * b)
    }

    /// Complex view `z_j = x_j + i y_j`.
    pub fn z(&self) -> Vec<Complex<T>> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(&a, &b)| Complex::new(a, b))
            .collect()
    }

    pub fn is_origin(&self) -> bool {
        self.t == T::zero() && self.z_norm2() == T::zero()
    }

    pub fn cast<U: Scalar>(&self) -> HPoint<U> {
        HPoint {
            x: self.x.iter().map(|&v| lit::<U>(to_f64(v))).collect(),
            y: self.y.iter().map(|&v| lit::<U>(to_f64(v))).collect(),
            t: lit::<U>(to_f64(self.t)),
        }
    }
}

/// Homogeneous dimension `Q = 2n + 2`.
pub fn homogeneous_dim(n: usize) -> usize {
    2 * n + 2
}

/// `b · ω(a, b)`: the twist `2 (y_a·x_b − x_a·y_b)` of the group law.
#[inline]
fn twist<T: Scalar>(a: &HPoint<T>, b: &HPoint<T>) -> T {
    let mut s = T::zero();
    for j in 0..a.n() {
        s += a.y[j] * b.x[j] - a.x[j] * b.y[j];
    }
    s + s
}

/// Group law `a ∘ b = (x_a+x_b, y_a+y_b, t_a+t_b+2(y_a·x_b − x_a·y_b))`.
///
/// With this sign the fields `X_j = ∂x_j + 2y_j ∂t`, `Y_j = ∂y_j − 2x_j ∂t`
/// are left-invariant.
pub fn compose<T: Scalar>(a: &HPoint<T>, b: &HPoint<T>) -> HPoint<T> {
    debug_assert_eq!(a.n(), b.n());
    HPoint {
        x: a.x.iter().zip(&b.x).map(|(&p, &q)| p + q).collect(),
        y: a.y.iter().zip(&b.y).map(|(&p, &q)| p + q).collect(),
        t: a.t + b.t + twist(a, b),
    }
}

/// Writes `a ∘ b` into `out` without allocating.
pub fn compose_into<T: Scalar>(a: &HPoint<T>, b: &HPoint<T>, out: &mut HPoint<T>) {
    let tw = twist(a, b);
    for j in 0..a.n() {
        out.x[j] = a.x[j] + b.x[j];
        out.y[j] = a.y[j] + b.y[j];
    }
    out.t = a.t + b.t + tw;
}

pub fn inverse<T: Scalar>(p: &HPoint<T>) -> HPoint<T> {
    HPoint {
        x: p.x.iter().map(|&v| -v).collect(),
        y: p.y.iter().map(|&v| -v).collect(),
        t: -p.t,
    }
}

/// Koranyi gauge `(|z|^4 + t^2)^{1/4}`.
pub fn gauge_norm<T: Scalar>(p: &HPoint<T>) -> T {
    let r2 = p.z_norm2();
    (r2 * r2 + p.t * p.t).sqrt().sqrt()
}

/// `d(a, b) = |b^{-1} ∘ a|`; symmetric and left-invariant.
pub fn dist<T: Scalar>(a: &HPoint<T>, b: &HPoint<T>) -> T {
    gauge_norm(&compose(&inverse(b), a))
}

pub fn dilate<T: Scalar>(lambda: T, p: &HPoint<T>) -> Result<HPoint<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::NonPositiveScale(to_f64(lambda)));
    }
    Ok(dilate_unchecked(lambda, p))
}

#[inline]
pub fn dilate_unchecked<T: Scalar>(lambda: T, p: &HPoint<T>) -> HPoint<T> {
    HPoint {
        x: p.x.iter().map(|&v| lambda * v).collect(),
        y: p.y.iter().map(|&v| lambda * v).collect(),
        t: lambda * lambda * p.t,
    }
}

/// CR inversion
/// `x̌ = −(x t + y|z|^2)/|ξ|^4`, `y̌ = (y t − x|z|^2)/|ξ|^4`, `ť = t/|ξ|^4`.
pub fn cr_inversion<T: Scalar>(p: &HPoint<T>) -> Result<HPoint<T>> {
    let r2 = p.z_norm2();
    let g4 = r2 * r2 + p.t * p.t;
    if g4 == T::zero() {
        return Err(Error::OriginInversion);
    }
    Ok(HPoint {
        x: p.x
            .iter()
            .zip(&p.y)
            .map(|(&x, &y)| -(x * p.t + y * r2) / g4)
            .collect(),
        y: p.x
            .iter()
            .zip(&p.y)
            .map(|(&x, &y)| (y * p.t - x * r2) / g4)
            .collect(),
        t: p.t / g4,
    })
}

/// Cayley transform `H^n → S^{2n+1} ⊂ C^{n+1}`:
/// `ζ' = 2z/(1+|z|^2+it)`, `ζ_{n+1} = (1−|z|^2−it)/(1+|z|^2+it)`.
pub fn cayley<T: Scalar>(p: &HPoint<T>) -> Vec<Complex<T>> {
    let r2 = p.z_norm2();
    let w = Complex::new(T::one() + r2, p.t);
    let two = lit::<T>(2.0);
    let mut out: Vec<Complex<T>> = p.z().into_iter().map(|z| z * two / w).collect();
    out.push(Complex::new(T::one() - r2, -p.t) / w);
    out
}

/// Inverse Cayley transform: `z = ζ'/(1+ζ_{n+1})`, `t = Im(2/(1+ζ_{n+1}))`.
pub fn cayley_inverse<T: Scalar>(zeta: &[Complex<T>]) -> Result<HPoint<T>> {
    let n = zeta.len() - 1;
    let den = Complex::new(T::one(), T::zero()) + zeta[n];
    if den.norm_sqr() <= T::min_positive_value() {
        return Err(Error::SouthPole);
    }
    let inv = Complex::new(T::one(), T::zero()) / den;
    let mut x = SmallVec::with_capacity(n);
    let mut y = SmallVec::with_capacity(n);
    for z in &zeta[..n] {
        let v = *z * inv;
        x.push(v.re);
        y.push(v.im);
    }
    let t = (inv * lit::<T>(2.0)).im;
    Ok(HPoint { x, y, t })
}

/// `|J_C| = 2^{2n+1} / ((1+|z|^2)^2 + t^2)^{n+1}`.
pub fn cayley_jacobian<T: Scalar>(p: &HPoint<T>) -> T {
    let n = p.n();
    let s = T::one() + p.z_norm2();
    let d = s * s + p.t * p.t;
    lit::<T>(2.0).powi(2 * n as i32 + 1) / d.powi(n as i32 + 1)
}

/// Jacobian of the left translation `ξ ↦ a ∘ ξ` acting on a covector:
/// returns `∇(f ∘ τ_a)(ξ)` given `g = (∇f)(a ∘ ξ)`.
///
/// Only the `t` row of the translation is non-trivial:
/// `∂(a∘ξ)_t/∂x_j = 2y_{a,j}`, `∂(a∘ξ)_t/∂y_j = −2x_{a,j}`.
pub fn pullback_left_translation<T: Scalar>(a: &HPoint<T>, g: &mut [T]) {
    let n = a.n();
    let gt = g[2 * n];
    let two = lit::<T>(2.0);
    for j in 0..n {
        g[j] += two * a.y[j] * gt;
        g[n + j] -= two * a.x[j] * gt;
    }
}
