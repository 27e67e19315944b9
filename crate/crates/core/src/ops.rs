//! Left-invariant derivatives, the sub-Laplacian, the dilation generator and
//! the matrix `A` with `Δ_H = div(A∇)`.
//!
//! Closed-form Cartesian derivatives are used when a field supplies them.
//! Grid fields use centered differences at the grid spacing and must be at
//! least two cells away from the boundary; other fields fall back to small
//! centered differences.

use crate::field::ScalarField;
use crate::group::HPoint;
use crate::{lit, Error, Result, Scalar};

fn default_step<T: Scalar>(order: i32, c: T) -> T {
    // ε^{1/3} for first differences, ε^{1/4} for second differences.
    let e = T::epsilon();
    let base = if order == 1 { e.cbrt() } else { e.sqrt().sqrt() };
    base * c.abs().max(T::one())
}

fn check_grid<T: Scalar, F: ScalarField<T> + ?Sized>(f: &F, p: &HPoint<T>) -> Result<()> {
    if let Some(g) = f.grid() {
        if !g.interior(p, 2) {
            return Err(Error::BoundaryProximity);
        }
    }
    Ok(())
}

fn shifted<T: Scalar>(p: &HPoint<T>, k: usize, h: T) -> HPoint<T> {
    let mut q = p.clone();
    q.set_coord(k, p.coord(k) + h);
    q
}

fn shifted2<T: Scalar>(p: &HPoint<T>, k: usize, hk: T, l: usize, hl: T) -> HPoint<T> {
    let mut q = shifted(p, k, hk);
    q.set_coord(l, q.coord(l) + hl);
    q
}

/// Cartesian gradient `[∂x, ∂y, ∂t]`.
pub fn cartesian_gradient<T: Scalar, F: ScalarField<T> + ?Sized>(f: &F, p: &HPoint<T>) -> Result<Vec<T>> {
    check_grid(f, p)?;
    let d = 2 * p.n() + 1;
    let mut g = vec![T::zero(); d];
    if f.grid().is_none() && f.gradient(p, &mut g) {
        return Ok(g);
    }
    let sp = f.fd_spacing();
    let two = lit::<T>(2.0);
    for (k, gk) in g.iter_mut().enumerate() {
        let h = match &sp {
            Some(s) => s[k],
            None => default_step(1, p.coord(k)),
        };
        *gk = (f.value(&shifted(p, k, h)) - f.value(&shifted(p, k, -h))) / (two * h);
    }
    Ok(g)
}

/// Cartesian Hessian, row-major.
pub fn cartesian_hessian<T: Scalar, F: ScalarField<T> + ?Sized>(f: &F, p: &HPoint<T>) -> Result<Vec<T>> {
    check_grid(f, p)?;
    let d = 2 * p.n() + 1;
    let mut h = vec![T::zero(); d * d];
    if f.grid().is_none() && f.hessian(p, &mut h) {
        return Ok(h);
    }
    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    let sp = f.fd_spacing();
    let mut g = vec![T::zero(); d];
    if sp.is_none() && f.gradient(p, &mut g) {
        let mut gp = vec![T::zero(); d];
        let mut gm = vec![T::zero(); d];
        for k in 0..d {
            let s = default_step(1, p.coord(k));
            f.gradient(&shifted(p, k, s), &mut gp);
            f.gradient(&shifted(p, k, -s), &mut gm);
            for l in 0..d {
                h[k * d + l] = (gp[l] - gm[l]) / (two * s);
            }
        }
        for k in 0..d {
            for l in 0..k {
                let m = (h[k * d + l] + h[l * d + k]) / two;
                h[k * d + l] = m;
                h[l * d + k] = m;
            }
        }
        return Ok(h);
    }
    let steps: Vec<T> = (0..d)
        .map(|k| match &sp {
            Some(s) => s[k],
            None => default_step(2, p.coord(k)),
        })
        .collect();
    let f0 = f.value(p);
    for k in 0..d {
        let hk = steps[k];
        let fp = f.value(&shifted(p, k, hk));
        let fm = f.value(&shifted(p, k, -hk));
        h[k * d + k] = (fp - two * f0 + fm) / (hk * hk);
        for l in 0..k {
            let hl = steps[l];
            let v = (f.value(&shifted2(p, k, hk, l, hl)) - f.value(&shifted2(p, k, hk, l, -hl))
                - f.value(&shifted2(p, k, -hk, l, hl))
                + f.value(&shifted2(p, k, -hk, l, -hl)))
                / (four * hk * hl);
            h[k * d + l] = v;
            h[l * d + k] = v;
        }
    }
    Ok(h)
}

/// `(X_j f, Y_j f)` from a Cartesian gradient, as `[X_1..X_n, Y_1..Y_n]`.
pub fn horizontal_from_gradient<T: Scalar>(p: &HPoint<T>, g: &[T]) -> Vec<T> {
    let n = p.n();
    let two = lit::<T>(2.0);
    let gt = g[2 * n];
    let mut out = Vec::with_capacity(2 * n);
    for j in 0..n {
        out.push(g[j] + two * p.y[j] * gt);
    }
    for j in 0..n {
        out.push(g[n + j] - two * p.x[j] * gt);
    }
    out
}

/// Right-invariant fields `X̄_j = ∂x_j − 2y_j∂t`, `Ȳ_j = ∂y_j + 2x_j∂t`, `T`
/// (generators of left translations) from a Cartesian gradient.
pub fn right_invariant_from_gradient<T: Scalar>(p: &HPoint<T>, g: &[T]) -> Vec<T> {
    let n = p.n();
    let two = lit::<T>(2.0);
    let gt = g[2 * n];
    let mut out = Vec::with_capacity(2 * n + 1);
    for j in 0..n {
        out.push(g[j] - two * p.y[j] * gt);
    }
    for j in 0..n {
        out.push(g[n + j] + two * p.x[j] * gt);
    }
    out.push(gt);
    out
}

/// `(X f, Y f, T f)` at `p`.
pub fn left_invariant_derivatives<T: Scalar, F: ScalarField<T> + ?Sized>(
    f: &F,
    p: &HPoint<T>,
) -> Result<(Vec<T>, Vec<T>, T)> {
    let n = p.n();
    let g = cartesian_gradient(f, p)?;
    let h = horizontal_from_gradient(p, &g);
    Ok((h[..n].to_vec(), h[n..].to_vec(), g[2 * n]))
}

/// `∇_H f = (X_1 f..X_n f, Y_1 f..Y_n f)`.
pub fn horizontal_gradient<T: Scalar, F: ScalarField<T> + ?Sized>(f: &F, p: &HPoint<T>) -> Result<Vec<T>> {
    let g = cartesian_gradient(f, p)?;
    Ok(horizontal_from_gradient(p, &g))
}

/// Coefficient vectors of `X_j` (`j < n`) and `Y_j` (`n ≤ j < 2n`).
fn horizontal_field<T: Scalar>(p: &HPoint<T>, j: usize) -> Vec<T> {
    let n = p.n();
    let two = lit::<T>(2.0);
    let mut c = vec![T::zero(); 2 * n + 1];
    c[j] = T::one();
    c[2 * n] = if j < n { two * p.y[j] } else { -two * p.x[j - n] };
    c
}

/// `Σ_j (X_j² + Y_j²) f` from the Cartesian jet, applying each field twice:
/// `V(V f) = cᵀ H c + (V c)·∇f`, where `V c = 0` for the horizontal fields.
pub fn sub_laplacian_from_jet<T: Scalar>(p: &HPoint<T>, _g: &[T], h: &[T]) -> T {
    let d = 2 * p.n() + 1;
    let mut s = T::zero();
    for j in 0..2 * p.n() {
        let c = horizontal_field(p, j);
        for a in 0..d {
            if c[a] == T::zero() {
                continue;
            }
            for b in 0..d {
                s += c[a] * h[a * d + b] * c[b];
            }
        }
    }
    s
}

/// `Δ_H f = Σ_j (X_j² + Y_j²) f`.
pub fn sub_laplacian<T: Scalar, F: ScalarField<T> + ?Sized>(f: &F, p: &HPoint<T>) -> Result<T> {
    let g = cartesian_gradient(f, p)?;
    let h = cartesian_hessian(f, p)?;
    Ok(sub_laplacian_from_jet(p, &g, &h))
}

/// The symmetric matrix `A(ξ)` with blocks `I`, `2y`, `−2x`, `4|z|^2`.
pub fn a_matrix<T: Scalar>(p: &HPoint<T>) -> Vec<T> {
    let n = p.n();
    let d = 2 * n + 1;
    let two = lit::<T>(2.0);
    let mut a = vec![T::zero(); d * d];
    for k in 0..2 * n {
        a[k * d + k] = T::one();
    }
    for j in 0..n {
        a[j * d + 2 * n] = two * p.y[j];
        a[2 * n * d + j] = two * p.y[j];
        a[(n + j) * d + 2 * n] = -two * p.x[j];
        a[2 * n * d + n + j] = -two * p.x[j];
    }
    a[d * d - 1] = lit::<T>(4.0) * p.z_norm2();
    a
}

pub fn a_matrix_apply<T: Scalar>(p: &HPoint<T>, v: &[T]) -> Vec<T> {
    let d = 2 * p.n() + 1;
    let a = a_matrix(p);
    (0..d).map(|r| (0..d).fold(T::zero(), |s, c| s + a[r * d + c] * v[c])).collect()
}

/// `div(A ∇f) = tr(A H) + (div A)·∇f`, with the column divergence of `A`
/// taken by centered differences of `A` itself.
pub fn sub_laplacian_div<T: Scalar, F: ScalarField<T> + ?Sized>(f: &F, p: &HPoint<T>) -> Result<T> {
    let d = 2 * p.n() + 1;
    let g = cartesian_gradient(f, p)?;
    let h = cartesian_hessian(f, p)?;
    let a = a_matrix(p);
    let mut s = T::zero();
    for r in 0..d {
        for c in 0..d {
            s += a[r * d + c] * h[c * d + r];
        }
    }
    let two = lit::<T>(2.0);
    let mut div = vec![T::zero(); d];
    for r in 0..d {
        let e = default_step(1, p.coord(r));
        let ap = a_matrix(&shifted(p, r, e));
        let am = a_matrix(&shifted(p, r, -e));
        for c in 0..d {
            div[c] += (ap[r * d + c] - am[r * d + c]) / (two * e);
        }
    }
    for c in 0..d {
        s += div[c] * g[c];
    }
    Ok(s)
}

/// `𝒳f = Σ x_j∂x_j f + y_j∂y_j f + 2t∂t f`.
pub fn dilation_generator<T: Scalar, F: ScalarField<T> + ?Sized>(f: &F, p: &HPoint<T>) -> Result<T> {
    let g = cartesian_gradient(f, p)?;
    Ok(dilation_from_gradient(p, &g))
}

pub fn dilation_from_gradient<T: Scalar>(p: &HPoint<T>, g: &[T]) -> T {
    let n = p.n();
    let mut s = lit::<T>(2.0) * p.t * g[2 * n];
    for j in 0..n {
        s += p.x[j] * g[j] + p.y[j] * g[n + j];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    #[test]
    fn t_and_x_squared() {
        let f = FnField::new(1, |p: &HPoint<f64>| p.t).with_gradient(|_p, g| {
            g.copy_from_slice(&[0.0, 0.0, 1.0]);
        });
        let p = HPoint::xyt(0.7, -1.3, 0.2);
        let (x, y, t) = left_invariant_derivatives(&f, &p).unwrap();
        assert_eq!((x[0], y[0], t), (2.0 * -1.3, -2.0 * 0.7, 1.0));

        let sq = FnField::new(1, |p: &HPoint<f64>| p.x[0] * p.x[0]);
        let l = sub_laplacian(&sq, &p).unwrap();
        assert!((l - 2.0).abs() < 1e-6, "{l}");
    }

    #[test]
    fn gauge_fourth_power_dilation() {
        let f = FnField::new(1, |p: &HPoint<f64>| {
            let r = p.z_norm2();
            r * r + p.t * p.t
        });
        let p = HPoint::xyt(0.4, 0.9, -0.6);
        let v = f.value(&p);
        let x = dilation_generator(&f, &p).unwrap();
        assert!((x - 4.0 * v).abs() < 1e-8 * v.abs().max(1.0));
    }

    #[test]
    fn a_at_origin() {
        let a = a_matrix(&HPoint::<f64>::origin(1));
        assert_eq!(a, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
