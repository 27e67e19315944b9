use rayon::prelude::*;

use crate::field::ScalarField;
use crate::fields::GridSpec;
use crate::group::HPoint;
use crate::ops::{cartesian_gradient, horizontal_from_gradient};
use crate::{lit, to_f64, Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult<T: Scalar> {
    pub value: T,
    pub estimated_error: T,
    pub tail_correction: T,
}

impl<T: Scalar> QuadratureResult<T> {
    pub fn zero() -> Self {
        QuadratureResult { value: T::zero(), estimated_error: T::zero(), tail_correction: T::zero() }
    }
}

/// Pairwise (tree) summation; the association order depends only on the
/// slice length.
pub fn pairwise_sum<T: Scalar>(v: &[T]) -> T {
    if v.len() <= 16 {
        return v.iter().fold(T::zero(), |s, &x| s + x);
    }
    let m = v.len() / 2;
    pairwise_sum(&v[..m]) + pairwise_sum(&v[m..])
}

#[derive(Clone, Copy, Default)]
struct Acc<T> {
    fine: T,
    coarse: T,
    shell: T,
}

fn trap_weight<T: Scalar>(i: usize, m: usize, h: T) -> T {
    if i == 0 || i + 1 == m {
        h / lit(2.0)
    } else {
        h
    }
}

fn coarse_weight<T: Scalar>(i: usize, m: usize, h: T) -> T {
    if i % 2 == 1 {
        return T::zero();
    }
    let last = if (m - 1) % 2 == 0 { m - 1 } else { m - 2 };
    if i > last {
        T::zero()
    } else if i == 0 || i == last {
        h
    } else {
        h + h
    }
}

/// Composite trapezoid rule of `f` over the grid box.
///
/// The error estimate is the difference to the same rule on the every-other
/// node sub-grid. When `tail` is `Some(γ)` the integrand is taken to decay
/// like a degree `−γ` homogeneous function about the frame origin, and the
/// part outside the box is added from the shell `B \ δ_{1/2}B`:
/// `tail = ∫_shell f / (2^{γ−Q} − 1)`.
pub fn integrate_fn<T: Scalar, F>(spec: &GridSpec<T>, tail: Option<T>, f: F) -> Result<QuadratureResult<T>>
where
    F: Fn(&HPoint<T>) -> T + Sync,
{
    let q = lit::<T>((2 * spec.n + 2) as f64);
    if let Some(g) = tail {
        if !(g > q) {
            return Err(Error::TailExponent { gamma: to_f64(g), q: to_f64(q) });
        }
    }
    let d = spec.dim();
    let counts = spec.counts().to_vec();
    let slow = d - 1;
    let row_len = counts[0];
    let rows_per_slice: usize = counts[1..slow].iter().product();
    let half_lo: Vec<T> = (0..d)
        .map(|k| spec.lo[k] * if k == slow { lit(0.25) } else { lit(0.5) })
        .collect();
    let half_hi: Vec<T> = (0..d)
        .map(|k| spec.hi[k] * if k == slow { lit(0.25) } else { lit(0.5) })
        .collect();
    let framed = !spec.origin.is_origin();

    let slices: Vec<Acc<T>> = (0..counts[slow])
        .into_par_iter()
        .map(|it| {
            let mut local = HPoint::origin(spec.n);
            local.set_coord(slow, spec.lo[slow] + lit::<T>(it as f64) * spec.spacing[slow]);
            let wt = trap_weight(it, counts[slow], spec.spacing[slow]);
            let ct = coarse_weight(it, counts[slow], spec.spacing[slow]);
            let t_out = local.coord(slow) < half_lo[slow] || local.coord(slow) > half_hi[slow];
            let mut fine = Vec::with_capacity(rows_per_slice);
            let mut coarse = Vec::with_capacity(rows_per_slice);
            let mut shell = Vec::with_capacity(rows_per_slice);
            let mut multi = vec![0usize; d];
            for r in 0..rows_per_slice {
                let mut rr = r;
                let mut w_row = wt;
                let mut c_row = ct;
                let mut out_row = t_out;
                for k in 1..slow {
                    multi[k] = rr % counts[k];
                    rr /= counts[k];
                    let v = spec.lo[k] + lit::<T>(multi[k] as f64) * spec.spacing[k];
                    local.set_coord(k, v);
                    w_row *= trap_weight(multi[k], counts[k], spec.spacing[k]);
                    c_row *= coarse_weight(multi[k], counts[k], spec.spacing[k]);
                    out_row |= v < half_lo[k] || v > half_hi[k];
                }
                let (mut sf, mut sc, mut ss) = (T::zero(), T::zero(), T::zero());
                for i in 0..row_len {
                    let v0 = spec.lo[0] + lit::<T>(i as f64) * spec.spacing[0];
                    local.set_coord(0, v0);
                    let val = if framed { f(&spec.to_physical(&local)) } else { f(&local) };
                    if val == T::zero() {
                        continue;
                    }
                    let w0 = trap_weight(i, row_len, spec.spacing[0]);
                    sf += w0 * val;
                    sc += coarse_weight(i, row_len, spec.spacing[0]) * val;
                    if out_row || v0 < half_lo[0] || v0 > half_hi[0] {
                        ss += w0 * val;
                    }
                }
                fine.push(w_row * sf);
                coarse.push(c_row * sc);
                shell.push(w_row * ss);
            }
            Acc { fine: pairwise_sum(&fine), coarse: pairwise_sum(&coarse), shell: pairwise_sum(&shell) }
        })
        .collect();

    let fine = pairwise_sum(&slices.iter().map(|a| a.fine).collect::<Vec<_>>());
    let coarse = pairwise_sum(&slices.iter().map(|a| a.coarse).collect::<Vec<_>>());
    let shell = pairwise_sum(&slices.iter().map(|a| a.shell).collect::<Vec<_>>());
    let tail_correction = match tail {
        Some(g) => shell / (lit::<T>(2.0).powf(g - q) - T::one()),
        None => T::zero(),
    };
    Ok(QuadratureResult {
        value: fine + tail_correction,
        estimated_error: (fine - coarse).abs() + lit::<T>(0.1) * tail_correction.abs(),
        tail_correction,
    })
}

/// `∫ f` over the grid box, with an optional analytic tail (see
/// [`integrate_fn`]).
pub fn integrate<T: Scalar, F: ScalarField<T> + ?Sized>(
    f: &F,
    spec: &GridSpec<T>,
    tail: Option<T>,
) -> Result<QuadratureResult<T>> {
    integrate_fn(spec, tail, |p| f.value(p))
}

/// `⟨u, v⟩ = ∫ ∇_H u · ∇_H v`, with the tail of a bubble-like pair
/// (`|∇_H u| ~ |ξ|^{1−Q}`, exponent `2Q − 2`). Sampled fields are treated as
/// zero within two cells of their own boundary.
pub fn grad_inner<T: Scalar, U, V>(u: &U, v: &V, spec: &GridSpec<T>) -> Result<QuadratureResult<T>>
where
    U: ScalarField<T> + ?Sized,
    V: ScalarField<T> + ?Sized,
{
    let q = (2 * spec.n + 2) as f64;
    integrate_fn(spec, Some(lit(2.0 * q - 2.0)), |p| {
        match (cartesian_gradient(u, p), cartesian_gradient(v, p)) {
            (Ok(gu), Ok(gv)) => {
                let hu = horizontal_from_gradient(p, &gu);
                let hv = horizontal_from_gradient(p, &gv);
                hu.iter().zip(&hv).fold(T::zero(), |s, (&a, &b)| s + a * b)
            }
            // Within two cells of a sampled field's boundary: zero extension.
            _ => T::zero(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, Zero};

    #[test]
    fn pairwise_matches_plain_sum_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }

    #[test]
    fn zero_field_integrates_to_zero() {
        let spec = GridSpec::symmetric(1, 2.0, 2.0, 0.1, 0.1).unwrap();
        let r = integrate(&Zero(1), &spec, Some(6.0)).unwrap();
        assert_eq!(r, QuadratureResult::zero());
    }

    #[test]
    fn tail_exponent_must_exceed_q() {
        let spec = GridSpec::symmetric(1, 2.0, 2.0, 0.1, 0.1).unwrap();
        let f = FnField::new(1, |_p: &HPoint<f64>| 1.0);
        assert!(matches!(integrate(&f, &spec, Some(4.0)), Err(Error::TailExponent { .. })));
    }
}
