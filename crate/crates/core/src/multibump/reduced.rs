//! Bubble sums evaluated on the frame quadrature: kinetic matrix, fiber
//! maximization in the amplitudes, and tangent-space gradients and Gram
//! matrices. Every `H¹` pairing with a bubble-derived function is computed as
//! an `L²` pairing with its (closed-form) sub-Laplacian.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bubbles::{Bubble, BumpParams, Constants};
use crate::field::{AffineMap, ScalarField};
use crate::fields::{pairwise_sum, Frame, FrameRule};
use crate::functional::SubcriticalExponent;
use crate::group::{compose, dilate_unchecked, HPoint};
use crate::linalg::solve_symmetric;
use crate::multibump::RSpec;
use crate::{lit, to_f64, Scalar};

const CHUNK: usize = 512;

/// `m` sums over `0..len`; `f(i, acc)` adds the contributions of item `i`.
/// Chunks are fixed-size and combined pairwise, so the result does not
/// depend on the thread count.
pub(crate) fn chunk_sums<T: Scalar, F>(len: usize, m: usize, f: F) -> Vec<T>
where
    F: Fn(usize, &mut [T]) + Sync,
{
    let chunks: Vec<Vec<T>> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![T::zero(); m];
            for i in c * CHUNK..((c + 1) * CHUNK).min(len) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    (0..m)
        .map(|j| pairwise_sum(&chunks.iter().map(|a| a[j]).collect::<Vec<_>>()))
        .collect()
}

/// Moves a bump by a step `(η, log λ)` in its own frame:
/// `ξ ← ξ ∘ δ_{1/λ}(η)`, `λ ← λ e^{Δ}`.
pub(crate) fn step_bump<T: Scalar>(b: &BumpParams<T>, eta: &[T], dlog: T) -> BumpParams<T> {
    let center = compose(&b.center, &dilate_unchecked(T::one() / b.scale, &HPoint::from_coords(eta)));
    BumpParams { alpha: b.alpha, center, scale: b.scale * dlog.exp() }
}

/// Derivatives of a unit-amplitude bubble with respect to its frame step
/// `(η_1..η_{2n+1}, log λ)`; returns the value.
pub(crate) fn frame_jet<T: Scalar>(b: &Bubble<T>, p: &HPoint<T>, out: &mut [T]) -> T {
    let d = 2 * p.n() + 1;
    let mut buf = [T::zero(); 16];
    let v = b.param_jet(p, &mut buf[..d + 2]);
    out[..d].copy_from_slice(&buf[1..=d]);
    AffineMap { a: b.params.center.clone(), s: T::one() / b.params.scale }.pull_gradient(&mut out[..d]);
    out[d] = buf[d + 1];
    v
}

pub(crate) struct Reduced<T: Scalar> {
    pub k: usize,
    pub n: usize,
    pub points: Vec<HPoint<T>>,
    pub weights: Vec<T>,
    pub reff: Vec<T>,
    /// Unit-amplitude bubble values, `N × k` row-major.
    pub w: Vec<T>,
    pub bubbles: Vec<Bubble<T>>,
    pub p0: T,
    pub exp: SubcriticalExponent<T>,
}

impl<T: Scalar> Reduced<T> {
    pub fn new(
        bumps: &[BumpParams<T>],
        cst: &Constants<T>,
        rule: &FrameRule<T>,
        r: &RSpec<T>,
        exp: &SubcriticalExponent<T>,
    ) -> Self {
        let frames: Vec<Frame<T>> = bumps.iter().map(Frame::of).collect();
        let nodes = rule.partition_nodes(&frames);
        let bubbles: Vec<Bubble<T>> = bumps
            .iter()
            .map(|b| Bubble::new(BumpParams { alpha: T::one(), center: b.center.clone(), scale: b.scale }, cst))
            .collect();
        let k = bumps.len();
        let rows: Vec<(T, Vec<T>)> = nodes
            .points
            .par_iter()
            .zip(nodes.weights.par_iter())
            .map(|(p, &wt)| {
                if wt == T::zero() {
                    return (T::zero(), vec![T::zero(); k]);
                }
                (exp.weight(r, p), bubbles.iter().map(|b| b.value(p)).collect())
            })
            .collect();
        let mut reff = Vec::with_capacity(rows.len());
        let mut w = Vec::with_capacity(rows.len() * k);
        for (a, b) in rows {
            reff.push(a);
            w.extend(b);
        }
        Reduced {
            k,
            n: cst.n,
            points: nodes.points,
            weights: nodes.weights,
            reff,
            w,
            bubbles,
            p0: cst.critical_power(),
            exp: *exp,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn u_at(&self, i: usize, alpha: &[T]) -> T {
        let row = &self.w[i * self.k..(i + 1) * self.k];
        row.iter().zip(alpha).fold(T::zero(), |s, (a, b)| s + *a * *b)
    }

    /// `M_ij = ⟨w_i, w_j⟩ = ∫ w_i w_j^{p0}`, symmetrized.
    pub fn kinetic_matrix(&self) -> DMatrix<f64> {
        let k = self.k;
        let p0 = self.p0;
        let s = chunk_sums::<T, _>(self.len(), k * k, |i, acc| {
            let om = self.weights[i];
            if om == T::zero() {
                return;
            }
            let row = &self.w[i * k..(i + 1) * k];
            for a in 0..k {
                for b in 0..k {
                    acc[a * k + b] += om * row[a] * row[b].powf(p0);
                }
            }
        });
        let m = DMatrix::from_iterator(k, k, s.iter().map(|v| to_f64(*v)));
        (&m + m.transpose()) * 0.5
    }

    /// `∫ R H^τ |U|^{p+1}/(p+1)`.
    pub fn potential(&self, alpha: &[T]) -> T {
        chunk_sums::<T, _>(self.len(), 1, |i, acc| {
            let om = self.weights[i];
            if om != T::zero() {
                acc[0] += om * self.reff[i] * self.exp.primitive(self.u_at(i, alpha));
            }
        })[0]
    }

    /// `F(α) = ½ αᵀMα − potential`.
    pub fn fiber_energy(&self, m: &DMatrix<f64>, alpha: &[T]) -> f64 {
        let a = DVector::from_iterator(self.k, alpha.iter().map(|v| to_f64(*v)));
        0.5 * a.dot(&(m * &a)) - to_f64(self.potential(alpha))
    }

    /// Gradient and Hessian of `F` in `α`.
    fn fiber_derivatives(&self, m: &DMatrix<f64>, alpha: &[T]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k;
        let p = self.exp.p;
        let s = chunk_sums::<T, _>(self.len(), k + k * k, |i, acc| {
            let om = self.weights[i];
            if om == T::zero() {
                return;
            }
            let u = self.u_at(i, alpha);
            if u == T::zero() {
                return;
            }
            let row = &self.w[i * k..(i + 1) * k];
            let f1 = om * self.reff[i] * self.exp.signed_power(u);
            let f2 = om * self.reff[i] * p * u.abs().powf(p - T::one());
            for a in 0..k {
                acc[a] += f1 * row[a];
                for b in 0..k {
                    acc[k + a * k + b] += f2 * row[a] * row[b];
                }
            }
        });
        let av = DVector::from_iterator(k, alpha.iter().map(|v| to_f64(*v)));
        let g = m * &av - DVector::from_iterator(k, s[..k].iter().map(|v| to_f64(*v)));
        let h2 = DMatrix::from_iterator(k, k, s[k..].iter().map(|v| to_f64(*v)));
        let h = m - (&h2 + h2.transpose()) * 0.5;
        (g, h)
    }

    /// Maximizes `F` over `α`, starting from the single-bump maximizers
    /// `(M_ii / P_i)^{1/(p−1)}`. `None` when some `P_i ≤ 0` (no maximum).
    pub fn maximize_alpha(&self, m: &DMatrix<f64>) -> Option<(Vec<T>, f64)> {
        let k = self.k;
        let p = self.exp.p;
        let pe = p + T::one();
        let pi = chunk_sums::<T, _>(self.len(), k, |i, acc| {
            let om = self.weights[i];
            if om == T::zero() {
                return;
            }
            for a in 0..k {
                acc[a] += om * self.reff[i] * self.w[i * k + a].abs().powf(pe);
            }
        });
        let mut alpha = Vec::with_capacity(k);
        for a in 0..k {
            if !(to_f64(pi[a]) > 0.0) {
                return None;
            }
            alpha.push(lit::<T>((m[(a, a)] / to_f64(pi[a])).powf(1.0 / to_f64(p - T::one()))));
        }
        let mut f = self.fiber_energy(m, &alpha);
        for _ in 0..60 {
            let (g, h) = self.fiber_derivatives(m, &alpha);
            let scale = 1.0 + m.diagonal().amax();
            if g.amax() <= 1e-13 * scale {
                break;
            }
            let step = match solve_symmetric(&(-&h), &g, 1e-12) {
                Some(s) => s,
                None => break,
            };
            let mut s = 1.0;
            let mut moved = false;
            while s > 1e-8 {
                let trial: Vec<T> = alpha.iter().zip(step.iter()).map(|(a, d)| *a + lit::<T>(s * d)).collect();
                let ft = self.fiber_energy(m, &trial);
                if ft >= f - 1e-14 * f.abs() {
                    alpha = trial;
                    f = ft;
                    moved = true;
                    break;
                }
                s *= 0.5;
            }
            if !moved || step.amax() * s < 1e-15 * (1.0 + alpha.iter().map(|v| to_f64(v.abs())).fold(0.0, f64::max)) {
                break;
            }
        }
        Some((alpha, f))
    }

    /// Frame jets of every bubble at every node: `N × k × (2n+2)`.
    pub fn jets(&self) -> Vec<T> {
        let k = self.k;
        let np = 2 * self.n + 2;
        let rows: Vec<Vec<T>> = self
            .points
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(p, &om)| {
                let mut out = vec![T::zero(); k * np];
                if om != T::zero() {
                    for (a, b) in self.bubbles.iter().enumerate() {
                        frame_jet(b, p, &mut out[a * np..(a + 1) * np]);
                    }
                }
                out
            })
            .collect();
        rows.concat()
    }

    /// Flow gradient `b_θ = ∫ ρ ∂_θU`, `ρ = Σ α_j w_j^{p0} − R H^τ |U|^{p−1}U`,
    /// and Gram matrix `G = ⟨∂_θU, ∂_θ'U⟩` for the frame steps.
    pub fn flow_gradient(&self, alpha: &[T], jets: &[T]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k;
        let np = 2 * self.n + 2;
        let dim = k * np;
        let p0 = self.p0;
        let s = chunk_sums::<T, _>(self.len(), dim + dim * dim, |i, acc| {
            let om = self.weights[i];
            if om == T::zero() {
                return;
            }
            let row = &self.w[i * k..(i + 1) * k];
            let jet = &jets[i * dim..(i + 1) * dim];
            let u = self.u_at(i, alpha);
            let mut rho = -self.reff[i] * self.exp.signed_power(u);
            for j in 0..k {
                rho += alpha[j] * row[j].powf(p0);
            }
            for a in 0..dim {
                let ia = a / np;
                let da = alpha[ia] * jet[a];
                acc[a] += om * rho * da;
                for b in 0..dim {
                    let ib = b / np;
                    let kb = alpha[ib] * p0 * row[ib].powf(p0 - T::one()) * jet[b];
                    acc[dim + a * dim + b] += om * da * kb;
                }
            }
        });
        let b = DVector::from_iterator(dim, s[..dim].iter().map(|v| to_f64(*v)));
        let g = DMatrix::from_iterator(dim, dim, s[dim..].iter().map(|v| to_f64(*v)));
        (b, (&g + g.transpose()) * 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bubble_fiber_maximum() {
        let cst = Constants::<f64>::new(1).unwrap();
        let rule = FrameRule::default_for(&cst).unwrap();
        let exp = SubcriticalExponent::critical(&cst);
        for r0 in [1.0, 4.0] {
            let b = BumpParams::new(1.0, HPoint::xyt(0.5, 0.2, -1.0), 2.0).unwrap();
            let red = Reduced::new(&[b], &cst, &rule, &RSpec::constant(1, r0), &exp);
            let m = red.kinetic_matrix();
            assert!((m[(0, 0)] / (4.0 * std::f64::consts::PI.powi(2)) - 1.0).abs() < 1e-7);
            let (alpha, f) = red.maximize_alpha(&m).unwrap();
            assert!((alpha[0] - r0.powf(-0.5)).abs() < 1e-7, "{alpha:?}");
            let c = std::f64::consts::PI.powi(2) / r0;
            assert!((f / c - 1.0).abs() < 1e-7);
            let jets = red.jets();
            let (g, gram) = red.flow_gradient(&alpha, &jets);
            assert!(g.amax() < 1e-6, "{g}");
            assert!(gram.symmetric_eigen().eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let cst = Constants::<f64>::new(1).unwrap();
        let b = BumpParams::new(1.0, HPoint::xyt(0.5, 0.2, -1.0), 1.7).unwrap();
        let bb = Bubble::new(b.clone(), &cst);
        let p = HPoint::xyt(0.3, 0.6, -0.8);
        let mut out = [0.0; 4];
        frame_jet(&bb, &p, &mut out);
        for m in 0..4 {
            let h = 1e-6;
            let mut e = [0.0; 3];
            let (dl_p, dl_m) = if m == 3 { (h, -h) } else { (0.0, 0.0) };
            if m < 3 {
                e[m] = h;
            }
            let fp = Bubble::new(step_bump(&b, &e, dl_p), &cst).value(&p);
            if m < 3 {
                e[m] = -h;
            }
            let fm = Bubble::new(step_bump(&b, &e, dl_m), &cst).value(&p);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - out[m]).abs() < 1e-6 * (1.0 + fd.abs()), "m={m} {fd} {}", out[m]);
        }
    }
}
