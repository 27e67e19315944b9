//! Closest `k`-bump sum to a field in the `H¹` norm, and the `V(k,ε)` test.
//!
//! Seeds come from the largest `|u|` in each region (lattice, then pattern
//! search); `λ` is read off the peak with `α = R(ξ)^{(2−Q)/4}`. Parameters
//! are then refined by Gauss–Newton in the `H¹` metric, with the frame
//! steps of the flow for the centers and scales. All pairings with bubble
//! derivatives are taken against their closed-form sub-Laplacians.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bubbles::{scale_from_peak, Bubble, BumpParams, Constants};
use crate::field::{DynField, LinearCombination, ScalarField};
use crate::fields::{Frame, FrameRule, Nodes};
use crate::group::HPoint;
use crate::linalg::solve_symmetric;
use crate::multibump::reduced::{chunk_sums, frame_jet, step_bump};
use crate::multibump::{check_regions, MultiBump, RSpec, Region};
use crate::ops::{cartesian_gradient, horizontal_from_gradient};
use crate::{lit, to_f64, Error, Result, Scalar};

const MAX_ITER: usize = 100;
const STEP_CAP: f64 = 0.5;
/// Relative `H¹` size of a Gauss–Newton step treated as converged.
const STEP_TOL: f64 = 1e-11;

/// Result of [`optimal_representation`]. Bumps are in canonical order
/// (centers sorted by `x_1`, then `y_1`, then `t`).
#[derive(Clone)]
pub struct Representation<T: Scalar> {
    pub bumps: Vec<BumpParams<T>>,
    /// `v = u − Σ α_i w_i`.
    pub v: DynField<T>,
    /// `‖∇_H v‖_{L²}`.
    pub residual_norm: T,
    /// Largest `|⟨v, e⟩| / ‖e‖` over the amplitude and frame tangents `e`,
    /// on a finer quadrature than the fit.
    pub orthogonality: T,
    pub iterations: usize,
    /// The minimizer sits on the boundary of `D_{4ε}`.
    pub on_boundary: bool,
}

/// Best-found parameters and the quantities the `V(k,ε)` test checks.
#[derive(Clone, Debug)]
pub struct Witness<T: Scalar> {
    /// Canonical order; empty when no seed was found.
    pub bumps: Vec<BumpParams<T>>,
    pub residual_norm: T,
    /// `max_i |α_i − R(ξ_i)^{(2−Q)/4}|` of the unconstrained fit.
    pub alpha_error: T,
    pub min_scale: T,
    /// One center in each region.
    pub in_regions: bool,
    /// Amplitudes were moved into the `ε`-band before the residual was taken.
    pub clamped: bool,
    pub accepted: bool,
}

impl<T: Scalar> Witness<T> {
    fn empty() -> Self {
        Witness {
            bumps: Vec::new(),
            residual_norm: T::infinity(),
            alpha_error: T::infinity(),
            min_scale: T::zero(),
            in_regions: false,
            clamped: false,
            accepted: false,
        }
    }
}

/// Frame quadrature with about a third more nodes per direction than `rule`.
fn finer<T: Scalar>(rule: &FrameRule<T>, cst: &Constants<T>) -> Result<FrameRule<T>> {
    FrameRule::new(cst, rule.n_r * 4 / 3, rule.n_phi * 3 / 2, rule.n_angle * 3 / 2)
}

fn seed_lattice(d: usize) -> usize {
    let cap = (20_000f64).powf(1.0 / d as f64).floor() as usize;
    cap.clamp(5, 21)
}

/// Location of the largest `|u|` in the region: lattice maximum, then
/// compass search shrinking to `1e-12` of the box.
pub fn region_argmax<T: Scalar>(u: &dyn ScalarField<T>, region: &Region<T>) -> (HPoint<T>, T) {
    let d = region.lo.len();
    let pts = region.interior_lattice(seed_lattice(d));
    let vals: Vec<T> = pts.par_iter().map(|p| u.value(p).abs()).collect();
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[best] {
            best = i;
        }
    }
    let mut x = pts[best].clone();
    let mut fx = vals[best];
    let mut step: Vec<T> = (0..d).map(|k| (region.hi[k] - region.lo[k]) / lit(20.0)).collect();
    let floor: Vec<T> = step.iter().map(|s| *s * lit(1e-12)).collect();
    while (0..d).any(|k| step[k] > floor[k]) {
        let mut moved = false;
        for k in 0..d {
            for sgn in [1.0, -1.0] {
                let mut y = x.clone();
                y.set_coord(k, x.coord(k) + lit::<T>(sgn) * step[k]);
                if !region.contains(&y) {
                    continue;
                }
                let fy = u.value(&y).abs();
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|s| *s /= lit(2.0));
        }
    }
    (x, fx)
}

/// Bubble values, frame jets and field values on the partition nodes of a
/// set of bumps.
struct Sampled<T: Scalar> {
    nodes: Nodes<T>,
    u: Vec<T>,
}

fn sample<T: Scalar>(u: &dyn ScalarField<T>, bumps: &[BumpParams<T>], rule: &FrameRule<T>) -> Sampled<T> {
    let frames: Vec<Frame<T>> = bumps.iter().map(Frame::of).collect();
    let nodes = rule.partition_nodes(&frames);
    let vals = nodes.points.par_iter().zip(nodes.weights.par_iter()).map(|(p, w)| if *w == T::zero() { T::zero() } else { u.value(p) }).collect();
    Sampled { nodes, u: vals }
}

fn unit_bubbles<T: Scalar>(bumps: &[BumpParams<T>], cst: &Constants<T>) -> Vec<Bubble<T>> {
    bumps
        .iter()
        .map(|b| Bubble::new(BumpParams { alpha: T::one(), center: b.center.clone(), scale: b.scale }, cst))
        .collect()
}

/// `J = ‖u − U‖² − ‖u‖² = −2⟨u, U⟩ + ‖U‖²` on the given samples.
fn objective<T: Scalar>(s: &Sampled<T>, bumps: &[BumpParams<T>], cst: &Constants<T>) -> f64 {
    let bubbles = unit_bubbles(bumps, cst);
    let p0 = cst.critical_power();
    let j = chunk_sums::<T, _>(s.nodes.len(), 1, |i, acc| {
        let om = s.nodes.weights[i];
        if om == T::zero() {
            return;
        }
        let p = &s.nodes.points[i];
        let (mut uu, mut f) = (T::zero(), T::zero());
        for (b, bp) in bubbles.iter().zip(bumps) {
            let w = b.value(p);
            uu += bp.alpha * w;
            f += bp.alpha * w.powf(p0);
        }
        acc[0] += om * f * (uu - lit::<T>(2.0) * s.u[i]);
    });
    to_f64(j[0])
}

/// `t_a = ⟨u − U, e_a⟩` and `G_ab = ⟨e_a, e_b⟩` for the tangents
/// `e = (w_i, α_i ∂_θ w_i)` of every bump.
fn tangent_system<T: Scalar>(
    s: &Sampled<T>,
    bumps: &[BumpParams<T>],
    cst: &Constants<T>,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = bumps.len();
    let np = 2 * cst.n + 2;
    let per = np + 1;
    let dim = k * per;
    let bubbles = unit_bubbles(bumps, cst);
    let p0 = cst.critical_power();
    let sums = chunk_sums::<T, _>(s.nodes.len(), dim + dim * dim, |i, acc| {
        let om = s.nodes.weights[i];
        if om == T::zero() {
            return;
        }
        let p = &s.nodes.points[i];
        let mut e = vec![T::zero(); dim];
        let mut kern = vec![T::zero(); dim];
        let mut jet = [T::zero(); 16];
        let mut uu = T::zero();
        for (j, b) in bubbles.iter().enumerate() {
            let a = bumps[j].alpha;
            let w = frame_jet(b, p, &mut jet[..np]);
            uu += a * w;
            e[j * per] = w;
            kern[j * per] = w.powf(p0);
            let c = a * p0 * w.powf(p0 - T::one());
            for m in 0..np {
                e[j * per + 1 + m] = a * jet[m];
                kern[j * per + 1 + m] = c * jet[m];
            }
        }
        let v = s.u[i] - uu;
        for a in 0..dim {
            acc[a] += om * v * kern[a];
            for b in 0..dim {
                acc[dim + a * dim + b] += om * e[a] * kern[b];
            }
        }
    });
    let t = DVector::from_iterator(dim, sums[..dim].iter().map(|v| to_f64(*v)));
    let g = DMatrix::from_iterator(dim, dim, sums[dim..].iter().map(|v| to_f64(*v)));
    (t, (&g + g.transpose()) * 0.5)
}

fn apply_step<T: Scalar>(bumps: &[BumpParams<T>], delta: &DVector<f64>, s: f64, np: usize) -> Vec<BumpParams<T>> {
    let per = np + 1;
    bumps
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let d: Vec<T> = (0..np).map(|m| lit::<T>(s * delta[i * per + 1 + m])).collect();
            let mut nb = step_bump(b, &d[..np - 1], d[np - 1]);
            nb.alpha = b.alpha + lit::<T>(s * delta[i * per]);
            nb
        })
        .collect()
}

/// Largest multiplier keeping every frame step within [`STEP_CAP`] and every
/// amplitude change within half the amplitude.
fn step_limit<T: Scalar>(bumps: &[BumpParams<T>], delta: &DVector<f64>, np: usize) -> f64 {
    let per = np + 1;
    let mut f: f64 = 1.0;
    for (i, b) in bumps.iter().enumerate() {
        let da = delta[i * per].abs();
        let amax = 0.5 * to_f64(b.alpha.abs()).max(1e-3);
        if da > amax {
            f = f.min(amax / da);
        }
        for m in 0..np {
            let d = delta[i * per + 1 + m].abs();
            if d > STEP_CAP {
                f = f.min(STEP_CAP / d);
            }
        }
    }
    f
}

struct Fit<T: Scalar> {
    bumps: Vec<BumpParams<T>>,
    iterations: usize,
    converged: bool,
}

/// Seeds plus Gauss–Newton; bump `i` stays in region `i`.
fn fit<T: Scalar>(
    u: &dyn ScalarField<T>,
    regions: &[Region<T>],
    r: &RSpec<T>,
    cst: &Constants<T>,
    rule: &FrameRule<T>,
) -> Result<Fit<T>> {
    check_regions(regions)?;
    let np = 2 * cst.n + 2;
    let mut bumps = Vec::with_capacity(regions.len());
    for (i, reg) in regions.iter().enumerate() {
        let (c, peak) = region_argmax(u, reg);
        if !(peak > T::zero()) {
            return Err(Error::Invalid(format!("no peak of |u| in region {i}")));
        }
        let rv = r.value(&c);
        let alpha = if rv > T::zero() { rv.powf(cst.amplitude_exponent()) } else { T::one() };
        let alpha = if u.value(&c) < T::zero() { -alpha } else { alpha };
        let lam = scale_from_peak(peak, alpha.abs(), cst);
        bumps.push(BumpParams::new(alpha, c, lam)?);
    }
    let mut cur = sample(u, &bumps, rule);
    for it in 0..MAX_ITER {
        let (t, g) = tangent_system(&cur, &bumps, cst);
        let Some(delta) = solve_symmetric(&g, &t, 1e-13) else {
            return Ok(Fit { bumps, iterations: it, converged: false });
        };
        let norm_u: f64 = (0..bumps.len()).map(|i| g[(i * (np + 1), i * (np + 1))]).sum::<f64>().sqrt();
        let size = delta.dot(&(&g * &delta)).max(0.0).sqrt();
        if size <= STEP_TOL * norm_u.max(1e-300) {
            return Ok(Fit { bumps, iterations: it, converged: true });
        }
        let mut s = step_limit(&bumps, &delta, np);
        let mut accepted = false;
        for _ in 0..30 {
            let trial = apply_step(&bumps, &delta, s, np);
            if trial.iter().zip(regions).all(|(b, reg)| reg.contains(&b.center) && b.scale > T::zero()) {
                let ts = sample(u, &trial, rule);
                let jt = objective(&ts, &trial, cst);
                let j0 = objective(&ts, &bumps, cst);
                if jt <= j0 + 1e-9 * j0.abs() {
                    bumps = trial;
                    cur = ts;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            // No decrease along a Gauss–Newton direction: stationary to the
            // resolution of the quadrature.
            return Ok(Fit { bumps, iterations: it, converged: true });
        }
    }
    Ok(Fit { bumps, iterations: MAX_ITER, converged: false })
}

/// `‖∇_H(u − U)‖_{L²}` on the partition nodes of `bumps`.
pub fn residual_norm<T: Scalar>(
    u: &dyn ScalarField<T>,
    bumps: &[BumpParams<T>],
    cst: &Constants<T>,
    rule: &FrameRule<T>,
) -> T {
    let frames: Vec<Frame<T>> = bumps.iter().map(Frame::of).collect();
    let nodes = rule.partition_nodes(&frames);
    let bubbles: Vec<Bubble<T>> = bumps.iter().map(|b| Bubble::new(b.clone(), cst)).collect();
    let d = 2 * cst.n + 1;
    let s = chunk_sums::<T, _>(nodes.len(), 1, |i, acc| {
        let om = nodes.weights[i];
        if om == T::zero() {
            return;
        }
        let p = &nodes.points[i];
        let mut g = cartesian_gradient(u, p).unwrap_or_else(|_| vec![T::zero(); d]);
        let mut gb = vec![T::zero(); d];
        for b in &bubbles {
            b.gradient(p, &mut gb);
            for k in 0..d {
                g[k] -= gb[k];
            }
        }
        let h = horizontal_from_gradient(p, &g);
        acc[0] += om * h.iter().fold(T::zero(), |a, x| a + *x * *x);
    });
    s[0].max(T::zero()).sqrt()
}

/// Largest `|⟨v, e⟩| / ‖e‖` over the tangents of `bumps`.
pub fn orthogonality<T: Scalar>(
    u: &dyn ScalarField<T>,
    bumps: &[BumpParams<T>],
    cst: &Constants<T>,
    rule: &FrameRule<T>,
) -> T {
    let s = sample(u, bumps, rule);
    let (t, g) = tangent_system(&s, bumps, cst);
    let worst = (0..t.len())
        .map(|a| if g[(a, a)] > 0.0 { t[a].abs() / g[(a, a)].sqrt() } else { 0.0 })
        .fold(0.0, f64::max);
    lit(worst)
}

/// `R(ξ_i)^{(2−Q)/4}`, or `None` where `R ≤ 0`.
fn target_alpha<T: Scalar>(r: &RSpec<T>, b: &BumpParams<T>, cst: &Constants<T>) -> Option<T> {
    let rv = r.value(&b.center);
    (rv > T::zero()).then(|| rv.powf(cst.amplitude_exponent()))
}

/// Minimizer of `‖u − Σ α_i w_{ξ_i,λ_i}‖` with bump `i` in region `i`.
/// Errors on a `k`/region mismatch, overlapping regions, a region without a
/// peak, and non-convergence; `on_boundary` flags a minimizer on the edge of
/// `D_{4ε}`.
pub fn optimal_representation<T: Scalar>(
    u: &DynField<T>,
    k: usize,
    eps: T,
    regions: &[Region<T>],
    r: &RSpec<T>,
    cst: &Constants<T>,
) -> Result<Representation<T>> {
    if regions.len() != k {
        return Err(Error::Dimension { expected: k, got: regions.len() });
    }
    let rule = FrameRule::default_for(cst)?;
    let f = fit(u.as_ref(), regions, r, cst, &rule)?;
    if !f.converged {
        return Err(Error::NoConvergence(f.iterations));
    }
    let eps4 = lit::<T>(4.0) * eps;
    let on_boundary = f.bumps.iter().zip(regions).any(|(b, reg)| {
        let off = match target_alpha(r, b, cst) {
            Some(a) => (b.alpha - a).abs() >= eps4,
            None => true,
        };
        off || b.scale <= T::one() / eps4 || !reg.contains(&b.center)
    });
    let residual = residual_norm(u.as_ref(), &f.bumps, cst, &rule);
    let orth = orthogonality(u.as_ref(), &f.bumps, cst, &finer(&rule, cst)?);
    let state = MultiBump::new(f.bumps).canonical();
    let ufield: DynField<T> = Arc::new(state.field(cst));
    let v: DynField<T> = Arc::new(LinearCombination::new(vec![(T::one(), u.clone()), (-T::one(), ufield)]));
    Ok(Representation {
        bumps: state.bumps,
        v,
        residual_norm: residual,
        orthogonality: orth,
        iterations: f.iterations,
        on_boundary,
    })
}

/// Whether `u ∈ V(k, ε)`: some `Σ α_i w_{ξ_i,λ_i}` with `ξ_i` in region `i`,
/// `|α_i − R(ξ_i)^{(2−Q)/4}| < ε`, `λ_i > 1/ε` and `‖u − Σ‖ < ε`. The
/// candidate is the optimal representation; amplitudes outside the band are
/// clamped into it before the residual is measured. Never errors: failures
/// return `false` with the best witness found.
pub fn v_neighborhood_test<T: Scalar>(
    u: &DynField<T>,
    k: usize,
    eps: T,
    regions: &[Region<T>],
    r: &RSpec<T>,
    cst: &Constants<T>,
) -> (bool, Witness<T>) {
    if regions.len() != k || !(eps > T::zero()) {
        return (false, Witness::empty());
    }
    let Ok(rule) = FrameRule::default_for(cst) else {
        return (false, Witness::empty());
    };
    let Ok(f) = fit(u.as_ref(), regions, r, cst, &rule) else {
        return (false, Witness::empty());
    };
    let mut bumps = f.bumps;
    let in_regions = bumps.iter().zip(regions).all(|(b, reg)| reg.contains(&b.center));
    let mut alpha_error = T::zero();
    let mut clamped = false;
    let mut alpha_ok = true;
    let band = eps * lit(1.0 - 1e-9);
    for b in bumps.iter_mut() {
        match target_alpha(r, b, cst) {
            Some(a) => {
                let e = (b.alpha - a).abs();
                alpha_error = alpha_error.max(e);
                if e >= eps {
                    b.alpha = b.alpha.max(a - band).min(a + band);
                    clamped = true;
                }
            }
            None => {
                alpha_ok = false;
                alpha_error = T::infinity();
            }
        }
    }
    let residual = residual_norm(u.as_ref(), &bumps, cst, &rule);
    let min_scale = bumps.iter().map(|b| b.scale).fold(T::infinity(), |a, b| a.min(b));
    let accepted = in_regions && alpha_ok && min_scale > T::one() / eps && residual < eps;
    let state = MultiBump::new(bumps).canonical();
    (
        accepted,
        Witness { bumps: state.bumps, residual_norm: residual, alpha_error, min_scale, in_regions, clamped, accepted },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Zero;

    fn setup() -> (Constants<f64>, Vec<Region<f64>>, Vec<BumpParams<f64>>) {
        let cst = Constants::<f64>::new(1).unwrap();
        let c1 = HPoint::xyt(-6.0, 0.5, 1.0);
        let c2 = HPoint::xyt(6.0, -0.5, -2.0);
        let regions = vec![Region::around(&c1, 3.0, 6.0), Region::around(&c2, 3.0, 6.0)];
        let bumps = vec![BumpParams::new(0.9, c1, 8.0).unwrap(), BumpParams::new(1.1, c2, 6.0).unwrap()];
        (cst, regions, bumps)
    }

    #[test]
    fn exact_two_bump_sum_is_recovered() {
        let (cst, regions, bumps) = setup();
        let u: DynField<f64> = Arc::new(MultiBump::new(bumps.clone()).field(&cst));
        let rep = optimal_representation(&u, 2, 0.25, &regions, &RSpec::constant(1, 1.0), &cst).unwrap();
        for (a, b) in rep.bumps.iter().zip(&bumps) {
            assert!((a.alpha - b.alpha).abs() < 1e-6);
            assert!((a.scale / b.scale - 1.0).abs() < 1e-6);
            for k in 0..3 {
                assert!((a.center.coord(k) - b.center.coord(k)).abs() < 1e-6);
            }
        }
        assert!(rep.residual_norm < 1e-5, "{}", rep.residual_norm);
        assert!(rep.orthogonality < 1e-6);
    }

    #[test]
    fn zero_field_is_not_in_any_neighborhood() {
        let (cst, regions, _) = setup();
        let u: DynField<f64> = Arc::new(Zero(1));
        let (ok, w) = v_neighborhood_test(&u, 2, 0.25, &regions, &RSpec::constant(1, 1.0), &cst);
        assert!(!ok);
        assert!(w.bumps.is_empty());
    }

    #[test]
    fn single_bubble_is_not_a_two_bump_state() {
        let (cst, regions, bumps) = setup();
        let one = BumpParams { alpha: 1.0, ..bumps[0].clone() };
        let u: DynField<f64> = Arc::new(MultiBump::new(vec![one]).field(&cst));
        let (ok, w) = v_neighborhood_test(&u, 2, 0.25, &regions, &RSpec::constant(1, 1.0), &cst);
        assert!(!ok, "{w:?}");
    }

    #[test]
    fn constructed_witness_passes() {
        let (cst, regions, bumps) = setup();
        let eps = 0.25;
        let planted: Vec<BumpParams<f64>> =
            bumps.iter().map(|b| BumpParams { alpha: 1.0, center: b.center.clone(), scale: 2.0 / eps }).collect();
        let u: DynField<f64> = Arc::new(MultiBump::new(planted).field(&cst));
        let (ok, w) = v_neighborhood_test(&u, 2, eps, &regions, &RSpec::constant(1, 1.0), &cst);
        assert!(ok, "{w:?}");
        assert!(!w.clamped);
    }
}
