//! The perturbed curvature `R_{ε,k,m,l}` and its components.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::field::{DynField, FnField, ScalarField};
use crate::fields::{GaugeRule, GridSpec};
use crate::group::{compose, dilate_unchecked, dist, gauge_norm, HPoint};
use crate::multibump::rspec::{Component, Perturbation};
use crate::multibump::RSpec;
use crate::ops::dilation_generator;
use crate::{lit, to_f64, Error, Result, Scalar};

/// Radii (in units of `S`) on which `A_S` is sampled.
const TAIL_RADII: [f64; 14] = [1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 32.0, 64.0, 256.0, 1024.0];
/// Radii on which `𝒳ψ < 0` is checked.
const CHECK_RADII: [f64; 12] = [0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0];

#[derive(Clone, Debug)]
pub struct PerturbationOptions<T: Scalar> {
    /// Flood-fill spacing in the horizontal directions (the `t` spacing grows
    /// with the box so that the node count stays balanced).
    pub spacing: T,
    /// Points `e_i` on the unit gauge sphere; `None` places `k̄` of them
    /// evenly on the circle `{x_1 + i y_1 = e^{iθ}}`.
    pub anchors: Option<Vec<HPoint<T>>>,
    /// Largest half-width of the flood-fill box; `None` uses `2√l + 2`.
    pub max_half_width: Option<T>,
}

impl<T: Scalar> Default for PerturbationOptions<T> {
    fn default() -> Self {
        PerturbationOptions { spacing: lit(0.1), anchors: None, max_half_width: None }
    }
}

/// Smallest `k̄` with `C(k̄, s) ≥ k` for every `2 ≤ s ≤ m`.
pub fn anchor_count(k: usize, m: usize) -> Result<usize> {
    if m < 2 || k < 1 {
        return Err(Error::Invalid("need k ≥ 1 and m ≥ 2".into()));
    }
    let binom = |n: usize, s: usize| -> f64 {
        if s > n {
            return 0.0;
        }
        (0..s).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    let mut kb = m;
    while (2..=m).any(|s| binom(kb, s) < k as f64) {
        kb += 1;
    }
    Ok(kb)
}

/// `ψ = ψ_∞ + h/(1 + |ξ|⁴)`, for which `𝒳ψ = −4h|ξ|⁴/(1+|ξ|⁴)² < 0` off 0.
pub fn default_psi<T: Scalar>(n: usize, psi_inf: T, h: T) -> DynField<T> {
    Arc::new(
        FnField::new(n, move |p: &HPoint<T>| psi_inf + h / (T::one() + quartic(p))).with_gradient(move |p, g| {
            let q = quartic(p);
            let c = -h / ((T::one() + q) * (T::one() + q));
            let s = p.z_norm2();
            let n = p.n();
            let four = lit::<T>(4.0);
            for j in 0..n {
                g[j] = c * four * s * p.x[j];
                g[n + j] = c * four * s * p.y[j];
            }
            g[2 * n] = c * lit::<T>(2.0) * p.t;
        }),
    )
}

/// `|ξ|⁴ = |z|⁴ + t²`.
fn quartic<T: Scalar>(p: &HPoint<T>) -> T {
    let s = p.z_norm2();
    s * s + p.t * p.t
}

fn sphere_samples<T: Scalar>(n: usize, radii: impl Iterator<Item = T>) -> Vec<HPoint<T>> {
    let unit = GaugeRule::<T>::new(n, 2, 12, 12).unit_nodes();
    radii.flat_map(|r| unit.iter().map(move |(eta, _)| dilate_unchecked(r, eta)).collect::<Vec<_>>()).collect()
}

/// Sampled `A_S = sup_{|ξ|≥S} |R − R_∞| + sup_{|ξ|≥S} |ψ − ψ_∞|`.
pub fn tail_oscillation<T: Scalar>(base: &RSpec<T>, r_inf: T, psi: &dyn ScalarField<T>, psi_inf: T, s: T) -> T {
    let pts = sphere_samples(psi.n(), TAIL_RADII.iter().map(|f| s * lit::<T>(*f)));
    let a = pts.iter().map(|p| (base.value(p) - r_inf).abs()).fold(T::zero(), |m, v| m.max(v));
    let b = pts.iter().map(|p| (psi.value(p) - psi_inf).abs()).fold(T::zero(), |m, v| m.max(v));
    a + b
}

fn default_anchors<T: Scalar>(n: usize, kbar: usize) -> Vec<HPoint<T>> {
    (0..kbar)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / kbar as f64;
            let mut x = vec![T::zero(); n];
            let mut y = vec![T::zero(); n];
            x[0] = lit(th.cos());
            y[0] = lit(th.sin());
            HPoint::new(&x, &y, T::zero())
        })
        .collect()
}

/// `e^l` (componentwise `l e`, since `e` commutes with itself).
fn power<T: Scalar>(e: &HPoint<T>, l: T) -> HPoint<T> {
    let x: Vec<T> = e.x.iter().map(|v| *v * l).collect();
    let y: Vec<T> = e.y.iter().map(|v| *v * l).collect();
    HPoint::new(&x, &y, e.t * l)
}

/// Symmetric box of half-width `a` (`a²` in `t`) with a node at the origin.
fn fill_grid<T: Scalar>(n: usize, a: T, h: T) -> Result<GridSpec<T>> {
    let d = 2 * n + 1;
    let m = to_f64(a / h).ceil().max(1.0);
    let b = a * a.max(T::one());
    let mut lo = vec![-a; d];
    let mut hi = vec![a; d];
    let mut sp = vec![a / lit(m); d];
    lo[d - 1] = -b;
    hi[d - 1] = b;
    sp[d - 1] = b / lit(m);
    GridSpec::new(n, &lo, &hi, &sp)
}

/// Connected component (axis neighbours) of `{inside}` containing the
/// origin node, on `spec`. Returns the mask and whether it reaches the
/// boundary.
fn flood<T: Scalar, F: Fn(&HPoint<T>) -> bool + Sync>(spec: &GridSpec<T>, inside: F) -> (Vec<bool>, bool) {
    let d = spec.dim();
    let counts = spec.counts().to_vec();
    let mut stride = vec![1usize; d];
    for k in 1..d {
        stride[k] = stride[k - 1] * counts[k - 1];
    }
    let start: usize = (0..d).map(|k| (counts[k] / 2) * stride[k]).sum();
    let mut mask = vec![false; spec.len()];
    let mut seen = vec![false; spec.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut touches = false;
    let mut buf = vec![T::zero(); d];
    while let Some(idx) = queue.pop_front() {
        spec.local_coords(idx, &mut buf);
        if !inside(&HPoint::from_coords(&buf)) {
            continue;
        }
        mask[idx] = true;
        for k in 0..d {
            let i = (idx / stride[k]) % counts[k];
            if i == 0 || i + 1 == counts[k] {
                touches = true;
            }
            if i > 0 && !seen[idx - stride[k]] {
                seen[idx - stride[k]] = true;
                queue.push_back(idx - stride[k]);
            }
            if i + 1 < counts[k] && !seen[idx + stride[k]] {
                seen[idx + stride[k]] = true;
                queue.push_back(idx + stride[k]);
            }
        }
    }
    (mask, touches)
}

/// Builds `R_{ε,k,m,l}`: on the component `Ω̃_l^{(i)}` containing `(e_i)^l`
/// of `{ε(ψ((e_i)^{-l}∘ξ) − ψ_∞) + R_∞ − A_{√l} > R(ξ)}` the value is the
/// left side, elsewhere `R`. `R_∞` is the base's limit at infinity; `A_{√l}`
/// and the sign of `𝒳ψ` are sampled on gauge spheres.
#[allow(clippy::too_many_arguments)]
pub fn build_perturbation<T: Scalar>(
    base: &RSpec<T>,
    psi: DynField<T>,
    psi_inf: T,
    eps: T,
    k: usize,
    m: usize,
    l: T,
    opts: &PerturbationOptions<T>,
) -> Result<RSpec<T>> {
    let n = base.n();
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::Invalid("eps must lie in (0, 1)".into()));
    }
    if !(l > T::one()) {
        return Err(Error::Invalid("l must exceed 1".into()));
    }
    if !(psi_inf > T::zero()) {
        return Err(Error::Invalid("psi_inf must be positive".into()));
    }
    let r_inf = base
        .limit_at_infinity()
        .ok_or_else(|| Error::Invalid(format!("base curvature ({}) has no limit at infinity", base.kind())))?;
    for p in sphere_samples(n, CHECK_RADII.iter().map(|r| lit::<T>(*r))) {
        let x = dilation_generator(psi.as_ref(), &p)?;
        if !(x < T::zero()) {
            return Err(Error::Invalid(format!("psi must satisfy Xpsi < 0 away from 0 (Xpsi = {} at |ξ| = {})", to_f64(x), to_f64(gauge_norm(&p)))));
        }
    }
    let kbar = anchor_count(k, m)?;
    let anchors = match &opts.anchors {
        Some(a) => {
            if a.len() < kbar {
                return Err(Error::Invalid(format!("need {kbar} anchors, got {}", a.len())));
            }
            for (i, e) in a.iter().enumerate() {
                if (to_f64(gauge_norm(e)) - 1.0).abs() > 1e-9 {
                    return Err(Error::Invalid(format!("anchor {i} is not on the unit gauge sphere")));
                }
                for (j, f) in a.iter().enumerate().take(i) {
                    if to_f64(dist(e, f)) < 1e-12 {
                        return Err(Error::Anchors(j, i));
                    }
                }
            }
            a.clone()
        }
        None => default_anchors(n, kbar),
    };
    let a_sqrt_l = tail_oscillation(base, r_inf, psi.as_ref(), psi_inf, l.sqrt());
    let cap = opts.max_half_width.unwrap_or(lit::<T>(2.0) * l.sqrt() + lit(2.0));
    let level = r_inf - a_sqrt_l;
    let mut components = Vec::with_capacity(anchors.len());
    for (i, e) in anchors.iter().enumerate() {
        let anchor = power(e, l);
        let inside = |eta: &HPoint<T>| eps * (psi.value(eta) - psi_inf) + level > base.value(&compose(&anchor, eta));
        if !inside(&HPoint::origin(n)) {
            return Err(Error::Invalid(format!("the defining inequality fails at anchor {i}")));
        }
        let mut a = T::one().min(cap);
        loop {
            let grid = fill_grid(n, a, opts.spacing.min(a))?;
            let (mask, touches) = flood(&grid, inside);
            if !touches || a >= cap {
                components.push(Component { anchor: anchor.clone(), grid, mask });
                break;
            }
            a = (a * lit(2.0)).min(cap);
        }
    }
    Ok(RSpec::Perturbation(Arc::new(Perturbation {
        base: base.clone(),
        psi,
        psi_inf,
        eps,
        l,
        r_inf,
        a_sqrt_l,
        components,
    })))
}
