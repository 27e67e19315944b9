//! Multi-bump states, the `V(k,ε)` test, optimal representation, the
//! reduced gradient flow and the prescribed-curvature families.

pub mod ansatz;
pub mod continuation;
pub(crate) mod correction;
pub mod flow;
pub mod perturbation;
pub(crate) mod reduced;
pub mod represent;
pub mod rspec;

use std::sync::Arc;

pub use ansatz::{ansatz, region_peak, Cutoff};
pub use continuation::{stage_diagnostics, subcritical_continuation, StageDiagnostics, StageResult};
pub use flow::{gradient_flow, FlowResult, FlowStatus, TraceRow};
pub use perturbation::{anchor_count, build_perturbation, default_psi, tail_oscillation, PerturbationOptions};
pub use represent::{optimal_representation, v_neighborhood_test, Representation, Witness};
pub use rspec::{Component, Flatness, FlatnessFamily, PeriodicSum, Perturbation, RSpec, Ramp};

use crate::bubbles::{Bubble, BumpParams, Constants};
use crate::field::ScalarField;
use crate::fields::{FrameRule, GridField, GridSpec};
use crate::group::{compose, dist, inverse, HPoint};
use crate::ops::{cartesian_gradient, cartesian_hessian};
use crate::{lit, Error, Result, Scalar};

/// `Σ α_i w_{ξ_i,λ_i} + v`, optionally with each bubble multiplied by a
/// radial cutoff about its center.
#[derive(Clone, Debug)]
pub struct MultiBump<T: Scalar> {
    pub bumps: Vec<BumpParams<T>>,
    /// Grid corrections `v` (one box per bump in full-grid mode).
    pub corrections: Vec<Arc<GridField<T>>>,
    pub cutoff: Option<Cutoff<T>>,
}

impl<T: Scalar> MultiBump<T> {
    pub fn new(bumps: Vec<BumpParams<T>>) -> Self {
        MultiBump { bumps, corrections: Vec::new(), cutoff: None }
    }

    pub fn k(&self) -> usize {
        self.bumps.len()
    }

    pub fn n(&self) -> usize {
        self.bumps.first().map(|b| b.center.n()).unwrap_or(1)
    }

    pub fn field(&self, cst: &Constants<T>) -> MultiBumpField<T> {
        MultiBumpField {
            n: cst.n,
            bubbles: self.bumps.iter().map(|b| Bubble::new(b.clone(), cst)).collect(),
            corrections: self.corrections.clone(),
            cutoff: self.cutoff,
        }
    }

    /// Bumps sorted by `(x_1, y_1, t)` of the centers.
    pub fn canonical(mut self) -> Self {
        self.bumps.sort_by(|a, b| {
            let ka = (a.center.x[0], a.center.y[0], a.center.t);
            let kb = (b.center.x[0], b.center.y[0], b.center.t);
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        });
        self
    }

    /// The state moved by `T_a`: `u(a ∘ ·)` has centers `a^{-1} ∘ ξ_i`.
    pub fn translated(&self, a: &HPoint<T>) -> Self {
        let ai = inverse(a);
        MultiBump {
            bumps: self
                .bumps
                .iter()
                .map(|b| BumpParams { alpha: b.alpha, center: compose(&ai, &b.center), scale: b.scale })
                .collect(),
            corrections: self
                .corrections
                .iter()
                .map(|g| {
                    let mut f = (**g).clone();
                    let o = compose(&ai, &f.spec.origin);
                    f.spec = f.spec.with_origin(o);
                    Arc::new(f)
                })
                .collect(),
            cutoff: self.cutoff,
        }
    }

    /// Peak values `α_i c0 λ_i^{(Q−2)/2}` (plus the correction at the center).
    pub fn peaks(&self, cst: &Constants<T>) -> Vec<T> {
        let f = self.field(cst);
        self.bumps.iter().map(|b| f.value(&b.center)).collect()
    }
}

/// Evaluator for a [`MultiBump`].
#[derive(Clone, Debug)]
pub struct MultiBumpField<T: Scalar> {
    n: usize,
    pub bubbles: Vec<Bubble<T>>,
    pub corrections: Vec<Arc<GridField<T>>>,
    pub cutoff: Option<Cutoff<T>>,
}

impl<T: Scalar> MultiBumpField<T> {
    fn bubble_part(&self, p: &HPoint<T>) -> T {
        let mut s = T::zero();
        for b in &self.bubbles {
            let chi = match &self.cutoff {
                Some(c) => c.value(&b.params.center, p),
                None => T::one(),
            };
            if chi != T::zero() {
                s += chi * b.value(p);
            }
        }
        s
    }
}

impl<T: Scalar> ScalarField<T> for MultiBumpField<T> {
    fn n(&self) -> usize {
        self.n
    }

    fn value(&self, p: &HPoint<T>) -> T {
        let mut s = self.bubble_part(p);
        for v in &self.corrections {
            s += v.value(p);
        }
        s
    }

    fn gradient(&self, p: &HPoint<T>, g: &mut [T]) -> bool {
        let d = 2 * self.n + 1;
        let mut buf = vec![T::zero(); d];
        g[..d].iter_mut().for_each(|v| *v = T::zero());
        for b in &self.bubbles {
            b.gradient(p, &mut buf);
            match &self.cutoff {
                Some(c) => {
                    let (chi, dchi) = c.jet(&b.params.center, p);
                    if chi == T::zero() && dchi.iter().all(|v| *v == T::zero()) {
                        continue;
                    }
                    let w = b.value(p);
                    for k in 0..d {
                        g[k] += chi * buf[k] + dchi[k] * w;
                    }
                }
                None => (0..d).for_each(|k| g[k] += buf[k]),
            }
        }
        for v in &self.corrections {
            if let Ok(gv) = cartesian_gradient(v.as_ref(), p) {
                (0..d).for_each(|k| g[k] += gv[k]);
            }
        }
        true
    }

    fn hessian(&self, p: &HPoint<T>, h: &mut [T]) -> bool {
        if self.cutoff.is_some() {
            return false;
        }
        let d = 2 * self.n + 1;
        let mut buf = vec![T::zero(); d * d];
        h[..d * d].iter_mut().for_each(|v| *v = T::zero());
        for b in &self.bubbles {
            b.hessian(p, &mut buf);
            (0..d * d).for_each(|k| h[k] += buf[k]);
        }
        for v in &self.corrections {
            if let Ok(hv) = cartesian_hessian(v.as_ref(), p) {
                (0..d * d).for_each(|k| h[k] += hv[k]);
            }
        }
        true
    }
}

/// An open coordinate box `{lo < ξ < hi}` in `R^{2n+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Region<T: Scalar> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> Region<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() % 2 != 1 {
            return Err(Error::Invalid("region bounds need 2n+1 coordinates".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Invalid("region box is empty".into()));
        }
        Ok(Region { lo, hi })
    }

    /// The box `center ∘ ([−a,a]^{2n} × [−b,b])`, approximated by its
    /// coordinate bounding box.
    pub fn around(center: &HPoint<T>, a: T, b: T) -> Self {
        let n = center.n();
        let d = 2 * n + 1;
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for k in 0..2 * n {
            lo.push(center.coord(k) - a);
            hi.push(center.coord(k) + a);
        }
        // The twist 2(y_c·x − x_c·y) of the translated box.
        let mut tw = T::zero();
        for j in 0..n {
            tw += lit::<T>(2.0) * a * (center.x[j].abs() + center.y[j].abs());
        }
        lo.push(center.t - b - tw);
        hi.push(center.t + b + tw);
        Region { lo, hi }
    }

    pub fn n(&self) -> usize {
        (self.lo.len() - 1) / 2
    }

    pub fn contains(&self, p: &HPoint<T>) -> bool {
        (0..self.lo.len()).all(|k| {
            let v = p.coord(k);
            v > self.lo[k] && v < self.hi[k]
        })
    }

    pub fn center(&self) -> HPoint<T> {
        let c: Vec<T> = self.lo.iter().zip(&self.hi).map(|(a, b)| (*a + *b) / lit(2.0)).collect();
        HPoint::from_coords(&c)
    }

    /// Lattice with `m` points per axis, boundary included.
    pub fn lattice(&self, m: usize) -> Vec<HPoint<T>> {
        lattice_points(&self.lo, &self.hi, m, true)
    }

    /// Lattice strictly inside the box.
    pub fn interior_lattice(&self, m: usize) -> Vec<HPoint<T>> {
        lattice_points(&self.lo, &self.hi, m, false)
    }

    /// Points on the boundary faces, `m` per axis.
    pub fn boundary_samples(&self, m: usize) -> Vec<HPoint<T>> {
        let d = self.lo.len();
        self.lattice(m)
            .into_iter()
            .filter(|p| (0..d).any(|k| p.coord(k) == self.lo[k] || p.coord(k) == self.hi[k]))
            .collect()
    }

    /// Sampled radius of the largest gauge ball about `c` inside the box.
    pub fn inscribed_radius(&self, c: &HPoint<T>) -> T {
        self.boundary_samples(15).iter().map(|p| dist(p, c)).fold(T::infinity(), |a, b| a.min(b))
    }
}

fn lattice_points<T: Scalar>(lo: &[T], hi: &[T], m: usize, closed: bool) -> Vec<HPoint<T>> {
    let d = lo.len();
    let m = m.max(2);
    let total = m.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut c = vec![T::zero(); d];
    for mut idx in 0..total {
        for k in 0..d {
            let i = idx % m;
            idx /= m;
            let f = if closed {
                lit::<T>(i as f64 / (m - 1) as f64)
            } else {
                lit::<T>((i as f64 + 1.0) / (m + 1) as f64)
            };
            c[k] = lo[k] + (hi[k] - lo[k]) * f;
        }
        out.push(HPoint::from_coords(&c));
    }
    out
}

/// Checks that the regions are pairwise at (sampled) gauge distance ≥ 1.
pub fn check_regions<T: Scalar>(regions: &[Region<T>]) -> Result<()> {
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            let a = regions[i].lattice(7);
            let b = regions[j].lattice(7);
            let mut m = T::infinity();
            for p in &a {
                for q in &b {
                    m = m.min(dist(p, q));
                }
            }
            if !(m >= T::one()) {
                return Err(Error::Regions(i, j));
            }
        }
    }
    Ok(())
}

/// Which state space the flow evolves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// Bubble parameters only.
    ParameterManifold,
    /// Bubble parameters, then a grid correction `v` orthogonal to the
    /// bubble tangent space.
    FullGrid,
}

/// Solver settings.
#[derive(Clone, Debug)]
pub struct FlowConfig<T: Scalar> {
    /// Initial multiplier of the natural-gradient step.
    pub step_size: T,
    pub max_steps: usize,
    /// Stop when the tangent-space dual norm of `I'` falls below this.
    pub gradient_tolerance: T,
    pub tau_schedule: Vec<T>,
    pub projection: Projection,
    /// Regions the bumps must stay in (bump `i` in region `i`); empty means
    /// unconstrained.
    pub regions: Vec<Region<T>>,
    /// Frame quadrature `(n_r, n_phi, n_angle)`; `None` for the default.
    pub rule: Option<(usize, usize, usize)>,
    /// Correction grid half-widths `(a, b)` in bubble units and nodes per
    /// axis, for full-grid mode.
    pub correction_grid: (T, T, usize),
    pub correction_steps: usize,
}

impl<T: Scalar> FlowConfig<T> {
    pub fn new(step_size: T, max_steps: usize, gradient_tolerance: T) -> Result<Self> {
        if !(step_size > T::zero()) {
            return Err(Error::Invalid("step size must be positive".into()));
        }
        if !(gradient_tolerance > T::zero()) {
            return Err(Error::Invalid("gradient tolerance must be positive".into()));
        }
        Ok(FlowConfig {
            step_size,
            max_steps,
            gradient_tolerance,
            tau_schedule: [0.1, 0.05, 0.02, 0.01, 0.0].iter().map(|v| lit(*v)).collect(),
            projection: Projection::ParameterManifold,
            regions: Vec::new(),
            rule: None,
            correction_grid: (lit(3.0), lit(6.0), 33),
            correction_steps: 60,
        })
    }

    pub fn frame_rule(&self, cst: &Constants<T>) -> Result<FrameRule<T>> {
        match self.rule {
            Some((a, b, c)) => FrameRule::new(cst, a, b, c),
            None => FrameRule::default_for(cst),
        }
    }
}

impl<T: Scalar> Default for FlowConfig<T> {
    fn default() -> Self {
        FlowConfig::new(T::one(), 400, lit(1e-4)).expect("valid defaults")
    }
}

/// Grid covering the bubbles of `state` (bubble units dilated by `1/λ`).
pub(crate) fn correction_spec<T: Scalar>(b: &BumpParams<T>, a: T, bt: T, m: usize) -> Result<GridSpec<T>> {
    let m = lit::<T>((m.max(5) - 1) as f64);
    GridSpec::around(&b.center, b.scale, a, bt, lit::<T>(2.0) * a / m, lit::<T>(2.0) * bt / m)
}
