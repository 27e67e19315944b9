//! Descent for `I_{R,τ}` on bubble sums.
//!
//! The amplitudes sit at the fiber maximum of `α ↦ I(Σ α_i w_i)`, so the
//! flow descends the reduced energy `Ẽ(ξ, λ) = max_α I` in the frame steps
//! `(η, log λ)` of each bump (`ξ ← ξ ∘ δ_{1/λ}η`). The direction is the
//! tangent-space projection of `−I'`, i.e. `−G^{-1}b` with `G` the `H¹` Gram
//! matrix of the tangent vectors and `b` the first variation along them.
//! Steps are accepted only on strict decrease.

use nalgebra::DVector;

use crate::bubbles::{BumpParams, Constants};
use crate::functional::SubcriticalExponent;
use crate::linalg::solve_symmetric;
use crate::multibump::correction::correct;
use crate::multibump::reduced::{step_bump, Reduced};
use crate::multibump::{FlowConfig, MultiBump, Projection, RSpec};
use crate::{lit, to_f64, Result, Scalar};

/// Largest frame step per iteration: `|η_k| ≤ 0.5`, `|Δ log λ| ≤ 0.5`.
const STEP_CAP: f64 = 0.5;
const MIN_STEP: f64 = 1e-12;
const MAX_MULTIPLIER: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    MaxSteps,
    /// Line search found no decrease above the minimal step.
    StepCollapse { step: usize },
    /// A center left its region.
    BumpEscape { bump: usize, step: usize },
    /// `∫ R H^τ w_i^{p+1} ≤ 0` for some bump: the fiber has no maximum.
    NoFiberMaximum,
}

impl FlowStatus {
    pub fn converged(&self) -> bool {
        matches!(self, FlowStatus::Converged)
    }

    pub fn label(&self) -> String {
        match self {
            FlowStatus::Converged => "converged".into(),
            FlowStatus::MaxSteps => "max_steps".into(),
            FlowStatus::StepCollapse { step } => format!("step_collapse@{step}"),
            FlowStatus::BumpEscape { bump, step } => format!("bump_escape:{bump}@{step}"),
            FlowStatus::NoFiberMaximum => "no_fiber_maximum".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TraceRow<T: Scalar> {
    pub step: usize,
    pub tau: T,
    pub energy: T,
    pub grad_norm: T,
    pub bumps: Vec<BumpParams<T>>,
}

#[derive(Clone, Debug)]
pub struct FlowResult<T: Scalar> {
    pub final_state: MultiBump<T>,
    pub trace: Vec<TraceRow<T>>,
    pub status: FlowStatus,
    pub energy: T,
    pub grad_norm: T,
}

pub(crate) struct Point<T: Scalar> {
    pub bumps: Vec<BumpParams<T>>,
    pub red: Reduced<T>,
    pub alpha: Vec<T>,
    pub energy: f64,
}

pub(crate) fn evaluate<T: Scalar>(
    bumps: &[BumpParams<T>],
    cst: &Constants<T>,
    rule: &crate::fields::FrameRule<T>,
    r: &RSpec<T>,
    exp: &SubcriticalExponent<T>,
) -> Option<Point<T>> {
    let red = Reduced::new(bumps, cst, rule, r, exp);
    let m = red.kinetic_matrix();
    let (alpha, energy) = red.maximize_alpha(&m)?;
    if !energy.is_finite() {
        return None;
    }
    let bumps = bumps
        .iter()
        .zip(&alpha)
        .map(|(b, a)| BumpParams { alpha: *a, center: b.center.clone(), scale: b.scale })
        .collect();
    Some(Point { bumps, red, alpha, energy })
}

fn escaped<T: Scalar>(bumps: &[BumpParams<T>], cfg: &FlowConfig<T>) -> Option<usize> {
    if cfg.regions.len() != bumps.len() {
        return None;
    }
    bumps.iter().zip(&cfg.regions).position(|(b, r)| !r.contains(&b.center))
}

/// Runs the descent from `start` (its cutoff and corrections are dropped;
/// full-grid mode recomputes a correction after the parameter phase).
pub fn gradient_flow<T: Scalar>(
    start: &MultiBump<T>,
    r: &RSpec<T>,
    exp: &SubcriticalExponent<T>,
    cst: &Constants<T>,
    cfg: &FlowConfig<T>,
) -> Result<FlowResult<T>> {
    let rule = cfg.frame_rule(cst)?;
    let np = 2 * cst.n + 2;
    let tol = to_f64(cfg.gradient_tolerance);
    let mut trace = Vec::new();
    let mut cur = match evaluate(&start.bumps, cst, &rule, r, exp) {
        Some(p) => p,
        None => {
            return Ok(FlowResult {
                final_state: MultiBump::new(start.bumps.clone()),
                trace,
                status: FlowStatus::NoFiberMaximum,
                energy: T::nan(),
                grad_norm: T::nan(),
            })
        }
    };
    let mut s = to_f64(cfg.step_size);
    let mut status = FlowStatus::MaxSteps;
    let mut gn = f64::NAN;
    for step in 0..=cfg.max_steps {
        let jets = cur.red.jets();
        let (b, g) = cur.red.flow_gradient(&cur.alpha, &jets);
        let dir = solve_symmetric(&g, &b, 1e-12).unwrap_or_else(|| DVector::zeros(b.len()));
        gn = b.dot(&dir).max(0.0).sqrt();
        trace.push(TraceRow {
            step,
            tau: exp.tau,
            energy: lit(cur.energy),
            grad_norm: lit(gn),
            bumps: cur.bumps.clone(),
        });
        if let Some(i) = escaped(&cur.bumps, cfg) {
            status = FlowStatus::BumpEscape { bump: i, step };
            break;
        }
        if gn < tol {
            status = FlowStatus::Converged;
            break;
        }
        if step == cfg.max_steps {
            break;
        }
        let cap = (0..cur.bumps.len())
            .flat_map(|i| (0..np).map(move |m| (i, m)))
            .map(|(i, m)| dir[i * np + m].abs())
            .fold(0.0, f64::max);
        let mut accepted = false;
        while s * cap.max(1e-300) >= MIN_STEP * 1e-3 && s >= MIN_STEP {
            let f = if s * cap > STEP_CAP { STEP_CAP / (s * cap) } else { 1.0 };
            let trial: Vec<BumpParams<T>> = cur
                .bumps
                .iter()
                .enumerate()
                .map(|(i, bp)| {
                    let d: Vec<T> = (0..np).map(|m| lit::<T>(-s * f * dir[i * np + m])).collect();
                    step_bump(bp, &d[..np - 1], d[np - 1])
                })
                .collect();
            if let Some(next) = evaluate(&trial, cst, &rule, r, exp) {
                if next.energy < cur.energy {
                    cur = next;
                    accepted = true;
                    s = (s * f * 2.0).min(MAX_MULTIPLIER);
                    break;
                }
            }
            s *= if f < 1.0 { 0.5 * f } else { 0.5 };
        }
        if !accepted {
            status = if gn < 10.0 * tol { FlowStatus::Converged } else { FlowStatus::StepCollapse { step } };
            break;
        }
    }
    let mut final_state = MultiBump::new(cur.bumps.clone());
    let mut energy = cur.energy;
    if cfg.projection == Projection::FullGrid && !matches!(status, FlowStatus::BumpEscape { .. }) {
        let (grids, rows) = correct(&cur, r, exp, cst, cfg, trace.len())?;
        if let Some(last) = rows.last() {
            energy = to_f64(last.energy);
        }
        trace.extend(rows);
        final_state.corrections = grids;
    }
    Ok(FlowResult { final_state, trace, status, energy: lit(energy), grad_norm: lit(gn) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::HPoint;

    #[test]
    fn constant_curvature_single_bubble_is_critical() {
        let cst = Constants::<f64>::new(1).unwrap();
        let exp = SubcriticalExponent::critical(&cst);
        let start = MultiBump::new(vec![BumpParams::new(1.0, HPoint::xyt(0.3, 0.1, -0.2), 2.0).unwrap()]);
        let cfg = FlowConfig::new(1.0, 20, 1e-4).unwrap();
        let res = gradient_flow(&start, &RSpec::constant(1, 1.0), &exp, &cst, &cfg).unwrap();
        assert!(res.status.converged(), "{:?}", res.status);
        assert_eq!(res.trace.len(), 1);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((res.energy / pi2 - 1.0).abs() < 1e-6);
    }
}
