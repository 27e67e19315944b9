//! Warm-started descent along a decreasing `τ` schedule, with the
//! concentration diagnostics recorded at every stage.

use crate::bubbles::Constants;
use crate::field::ScalarField;
use crate::fields::GaugeRule;
use crate::functional::SubcriticalExponent;
use crate::group::{compose, dilate_unchecked};
use crate::multibump::flow::{gradient_flow, FlowResult, FlowStatus};
use crate::multibump::{FlowConfig, MultiBump, RSpec};
use crate::{lit, to_f64, Error, Result, Scalar};

const PROFILE_RADII: usize = 48;

/// Per-stage concentration data, one entry per bump.
#[derive(Clone, Debug)]
pub struct StageDiagnostics<T: Scalar> {
    /// `u` at the centers.
    pub peaks: Vec<T>,
    /// `sup d(ξ, ξ_i)^{2/(p−1)} u(ξ)` over the sampled spheres about `ξ_i`.
    pub scaled_peaks: Vec<T>,
    /// Critical points of `r ↦ r^{2/(p−1)} ū(r)` (`ū`: gauge-sphere mean)
    /// on the sampled radii; 1 for a simple profile.
    pub profile_critical_points: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct StageResult<T: Scalar> {
    pub tau: T,
    pub flow: FlowResult<T>,
    pub diagnostics: StageDiagnostics<T>,
}

/// Radii from `1e-3/λ` up to `r0`, geometric.
fn radii(lam: f64, r0: f64) -> Vec<f64> {
    let a = (1e-3 / lam).min(r0 * 1e-3);
    (0..PROFILE_RADII).map(|i| a * (r0 / a).powf(i as f64 / (PROFILE_RADII - 1) as f64)).collect()
}

/// Sign changes of successive differences, ignoring changes below `1e-9` of
/// the largest value.
fn critical_points(v: &[f64]) -> usize {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut last = 0i8;
    let mut count = 0;
    for w in v.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= 1e-9 * scale {
            continue;
        }
        let s = if d > 0.0 { 1 } else { -1 };
        if last != 0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

pub fn stage_diagnostics<T: Scalar>(
    state: &MultiBump<T>,
    exp: &SubcriticalExponent<T>,
    cst: &Constants<T>,
    r0: &[T],
) -> StageDiagnostics<T> {
    let f = state.field(cst);
    let e = 2.0 / (to_f64(exp.p) - 1.0);
    let unit = GaugeRule::<T>::new(cst.n, 2, 12, 12).unit_nodes();
    let total: f64 = unit.iter().map(|(_, w)| to_f64(*w)).sum();
    let mut peaks = Vec::new();
    let mut scaled = Vec::new();
    let mut crit = Vec::new();
    for (b, r0) in state.bumps.iter().zip(r0) {
        peaks.push(f.value(&b.center));
        let mut sup = 0.0f64;
        let mut profile = Vec::with_capacity(PROFILE_RADII);
        for r in radii(to_f64(b.scale), to_f64(*r0)) {
            let mut mean = 0.0;
            for (eta, w) in &unit {
                let p = compose(&b.center, &dilate_unchecked(lit::<T>(r), eta));
                let u = to_f64(f.value(&p));
                sup = sup.max(r.powf(e) * u);
                mean += to_f64(*w) * u;
            }
            profile.push(r.powf(e) * mean / total);
        }
        scaled.push(lit(sup));
        crit.push(critical_points(&profile));
    }
    StageDiagnostics { peaks, scaled_peaks: scaled, profile_critical_points: crit }
}

/// Radii for the diagnostics: the inscribed radius of each bump's region,
/// else `10/λ_i`.
fn diagnostic_radii<T: Scalar>(state: &MultiBump<T>, cfg: &FlowConfig<T>) -> Vec<T> {
    state
        .bumps
        .iter()
        .enumerate()
        .map(|(i, b)| match cfg.regions.get(i) {
            Some(reg) if cfg.regions.len() == state.k() && reg.contains(&b.center) => reg.inscribed_radius(&b.center),
            _ => lit::<T>(10.0) / b.scale,
        })
        .collect()
}

/// Runs the flow at each `τ` of `cfg.tau_schedule` (strictly decreasing,
/// ending at 0), starting each stage from the previous final state. Stops
/// after a stage whose bumps escaped or whose fiber had no maximum.
pub fn subcritical_continuation<T: Scalar>(
    start: &MultiBump<T>,
    r: &RSpec<T>,
    cst: &Constants<T>,
    cfg: &FlowConfig<T>,
) -> Result<Vec<StageResult<T>>> {
    let sched = &cfg.tau_schedule;
    if sched.is_empty() || sched.windows(2).any(|w| !(w[1] < w[0])) || *sched.last().unwrap() != T::zero() {
        return Err(Error::Invalid("tau schedule must decrease strictly to 0".into()));
    }
    let mut state = start.clone();
    let mut out = Vec::with_capacity(sched.len());
    for &tau in sched {
        let exp = SubcriticalExponent::new(tau, cst)?;
        let flow = gradient_flow(&state, r, &exp, cst, cfg)?;
        let stop = matches!(flow.status, FlowStatus::BumpEscape { .. } | FlowStatus::NoFiberMaximum);
        state = flow.final_state.clone();
        let r0 = diagnostic_radii(&state, cfg);
        let diagnostics = stage_diagnostics(&state, &exp, cst, &r0);
        out.push(StageResult { tau, flow, diagnostics });
        if stop {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::HPoint;
    use crate::bubbles::BumpParams;

    #[test]
    fn bubble_persists_with_constant_curvature() {
        let cst = Constants::<f64>::new(1).unwrap();
        let mut cfg = FlowConfig::new(1.0, 60, 1e-4).unwrap();
        cfg.tau_schedule = vec![0.05, 0.02, 0.0];
        let start = MultiBump::new(vec![BumpParams::new(1.0, HPoint::xyt(0.0, 0.0, 0.0), 4.0).unwrap()]);
        let stages = subcritical_continuation(&start, &RSpec::constant(1, 1.0), &cst, &cfg).unwrap();
        assert_eq!(stages.len(), 3);
        let last = stages.last().unwrap();
        assert!(last.flow.status.converged(), "{:?}", last.flow.status);
        assert_eq!(last.diagnostics.profile_critical_points, vec![1]);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((last.flow.energy / pi2 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn schedule_must_end_at_zero() {
        let cst = Constants::<f64>::new(1).unwrap();
        let mut cfg = FlowConfig::<f64>::default();
        cfg.tau_schedule = vec![0.1, 0.05];
        let start = MultiBump::new(vec![BumpParams::unit(1)]);
        assert!(subcritical_continuation(&start, &RSpec::constant(1, 1.0), &cst, &cfg).is_err());
    }
}
