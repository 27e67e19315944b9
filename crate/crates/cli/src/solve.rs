//! `crnir solve`: subcritical continuation from an ansatz or explicit start.

use std::sync::Arc;

use anyhow::{bail, Result};
use crnirenberg::bubbles::{energy_level, BumpParams, Constants};
use crnirenberg::field::{DynField, ScalarField};
use crnirenberg::group::HPoint;
use crnirenberg::multibump::{
    ansatz, subcritical_continuation, v_neighborhood_test, FlowStatus, MultiBump, StageResult, Witness,
};
use crnirenberg::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{num, write_columns, write_csv, write_text};
use crate::Outcome;

#[derive(Serialize)]
struct WitnessFile {
    status: String,
    converged: bool,
    note: String,
    k: usize,
    eps: f64,
    final_tau: f64,
    energy: f64,
    level: f64,
    energy_over_level: f64,
    energy_in_band: bool,
    v_test: Option<VTest>,
    bumps: Vec<BumpOut>,
}

#[derive(Serialize)]
struct VTest {
    accepted: bool,
    residual_norm: f64,
    alpha_error: f64,
    min_scale: f64,
    in_regions: bool,
    clamped: bool,
    bumps: Vec<BumpOut>,
}

#[derive(Serialize)]
struct BumpOut {
    alpha: f64,
    center: Vec<f64>,
    scale: f64,
}

impl From<&BumpParams<f64>> for BumpOut {
    fn from(b: &BumpParams<f64>) -> Self {
        BumpOut { alpha: b.alpha, center: b.center.coords().to_vec(), scale: b.scale }
    }
}

impl From<&Witness<f64>> for VTest {
    fn from(w: &Witness<f64>) -> Self {
        VTest {
            accepted: w.accepted,
            residual_norm: w.residual_norm,
            alpha_error: w.alpha_error,
            min_scale: w.min_scale,
            in_regions: w.in_regions,
            clamped: w.clamped,
            bumps: w.bumps.iter().map(BumpOut::from).collect(),
        }
    }
}

fn trace_header(n: usize, k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "tau", "energy", "grad_norm"].iter().map(|s| s.to_string()).collect();
    for i in 1..=k {
        h.push(format!("alpha_{i}"));
        for j in 1..=n {
            h.push(if n == 1 { format!("x1_{i}") } else { format!("x{j}_{i}") });
        }
        for j in 1..=n {
            h.push(if n == 1 { format!("y1_{i}") } else { format!("y{j}_{i}") });
        }
        h.push(format!("t_{i}"));
        h.push(format!("lambda_{i}"));
    }
    h
}

struct Trace {
    rows: Vec<Vec<String>>,
    energy: Vec<(f64, f64)>,
    centers: Vec<Vec<(f64, f64)>>,
}

fn collect_trace(stages: &[StageResult<f64>], k: usize) -> Trace {
    let mut t = Trace { rows: Vec::new(), energy: Vec::new(), centers: vec![Vec::new(); k] };
    let mut step = 0usize;
    for s in stages {
        for row in &s.flow.trace {
            let mut r = vec![step.to_string(), num(row.tau), num(row.energy), num(row.grad_norm)];
            for (i, b) in row.bumps.iter().enumerate() {
                r.push(num(b.alpha));
                r.extend(b.center.coords().iter().map(|v| num(*v)));
                r.push(num(b.scale));
                if let Some(c) = t.centers.get_mut(i) {
                    c.push((b.center.x[0], b.center.y[0]));
                }
            }
            t.energy.push((step as f64, row.energy));
            t.rows.push(r);
            step += 1;
        }
    }
    t
}

fn write_outputs(rc: &RunConfig, k: usize, trace: &Trace, witness: &WitnessFile) -> Result<()> {
    let out = &rc.out;
    write_csv(&out.join("trace.csv"), &trace_header(rc.n, k), &trace.rows)?;
    write_columns(&out.join("energy.dat"), ("step", "energy"), &trace.energy)?;
    for (i, c) in trace.centers.iter().enumerate() {
        write_columns(&out.join(format!("centers_{}.dat", i + 1)), ("x", "y"), c)?;
    }
    write_text(&out.join("witness.toml"), &toml::to_string(witness)?)
}

fn empty_witness(k: usize, eps: f64, status: &str, note: String) -> WitnessFile {
    WitnessFile {
        status: status.into(),
        converged: false,
        note,
        k,
        eps,
        final_tau: f64::NAN,
        energy: f64::NAN,
        level: f64::NAN,
        energy_over_level: f64::NAN,
        energy_in_band: false,
        v_test: None,
        bumps: Vec::new(),
    }
}

pub fn run(rc: &RunConfig) -> Result<Outcome> {
    let n = rc.n;
    let cst = Constants::new(n)?;
    let r = rc.rspec()?;
    let regions = rc.regions()?;
    let starts = rc.start_bumps()?;
    let k = rc.file.k.unwrap_or(if regions.is_empty() { starts.len().max(1) } else { regions.len() });
    let eps = rc.file.eps.unwrap_or(0.25);
    if !regions.is_empty() && regions.len() != k {
        bail!("k = {k} but {} regions given", regions.len());
    }
    let start = if !regions.is_empty() {
        let thetas = rc.file.thetas.clone().unwrap_or_else(|| vec![1.0; k]);
        match ansatz(&regions, &r, &cst, rc.file.lambda.unwrap_or(2.0), &thetas) {
            Ok(s) => s,
            Err(Error::Regions(i, j)) => {
                // Wells too close for disjoint regions: the bumps cannot be
                // kept apart, which is reported as an escape.
                let note = format!("bump escape: regions {i} and {j} are closer than 1 (separation below threshold)");
                eprintln!("{note}");
                let trace = Trace { rows: Vec::new(), energy: Vec::new(), centers: vec![Vec::new(); k] };
                write_outputs(rc, k, &trace, &empty_witness(k, eps, "bump-escape", note))?;
                return Ok(Outcome::NoConvergence);
            }
            Err(e) => return Err(e.into()),
        }
    } else if !starts.is_empty() {
        if starts.len() != k {
            bail!("k = {k} but {} start bumps given", starts.len());
        }
        MultiBump::new(starts)
    } else if k == 1 {
        let o = HPoint::origin(n);
        let rv = r.value(&o);
        if !(rv > 0.0) {
            bail!("R must be positive at the origin for the default start");
        }
        MultiBump::new(vec![BumpParams::new(rv.powf(cst.amplitude_exponent()), o, 1.0)?])
    } else {
        bail!("k = {k} needs regions or start bumps");
    };
    let cfg = rc.flow()?;
    let stages = subcritical_continuation(&start, &r, &cst, &cfg)?;
    let trace = collect_trace(&stages, k);
    let last = stages.last().expect("schedule is non-empty");
    let state = &last.flow.final_state;
    let reached_zero = last.tau == 0.0;
    let converged = reached_zero && last.flow.status.converged();
    let mut note = String::new();
    if let FlowStatus::BumpEscape { bump, step } = last.flow.status {
        note = format!("bump escape: bump {bump} left its region at step {step} (tau {})", last.tau);
    } else if !converged {
        note = format!("stopped at tau {} with status {}", last.tau, last.flow.status.label());
    }
    let rmax = r.max_value().unwrap_or_else(|| state.bumps.iter().map(|b| r.value(&b.center)).fold(f64::MIN, f64::max));
    let level = energy_level(rmax, &cst)?;
    let ratio = last.flow.energy / (k as f64 * level);
    let v_test = if regions.is_empty() {
        None
    } else {
        let u: DynField<f64> = Arc::new(state.field(&cst));
        let (ok, w) = v_neighborhood_test(&u, k, eps, &regions, &r, &cst);
        if !ok && note.is_empty() {
            note = format!("final state not in V({k}, {eps})");
        }
        Some(VTest::from(&w))
    };
    let accepted = v_test.as_ref().map(|v| v.accepted).unwrap_or(true);
    let witness = WitnessFile {
        status: last.flow.status.label(),
        converged,
        note: note.clone(),
        k,
        eps,
        final_tau: last.tau,
        energy: last.flow.energy,
        level,
        energy_over_level: ratio,
        energy_in_band: (last.flow.energy - k as f64 * level).abs() <= 0.05 * level,
        v_test,
        bumps: state.bumps.iter().map(BumpOut::from).collect(),
    };
    write_outputs(rc, k, &trace, &witness)?;
    println!(
        "solve: {} stages, final tau {}, status {}, energy {:.6} = {:.4} k c",
        stages.len(),
        last.tau,
        last.flow.status.label(),
        last.flow.energy,
        ratio
    );
    if !note.is_empty() {
        eprintln!("{note}");
    }
    Ok(if converged && accepted { Outcome::Pass } else { Outcome::NoConvergence })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = trace_header(1, 2);
        assert_eq!(h[..9].join(","), "step,tau,energy,grad_norm,alpha_1,x1_1,y1_1,t_1,lambda_1");
        assert_eq!(h.len(), 4 + 2 * 5);
        assert_eq!(trace_header(2, 1)[4..].join(","), "alpha_1,x1_1,x2_1,y1_1,y2_1,t_1,lambda_1");
    }
}
