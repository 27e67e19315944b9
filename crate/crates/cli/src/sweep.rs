//! `crnir sweep`: long-format tables `param,value,quantity`. Each row holds
//! one number: `param` names the setting (`beta=3`, `xi0=x;y;t`), `value`
//! the number and `quantity` what it measures.

use anyhow::{bail, Result};
use crnirenberg::audit::{flatness_conditions, kappa_constant};
use crnirenberg::bubbles::Constants;
use crnirenberg::fields::FrameRule;
use crnirenberg::group::HPoint;
use crnirenberg::multibump::{Flatness, FlatnessFamily, RSpec};
use rayon::prelude::*;

use crate::config::{GridCfg, RunConfig, SweepCfg};
use crate::output::{num, write_csv};
use crate::Outcome;

fn rule(cst: &Constants<f64>, r: &Option<[usize; 3]>) -> Result<FrameRule<f64>> {
    Ok(match r {
        Some([a, b, c]) => FrameRule::new(cst, *a, *b, *c)?,
        None => FrameRule::default_for(cst)?,
    })
}

fn row(param: String, value: f64, quantity: &str) -> Vec<String> {
    vec![param, num(value), quantity.to_string()]
}

/// Strictly increasing or strictly decreasing in the sweep order.
pub fn monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

fn grid_points(g: &GridCfg, d: usize) -> Result<Vec<Vec<f64>>> {
    if g.lo.len() != d || g.hi.len() != d {
        bail!("sweep grid bounds need {d} coordinates");
    }
    if g.m == 0 {
        return Ok(Vec::new());
    }
    let total = g.m.pow(d as u32);
    Ok((0..total)
        .map(|mut idx| {
            (0..d)
                .map(|k| {
                    let i = idx % g.m;
                    idx /= g.m;
                    if g.m == 1 {
                        (g.lo[k] + g.hi[k]) / 2.0
                    } else {
                        g.lo[k] + (g.hi[k] - g.lo[k]) * i as f64 / (g.m - 1) as f64
                    }
                })
                .collect()
        })
        .collect())
}

fn label(c: &[f64]) -> String {
    c.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";")
}

pub fn run(rc: &RunConfig) -> Result<Outcome> {
    let Some(sweep) = &rc.file.sweep else {
        bail!("sweep needs a [sweep] table in the config");
    };
    let n = rc.n;
    let cst = Constants::new(n)?;
    let mut rows = Vec::new();
    let mut outcome = Outcome::Pass;
    match sweep {
        SweepCfg::Beta { values, rule: r } => {
            if values.is_empty() {
                bail!("empty sweep range");
            }
            let fine = rule(&cst, r)?;
            let coarse = fine.coarse(&cst)?;
            let pairs = values
                .par_iter()
                .map(|b| Ok((kappa_constant(*b, &cst, &fine)?, kappa_constant(*b, &cst, &coarse)?)))
                .collect::<Result<Vec<_>>>()?;
            let tol = 0.01 * rc.tolerance_scale;
            let mut stable = true;
            for (b, (k, kc)) in values.iter().zip(&pairs) {
                let tag = format!("beta={}", num(*b));
                rows.push(row(tag.clone(), *k, "kappa"));
                rows.push(row(tag, *kc, "kappa_coarse"));
                stable &= (kc / k - 1.0).abs() <= tol;
            }
            let kappas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let mono = monotone(&kappas);
            rows.push(row("beta=all".into(), if mono { 1.0 } else { 0.0 }, "monotone"));
            rows.push(row("beta=all".into(), if stable { 1.0 } else { 0.0 }, "refinement_stable"));
            println!("sweep: kappa over {} values of beta, monotone {mono}, stable under refinement {stable}", values.len());
            if !stable {
                outcome = Outcome::AuditFail;
            }
        }
        SweepCfg::Xi0 { points, grid, rule: r } => {
            let d = 2 * n + 1;
            let mut pts = points.clone();
            if let Some(g) = grid {
                pts.extend(grid_points(g, d)?);
            }
            if pts.is_empty() {
                bail!("empty sweep range");
            }
            let pts = pts.iter().map(|c| rc.point(c)).collect::<Result<Vec<_>>>()?;
            let f = match rc.rspec()? {
                RSpec::Flatness(f) => f,
                RSpec::Constant { .. } if rc.file.rspec.is_none() => Flatness::new(
                    HPoint::origin(n),
                    1.0,
                    (2 * n + 1) as f64,
                    vec![1.0; n],
                    vec![2.0; n],
                    -1.5,
                    FlatnessFamily::Signed,
                )?,
                other => bail!("xi0 sweep needs a flatness curvature, got {}", other.kind()),
            };
            let fr = rule(&cst, r)?;
            let conds =
                pts.par_iter().map(|p| flatness_conditions(&f, p, &cst, &fr)).collect::<Result<Vec<_>, _>>()?;
            let mut best: Option<(f64, usize)> = None;
            for (i, (p, fc)) in pts.iter().zip(&conds).enumerate() {
                let tag = format!("xi0={}", label(&p.coords()));
                for (j, v) in fc.vector.iter().enumerate() {
                    rows.push(row(tag.clone(), *v, &format!("v{j}")));
                }
                let norm = fc.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                rows.push(row(tag, norm, "norm"));
                if best.is_none_or(|(b, _)| norm < b) {
                    best = Some((norm, i));
                }
            }
            let (m, i) = best.expect("non-empty sweep");
            rows.push(row(format!("xi0={}", label(&pts[i].coords())), m, "min_norm"));
            println!("sweep: flatness vector at {} points, minimum norm {m:.6e}", pts.len());
        }
    }
    let header: Vec<String> = ["param", "value", "quantity"].iter().map(|s| s.to_string()).collect();
    write_csv(&rc.out.join("sweep.csv"), &header, &rows)?;
    Ok(outcome)
}
