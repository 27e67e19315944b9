//! Acceptance suite: one pass/fail line per criterion (n = 1, desk scale).
//!
//! Reference values are computed here from closed forms and compared with
//! what the `crnir` binary and the library report.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use crnirenberg::audit::{kazdan_warner, pohozaev_identity, Quadrature};
use crnirenberg::bubbles::{bubble, sobolev_constant, standard_bubble, BumpParams, Constants};
use crnirenberg::field::{DynField, LinearCombination};
use crnirenberg::fields::{GaugeRule, GridSpec};
use crnirenberg::functional::{energy, SubcriticalExponent};
use crnirenberg::group::{cayley, cayley_inverse, compose, cr_inversion, dist, gauge_norm, inverse, HPoint};
use crnirenberg::multibump::{optimal_representation, MultiBump, PeriodicSum, RSpec, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Row {
    computed: Vec<f64>,
    tolerance: f64,
    pass: bool,
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_crnir")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str], out: &Path) -> i32 {
    let st = Command::new(bin())
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run crnir");
    st.status.code().unwrap_or(-1)
}

fn read_report(path: &Path) -> BTreeMap<String, Row> {
    let text = std::fs::read_to_string(path).expect("report.csv");
    let mut m = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let computed = f[1].split(';').map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect();
        m.insert(
            f[0].to_string(),
            Row { computed, tolerance: f[3].parse().unwrap(), pass: f[4] == "true" },
        );
    }
    m
}

struct Outcome {
    pass: bool,
    details: String,
}

fn outcome(pass: bool, details: String) -> Outcome {
    Outcome { pass, details }
}

fn close(a: &HPoint<f64>, b: &HPoint<f64>) -> f64 {
    a.coords()
        .iter()
        .zip(b.coords().iter())
        .map(|(u, v)| (u - v).abs() / (1.0 + u.abs().max(v.abs())))
        .fold(0.0, f64::max)
}

/// Group law, inverse, CR inversion and Cayley on 1000 seeded points.
fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = || HPoint::xyt(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let e = HPoint::origin(1);
    let (mut assoc, mut inv, mut ulp, mut gauge, mut sphere, mut round) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (a, b, c) = (p(), p(), p());
        assoc = assoc.max(close(&compose(&compose(&a, &b), &c), &compose(&a, &compose(&b, &c))));
        inv = inv.max(close(&compose(&a, &inverse(&a)), &e)).max(close(&compose(&inverse(&a), &a), &e));
        let ia = cr_inversion(&a).unwrap();
        let back = cr_inversion(&ia).unwrap();
        // Distance to the identity in ulp of each coordinate's natural size.
        let g = gauge_norm(&a);
        for k in 0..3 {
            let s = if k == 2 { g * g } else { g };
            ulp = ulp.max((back.coord(k) - a.coord(k)).abs() / (f64::EPSILON * s.max(a.coord(k).abs())));
        }
        gauge = gauge.max((gauge_norm(&ia) * g - 1.0).abs());
        let z = cayley(&a);
        sphere = sphere.max((z.iter().map(|v| v.norm_sqr()).sum::<f64>() - 1.0).abs());
        round = round.max(close(&cayley_inverse(&z).unwrap(), &a));
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = assoc < 1e-13 && inv < 1e-14 && ulp <= 8.0 && gauge < 1e-13 && sphere < 1e-13 && round < 1e-9 && secs < 1.0;
    outcome(
        pass,
        format!("assoc {assoc:.1e}, inverse {inv:.1e}, involution {ulp:.2} ulp, gauge {gauge:.1e}, sphere {sphere:.1e}, round trip {round:.1e}, {secs:.3} s"),
    )
}

fn criterion_2(rep: &BTreeMap<String, Row>) -> Outcome {
    let a = rep["bubble_residual"].computed[0];
    let g = rep["bubble_residual_grid"].computed[0];
    outcome(a < 1e-9 && g < 5e-3, format!("closed form {a:.2e} (< 1e-9), grid h=0.05 {g:.2e} (< 5e-3)"))
}

fn criterion_3() -> Outcome {
    let s1: f64 = sobolev_constant(1);
    let oracle = (2.0 * PI).sqrt();
    let t0 = Instant::now();
    let cst = Constants::new(1).unwrap();
    let w = standard_bubble(&cst);
    let en = energy(&w, &RSpec::constant(1, 1.0), &SubcriticalExponent::critical(&cst), &GridSpec::default_n1()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let quotient = (2.0f64 * en.kinetic).sqrt() / (4.0f64 * en.potential).powf(0.25);
    let level = PI * PI;
    let pass = (s1 - oracle).abs() < 1e-12
        && (s1 - 2.506628).abs() < 1e-6
        && (quotient / oracle - 1.0).abs() < 0.02
        && (en.total / level - 1.0).abs() < 0.02
        && secs < 30.0;
    outcome(
        pass,
        format!("S1 {s1:.7}, quotient {quotient:.5} vs {oracle:.5}, I(w) {:.5} vs pi^2 {level:.5}, {secs:.1} s", en.total),
    )
}

struct Solve {
    state: MultiBump<f64>,
    r: RSpec<f64>,
    witness: toml::Table,
    secs: f64,
    code: i32,
}

fn two_wells(out: &Path) -> Solve {
    let t0 = Instant::now();
    let cfg = configs().join("two_wells.toml");
    let code = run(&["solve", "--config", cfg.to_str().unwrap(), "--threads", "4"], out);
    let secs = t0.elapsed().as_secs_f64();
    let witness: toml::Table = std::fs::read_to_string(out.join("witness.toml")).unwrap().parse().unwrap();
    let bumps = witness["bumps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| {
            let c: Vec<f64> = b["center"].as_array().unwrap().iter().map(|v| v.as_float().unwrap()).collect();
            BumpParams::new(b["alpha"].as_float().unwrap(), HPoint::from_coords(&c), b["scale"].as_float().unwrap()).unwrap()
        })
        .collect();
    let r = RSpec::PeriodicSum(PeriodicSum::new(1.0, HPoint::xyt(10.0, 0.0, 0.0), 1.0, 2.0, vec![1.0], vec![1.0], 1.0).unwrap());
    Solve { state: MultiBump::new(bumps), r, witness, secs, code }
}

fn criterion_4(rep: &BTreeMap<String, Row>, s: &Solve) -> Outcome {
    let cst = Constants::new(1).unwrap();
    let flat = &rep["kw_constant_curvature"];
    let control = &rep["kw_monotone_control"];
    // The control bound is 10x the pairing's own tolerance; the report keeps
    // that bound in the expected column, so recompute it from the library.
    let ramp = RSpec::Ramp(crnirenberg::multibump::Ramp { n: 1, level: 2.0, amp: 1.0, width: 2.0, axis: 0 });
    let bp = BumpParams::new(1.0, HPoint::xyt(0.5, 0.5, 0.0), 1.5).unwrap();
    let quad = Quadrature::frames(&cst, vec![crnirenberg::fields::Frame::of(&bp)]).unwrap();
    let kwr = kazdan_warner(&bubble(bp, &cst), &ramp, 2.0, &quad, &cst).unwrap();
    let ctrl_ok = control.computed[0] > 10.0 * kwr.tolerance && (control.computed[0] - kwr.computed[0]).abs() < 1e-9;
    let flow = &rep["flow_kw"];
    let u = s.state.field(&cst);
    let q = Quadrature::for_state(&cst, &s.state).unwrap();
    let kw = kazdan_warner(&u, &s.r, 2.0, &q, &cst).unwrap();
    let radial = kw.computed[0].abs();
    let pass = flat.computed[0].abs() <= flat.tolerance && flat.pass && ctrl_ok && flow.computed[0].abs() <= flow.tolerance && radial <= kw.tolerance;
    outcome(
        pass,
        format!(
            "R=1 {:.1e} (tol {:.1e}); flatness flow {:.1e} (tol {:.1e}); two-well solve {radial:.1e} (tol {:.1e}); monotone control {:.3} > 10 x {:.1e}",
            flat.computed[0], flat.tolerance, flow.computed[0], flow.tolerance, kw.tolerance, control.computed[0], kwr.tolerance
        ),
    )
}

fn criterion_5(rep: &BTreeMap<String, Row>, s: &Solve) -> Outcome {
    let fund: Vec<f64> = ["0.5", "1", "2"].iter().map(|t| rep[&format!("pohozaev_fundamental_sigma_{t}")].computed[0]).collect();
    let lim = rep["pohozaev_limit"].computed[0];
    let target = -8.0 * PI;
    let bub = rep["pohozaev_bubble"].computed[0];
    let flow = rep["flow_pohozaev"].computed[0];
    let cst = Constants::new(1).unwrap();
    let u = s.state.field(&cst);
    let exp = SubcriticalExponent::critical(&cst);
    let mut solver = 0.0f64;
    for b in &s.state.bumps {
        let t = pohozaev_identity(&u, &s.r, &exp, &b.center, 4.0 / b.scale, &GaugeRule::default_for(1)).unwrap();
        solver = solver.max(t.relative_residual());
    }
    let pass = fund.iter().all(|v| v.abs() < 1e-3)
        && (lim / target - 1.0).abs() < 0.02
        && bub < 0.02
        && flow < 0.05
        && solver < 0.05;
    outcome(
        pass,
        format!(
            "fundamental {:.1e}/{:.1e}/{:.1e}; limit {lim:.4} vs {target:.4}; bubble balance {bub:.1e}; flow outputs {flow:.1e}, {solver:.1e}",
            fund[0], fund[1], fund[2]
        ),
    )
}

fn criterion_6() -> Outcome {
    let cst = Constants::new(1).unwrap();
    let bumps = vec![
        BumpParams::new(1.0, HPoint::xyt(0.0, 0.0, 0.0), 2.0).unwrap(),
        BumpParams::new(1.0, HPoint::xyt(10.0, 0.5, -0.3), 3.0).unwrap(),
    ];
    let regions: Vec<Region<f64>> = bumps.iter().map(|b| Region::around(&b.center, 2.0, 2.0)).collect();
    let field = |extra: Option<(f64, BumpParams<f64>)>| -> DynField<f64> {
        let mut terms: Vec<(f64, DynField<f64>)> =
            bumps.iter().map(|b| (1.0, Arc::new(bubble(b.clone(), &cst)) as DynField<f64>)).collect();
        if let Some((s, b)) = extra {
            terms.push((s, Arc::new(bubble(b, &cst))));
        }
        Arc::new(LinearCombination::new(terms))
    };
    let err = |a: &BumpParams<f64>, b: &BumpParams<f64>| {
        ((a.alpha - b.alpha).abs() / b.alpha).max((a.scale / b.scale - 1.0).abs()).max(dist(&a.center, &b.center) * b.scale)
    };
    let r = RSpec::constant(1, 1.0);
    let exact = optimal_representation(&field(None), 2, 0.25, &regions, &r, &cst).unwrap();
    let e0 = exact.bumps.iter().zip(&bumps).map(|(a, b)| err(a, b)).fold(0.0, f64::max);
    // Two unit bubbles have norm sqrt(2) 2 pi; a unit bubble has norm 2 pi.
    let coeff = 0.01 * 2f64.sqrt() * 2.0 * PI / (2.0 * PI);
    let noise = BumpParams::new(1.0, HPoint::xyt(5.0, 4.0, 1.0), 0.8).unwrap();
    let pert = optimal_representation(&field(Some((coeff, noise))), 2, 0.25, &regions, &r, &cst).unwrap();
    let e1 = pert.bumps.iter().zip(&bumps).map(|(a, b)| err(a, b)).fold(0.0, f64::max);
    let orth = exact.orthogonality.max(pert.orthogonality);
    outcome(
        e0 < 1e-6 && e1 < 5e-2 && orth < 1e-3,
        format!("exact {e0:.1e} (< 1e-6), 1% perturbation {e1:.1e} (< 5e-2), orthogonality {orth:.1e} (< 1e-3)"),
    )
}

fn criterion_7(s: &Solve) -> Outcome {
    let w = &s.witness;
    let tau = w["final_tau"].as_float().unwrap();
    let energy = w["energy"].as_float().unwrap();
    let accepted = w["v_test"]["accepted"].as_bool().unwrap();
    // c = c(R_max) with R_max = 2: S_1^4/(4 R_max) = pi^2/2.
    let c = PI * PI / 2.0;
    let in_band = (energy - 2.0 * c).abs() <= 0.05 * c;
    let pass = s.code == 0 && tau == 0.0 && accepted && in_band && s.secs < 600.0;
    outcome(
        pass,
        format!(
            "exit {}, final tau {tau}, V(2, 0.25) {accepted}, energy {energy:.5} in [{:.5}, {:.5}], {:.1} s",
            s.code,
            2.0 * c - 0.05 * c,
            2.0 * c + 0.05 * c,
            s.secs
        ),
    )
}

fn criterion_8(rep: &BTreeMap<String, Row>) -> Outcome {
    let fine = rep["kappa_closed_form"].computed[0];
    let coarse = rep["kappa_refinement"].computed[0];
    let mc = rep["kappa_monte_carlo"].computed[0];
    // κ(3) = (π²/4)/(π²/√2) for n = 1.
    let oracle = 2f64.sqrt() / 4.0;
    let parity = &rep["flatness_parity"];
    let a2 = &rep["flatness_a2_scalar"];
    let nz = &rep["flatness_a2_nonzero"];
    let pass = (coarse / fine - 1.0).abs() < 0.01
        && (mc / fine - 1.0).abs() < 0.02
        && (fine / oracle - 1.0).abs() < 0.01
        && parity.pass
        && parity.computed.iter().all(|v| v.abs() <= parity.tolerance)
        && a2.pass
        && nz.pass;
    outcome(
        pass,
        format!(
            "kappa {fine:.5} (coarse {coarse:.5}, Monte-Carlo {mc:.5}, closed form {oracle:.5}); parity max {:.1e}; scalar |sum(a+b)+c/kappa| {:.3}",
            parity.computed.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            nz.computed[0]
        ),
    )
}

fn criterion_9(dir: &Path, first_verify: &Path) -> Outcome {
    let again = dir.join("verify_again");
    run(&["verify", "--seed", "7", "--threads", "4"], &again);
    let same_verify = std::fs::read(first_verify.join("report.csv")).unwrap() == std::fs::read(again.join("report.csv")).unwrap();
    let cfg = configs().join("constant.toml");
    let (a, b) = (dir.join("solve_a"), dir.join("solve_b"));
    for o in [&a, &b] {
        run(&["solve", "--config", cfg.to_str().unwrap(), "--seed", "7", "--threads", "4"], o);
    }
    let same_trace = std::fs::read(a.join("trace.csv")).unwrap() == std::fs::read(b.join("trace.csv")).unwrap();
    let cfg = configs().join("kappa_sweep.toml");
    let (c, d) = (dir.join("sweep_a"), dir.join("sweep_b"));
    for o in [&c, &d] {
        run(&["sweep", "--config", cfg.to_str().unwrap(), "--seed", "7", "--threads", "4"], o);
    }
    let same_sweep = std::fs::read(c.join("sweep.csv")).unwrap() == std::fs::read(d.join("sweep.csv")).unwrap();
    outcome(
        same_verify && same_trace && same_sweep,
        format!("report.csv {same_verify}, trace.csv {same_trace}, sweep.csv {same_sweep}"),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let verify_dir = dir.path().join("verify");
    let code = run(&["verify", "--seed", "7", "--threads", "4"], &verify_dir);
    let rep = read_report(&verify_dir.join("report.csv"));
    println!("verify: exit {code}, {} checks", rep.len());
    let solve = two_wells(&dir.path().join("two_wells"));
    let results = [
        ("group and transform exactness", criterion_1()),
        ("bubble PDE residual", criterion_2(&rep)),
        ("sharp constant and energy level", criterion_3()),
        ("Kazdan-Warner gate", criterion_4(&rep, &solve)),
        ("Pohozaev suite", criterion_5(&rep, &solve)),
        ("representation recovery", criterion_6()),
        ("multi-bump solve", criterion_7(&solve)),
        ("flatness constants", criterion_8(&rep)),
        ("determinism", criterion_9(dir.path(), &verify_dir)),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {} [{}] {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.details);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
