//! The audit battery behind `crnir verify`.

use std::f64::consts::PI;

use anyhow::Result;
use crnirenberg::audit::{
    decay_diagnostic, flatness_conditions, kappa_constant, kappa_monte_carlo, kazdan_warner, merge_reports,
    pohozaev_boundary_limit, pohozaev_boundary_term, pohozaev_identity, volume_coefficient, volume_coefficient_tau,
    AuditReport, Expected, Quadrature,
};
use crnirenberg::bubbles::{bubble, energy_level, sobolev_constant, standard_bubble, BumpParams, Constants};
use crnirenberg::field::{FnField, ScalarField};
use crnirenberg::fields::{Frame, FrameRule, GaugeRule, GridField, GridSpec};
use crnirenberg::functional::{energy, energy_nodes, pde_residual, SubcriticalExponent};
use crnirenberg::group::{
    cayley, cayley_inverse, compose, cr_inversion, dilate_unchecked, gauge_norm, inverse, HPoint,
};
use crnirenberg::multibump::{subcritical_continuation, Flatness, FlatnessFamily, FlowConfig, MultiBump, RSpec, Ramp};
use crnirenberg::{AuditReport64, HPoint64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;

pub struct Battery {
    pub n: usize,
    pub cst: Constants<f64>,
    pub seed: u64,
    pub points: usize,
    pub mc_samples: usize,
}

impl Battery {
    pub fn from_config(rc: &RunConfig) -> Result<Self> {
        let v = &rc.file.verify;
        let cst = match v.c0 {
            Some(c0) => Constants::with_c0(rc.n, c0),
            None => Constants::new(rc.n)?,
        };
        Ok(Battery {
            n: rc.n,
            cst,
            seed: rc.seed,
            points: v.points.unwrap_or(1000),
            mc_samples: v.mc_samples.unwrap_or(400_000),
        })
    }

    fn q(&self) -> f64 {
        (2 * self.n + 2) as f64
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    fn random_points(&self, stream: u64, count: usize, half: f64) -> Vec<HPoint64> {
        let mut rng = self.rng(stream);
        let d = 2 * self.n + 1;
        (0..count)
            .map(|_| {
                let c: Vec<f64> = (0..d).map(|_| rng.random_range(-half..half)).collect();
                HPoint::from_coords(&c)
            })
            .collect()
    }
}

type Check = fn(&Battery) -> Result<Vec<AuditReport64>>;

const CHECKS: &[(&str, Check)] = &[
    ("group", group_checks),
    ("bubble_residual", bubble_residual),
    ("bubble_residual_grid", bubble_residual_grid),
    ("sobolev", sobolev_checks),
    ("kazdan_warner", kazdan_warner_checks),
    ("pohozaev", pohozaev_checks),
    ("kappa", kappa_checks),
    ("flatness", flatness_checks),
    ("decay", decay_check),
    ("flow", flow_checks),
];

/// Runs every check (in parallel), rescales tolerances and sorts by name.
pub fn run(b: &Battery, tolerance_scale: f64) -> Vec<AuditReport64> {
    let reports: Vec<AuditReport64> = CHECKS
        .par_iter()
        .flat_map_iter(|(name, f)| match f(b) {
            Ok(v) => v,
            Err(e) => vec![AuditReport::new(*name, vec![f64::NAN], Expected::Finite, 0.0, format!("error: {e}"))],
        })
        .collect();
    merge_reports(reports.into_iter().map(|r| r.rescaled(tolerance_scale)).collect())
}

fn coord_error(a: &HPoint64, b: &HPoint64) -> f64 {
    a.coords()
        .iter()
        .zip(b.coords().iter())
        .map(|(u, v)| (u - v).abs() / (1.0 + u.abs().max(v.abs())))
        .fold(0.0, f64::max)
}

/// Error of `φ̌(φ̌(ξ))` in units of the spacing of doubles at `ξ` (the `t`
/// coordinate is measured against `|ξ|²`, the others against `|ξ|`).
fn ulp_error(a: &HPoint64, b: &HPoint64) -> f64 {
    let g = gauge_norm(b);
    let d = a.coords().len();
    (0..d)
        .map(|k| {
            let scale = if k + 1 == d { g * g } else { g };
            (a.coord(k) - b.coord(k)).abs() / (f64::EPSILON * scale.max(b.coord(k).abs()))
        })
        .fold(0.0, f64::max)
}

fn group_checks(b: &Battery) -> Result<Vec<AuditReport64>> {
    let pts = b.random_points(1, 3 * b.points, 5.0);
    let (xs, rest) = pts.split_at(b.points);
    let (ys, zs) = rest.split_at(b.points);
    let e = HPoint::origin(b.n);
    let mut assoc = 0.0f64;
    let mut inv = 0.0f64;
    let mut invol = 0.0f64;
    let mut gauge = 0.0f64;
    let mut sphere = 0.0f64;
    let mut round = 0.0f64;
    for ((x, y), z) in xs.iter().zip(ys).zip(zs) {
        assoc = assoc.max(coord_error(&compose(&compose(x, y), z), &compose(x, &compose(y, z))));
        let xi = inverse(x);
        inv = inv.max(coord_error(&compose(x, &xi), &e)).max(coord_error(&compose(&xi, x), &e));
        let c = cr_inversion(x)?;
        invol = invol.max(ulp_error(&cr_inversion(&c)?, x));
        gauge = gauge.max((gauge_norm(&c) * gauge_norm(x) - 1.0).abs());
        let zeta = cayley(x);
        sphere = sphere.max((zeta.iter().map(|v| v.norm_sqr()).sum::<f64>() - 1.0).abs());
        round = round.max(coord_error(&cayley_inverse(&zeta)?, x));
    }
    let m = b.points;
    Ok(vec![
        AuditReport::new("group_associativity", vec![assoc], Expected::IdentityZero, 1e-13, format!("{m} random triples")),
        AuditReport::new("group_inverse", vec![inv], Expected::IdentityZero, 1e-14, format!("{m} random points")),
        AuditReport::new("cr_inversion_involution_ulp", vec![invol], Expected::IdentityZero, 8.0, "max error of the double inversion in ulp"),
        AuditReport::new("cr_inversion_gauge", vec![gauge], Expected::IdentityZero, 1e-13, "| |inv(x)| |x| - 1 |"),
        AuditReport::new("cayley_on_sphere", vec![sphere], Expected::IdentityZero, 1e-13, "| |C(x)|^2 - 1 |"),
        AuditReport::new("cayley_round_trip", vec![round], Expected::IdentityZero, 1e-9, "relative coordinate error"),
    ])
}

fn bubble_residual(b: &Battery) -> Result<Vec<AuditReport64>> {
    let mut rng = b.rng(2);
    let d = 2 * b.n + 1;
    let exp = SubcriticalExponent::critical(&b.cst);
    let one = RSpec::constant(b.n, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lam: f64 = rng.random_range(0.2f64.ln()..5.0f64.ln()).exp();
        let eta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let center = HPoint::from_coords(&c);
        let p = compose(&center, &dilate_unchecked(1.0 / lam, &HPoint::from_coords(&eta)));
        let w = bubble(BumpParams::new(1.0, center, lam)?, &b.cst);
        let v = w.value(&p);
        worst = worst.max(pde_residual(&w, &one, &exp, &p)?.abs() / v.powf(b.cst.critical_power()));
    }
    Ok(vec![AuditReport::new(
        "bubble_residual",
        vec![worst],
        Expected::IdentityZero,
        1e-9,
        format!("closed-form derivatives, 200 random (a, lambda, point), c0 {}", b.cst.c0),
    )])
}

/// Centered-difference residual of the sampled unit bubble, `h = 0.05`.
fn bubble_residual_grid(b: &Battery) -> Result<Vec<AuditReport64>> {
    if b.n != 1 {
        return Ok(Vec::new());
    }
    let spec = GridSpec::symmetric(1, 1.0, 1.0, 0.05, 0.05)?;
    let w = standard_bubble(&b.cst);
    let g = GridField::sample(&spec, &w);
    let exp = SubcriticalExponent::critical(&b.cst);
    let one = RSpec::constant(1, 1.0);
    let m = spec.counts().to_vec();
    let mut worst = 0.0f64;
    let mut peak = 0.0f64;
    for i in 3..m[0] - 3 {
        for j in 3..m[1] - 3 {
            for k in 3..m[2] - 3 {
                let mut l = [0.0; 3];
                spec.local_coords(spec.index(&[i, j, k]), &mut l);
                let p = spec.to_physical(&HPoint::from_coords(&l));
                worst = worst.max(pde_residual(&g, &one, &exp, &p)?.abs());
                peak = peak.max(w.value(&p).powi(3));
            }
        }
    }
    Ok(vec![AuditReport::new(
        "bubble_residual_grid",
        vec![worst / peak],
        Expected::IdentityZero,
        5e-3,
        "sampled unit bubble, h = 0.05, max residual over max w^3",
    )])
}

fn sobolev_checks(b: &Battery) -> Result<Vec<AuditReport64>> {
    let s: f64 = sobolev_constant(b.n);
    let w = standard_bubble(&b.cst);
    let one = RSpec::constant(b.n, 1.0);
    let exp = SubcriticalExponent::critical(&b.cst);
    let (en, how) = if b.n == 1 {
        (energy(&w, &one, &exp, &GridSpec::default_n1())?, "default grid")
    } else {
        let rule = FrameRule::default_for(&b.cst)?;
        (energy_nodes(&w, &one, &exp, &rule.single_nodes(&Frame::new(HPoint::origin(b.n), 1.0))), "bubble frame")
    };
    let qs = b.cst.qstar;
    let quotient = (2.0 * en.kinetic).sqrt() / (qs * en.potential).powf(1.0 / qs);
    let level = energy_level(1.0, &b.cst)?;
    let mut out = vec![
        AuditReport::scalar("sobolev_quotient", quotient, s, 0.02 * s, format!("||grad w|| / ||w||_Q*, {how}")),
        AuditReport::scalar("bubble_energy", en.total, level, 0.02 * level, format!("I(w) against S^Q/Q, {how}")),
    ];
    if b.n == 1 {
        let exact = (2.0 * PI).sqrt();
        out.push(AuditReport::scalar("sobolev_constant", s, exact, 1e-12, "S_1 against sqrt(2 pi)"));
    }
    Ok(out)
}

fn kazdan_warner_checks(b: &Battery) -> Result<Vec<AuditReport64>> {
    let n = b.n;
    let decay = b.q() - 2.0;
    let mut c = vec![0.0; 2 * n + 1];
    c[0] = 0.7;
    c[n] = -0.4;
    c[2 * n] = 0.3;
    let bp = BumpParams::new(1.0, HPoint::from_coords(&c), 1.3)?;
    let quad = Quadrature::frames(&b.cst, vec![Frame::of(&bp)])?;
    let mut flat = kazdan_warner(&bubble(bp, &b.cst), &RSpec::constant(n, 1.0), decay, &quad, &b.cst)?;
    flat.check_name = "kw_constant_curvature".into();
    flat.details = "bubble against R = 1".into();

    let ramp = RSpec::Ramp(Ramp { n, level: 2.0, amp: 1.0, width: 2.0, axis: 0 });
    c[0] = 0.5;
    c[n] = 0.5;
    c[2 * n] = 0.0;
    let bp = BumpParams::new(1.0, HPoint::from_coords(&c), 1.5)?;
    let quad = Quadrature::frames(&b.cst, vec![Frame::of(&bp)])?;
    let rep = kazdan_warner(&bubble(bp, &b.cst), &ramp, decay, &quad, &b.cst)?;
    let control = AuditReport::new(
        "kw_monotone_control",
        vec![rep.computed[0]],
        Expected::AtLeast(10.0 * rep.tolerance),
        0.0,
        "radial pairing for R increasing in x_1 must exceed 10x its tolerance",
    );
    Ok(vec![flat, control])
}

/// `|ξ|^{2−Q} + a`.
fn fundamental(n: usize, a: f64) -> FnField<f64> {
    let e = -((2 * n) as f64);
    FnField::new(n, move |p: &HPoint<f64>| gauge_norm(p).powf(e) + a)
}

/// `Γ(k/2)` for a positive integer `k`.
fn gamma_half(k: usize) -> f64 {
    let (mut v, mut x) = if k % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while x + 0.5 < k as f64 / 2.0 {
        v *= x;
        x += 1.0;
    }
    v
}

/// Limit of the boundary term for `|ξ|^{2−Q} + A`:
/// `−√π Γ((n+1)/2) / (2Γ(n/2+1)) · A (Q−2)² |S^{2n−1}|`.
pub fn pohozaev_limit_constant(n: usize, a: f64) -> f64 {
    let q = (2 * n + 2) as f64;
    let sphere = 2.0 * PI.powi(n as i32) / gamma_half(2 * n);
    -PI.sqrt() * gamma_half(n + 1) / (2.0 * gamma_half(n + 2)) * a * (q - 2.0).powi(2) * sphere
}

fn pohozaev_checks(b: &Battery) -> Result<Vec<AuditReport64>> {
    let n = b.n;
    let rule = GaugeRule::default_for(n);
    let o = HPoint::origin(n);
    let u = fundamental(n, 0.0);
    let mut out = Vec::new();
    for (s, tag) in [(0.5, "0.5"), (1.0, "1"), (2.0, "2")] {
        let (v, _) = pohozaev_boundary_term(&u, &o, s, &rule)?;
        out.push(AuditReport::new(
            format!("pohozaev_fundamental_sigma_{tag}"),
            vec![v],
            Expected::IdentityZero,
            1e-3,
            "boundary term of |x|^(2-Q)",
        ));
    }
    let target = pohozaev_limit_constant(n, 1.0);
    let lim = pohozaev_boundary_limit(&fundamental(n, 1.0), &o, 0.4, &rule)?;
    out.push(AuditReport::scalar(
        "pohozaev_limit",
        lim,
        target,
        0.02 * target.abs(),
        "boundary term of |x|^(2-Q) + 1 extrapolated from sigma 0.4, 0.2, 0.1",
    ));
    let mut c = vec![0.0; 2 * n + 1];
    c[0] = 0.5;
    c[n] = -0.2;
    c[2 * n] = 0.3;
    let center = HPoint::from_coords(&c);
    let w = bubble(BumpParams::new(1.0, center.clone(), 1.3)?, &b.cst);
    let exp = SubcriticalExponent::critical(&b.cst);
    let t = pohozaev_identity(&w, &RSpec::constant(n, 1.0), &exp, &center, 1.0, &rule)?;
    out.push(t.report("pohozaev_bubble", 0.02));
    let tau = 0.05;
    let e = SubcriticalExponent::new(tau, &b.cst)?;
    let a = volume_coefficient(b.cst.q, e.p);
    let f = volume_coefficient_tau(b.cst.q, tau, e.p);
    out.push(AuditReport::scalar("pohozaev_volume_coefficient", a, f, 1e-14, "Q/(p+1) - (Q-2)/2 against (Q-2)tau/(2(p+1)) at tau 0.05"));
    Ok(out)
}

fn kappa_checks(b: &Battery) -> Result<Vec<AuditReport64>> {
    let beta = b.q() - 1.0;
    let fine_rule = FrameRule::default_for(&b.cst)?;
    let coarse_rule = if b.n == 1 { FrameRule::new(&b.cst, 32, 24, 24)? } else { fine_rule.coarse(&b.cst)? };
    let fine = kappa_constant(beta, &b.cst, &fine_rule)?;
    let coarse = kappa_constant(beta, &b.cst, &coarse_rule)?;
    let mc = kappa_monte_carlo(beta, b.n, b.mc_samples, b.seed)?;
    let mut out = vec![
        AuditReport::scalar("kappa_refinement", coarse, fine, 0.01 * fine, format!("beta {beta}: coarse rule against fine rule")),
        AuditReport::scalar(
            "kappa_monte_carlo",
            mc.value,
            fine,
            0.02 * fine,
            format!("{} samples, std error {:.3e}", mc.samples, mc.std_error),
        ),
    ];
    if b.n == 1 {
        let exact = 2f64.sqrt() / 4.0;
        out.push(AuditReport::scalar("kappa_closed_form", fine, exact, 0.01 * exact, "beta 3 against sqrt(2)/4"));
    }
    Ok(out)
}

fn flatness_checks(b: &Battery) -> Result<Vec<AuditReport64>> {
    let n = b.n;
    let (cc, a, bb) = (-1.5, vec![1.0; n], vec![2.0; n]);
    let f = Flatness::new(HPoint::origin(n), 1.0, b.q() - 1.0, a, bb, cc, FlatnessFamily::Even)?;
    let rule = FrameRule::default_for(&b.cst)?;
    let fc = flatness_conditions(&f, &HPoint::origin(n), &b.cst, &rule)?;
    let a_sum = 3.0 * n as f64;
    let scalar_err = fc.errors.last().copied().unwrap_or(0.0) / fc.it.abs();
    let nonzero = AuditReport::new(
        "flatness_a2_nonzero",
        vec![fc.a2_consistent.abs()],
        Expected::AtLeast(10.0 * scalar_err.max(1e-12)),
        0.0,
        "|sum(a+b) + c/kappa| away from 0",
    );
    Ok(vec![fc.parity_report(), fc.a2_report(a_sum, cc, 1e-6), nonzero])
}

fn decay_check(b: &Battery) -> Result<Vec<AuditReport64>> {
    let w = standard_bubble(&b.cst);
    let mut r = decay_diagnostic(&w, (4.0, 20.0))?.report();
    r.check_name = "decay_bubble".into();
    Ok(vec![r])
}

/// Flatness flow from an offset start; the converged output is audited.
fn flow_checks(b: &Battery) -> Result<Vec<AuditReport64>> {
    let n = b.n;
    let f = Flatness::new(HPoint::origin(n), 2.0, b.q() - 1.0, vec![-1.0; n], vec![-0.5; n], -1.0, FlatnessFamily::Even)?;
    let r = RSpec::Flatness(f);
    let mut c = vec![0.0; 2 * n + 1];
    c[0] = 0.4;
    c[n] = -0.3;
    c[2 * n] = 0.2;
    let start = MultiBump::new(vec![BumpParams::new(0.8, HPoint::from_coords(&c), 1.5)?]);
    let exp = SubcriticalExponent::critical(&b.cst);
    let cfg = FlowConfig::new(1.0, 1000, 1e-6)?;
    let stages = subcritical_continuation(&start, &r, &b.cst, &cfg)?;
    let last = stages.last().expect("non-empty schedule");
    let res = &last.flow;
    let state = &res.final_state;
    let mut out = vec![AuditReport::new(
        "flow_converged",
        vec![res.grad_norm],
        Expected::Finite,
        0.0,
        format!("status {}", res.status.label()),
    )];
    if !res.status.converged() || last.tau != 0.0 {
        out[0] = AuditReport::new("flow_converged", vec![f64::NAN], Expected::Finite, 0.0, format!("status {}", res.status.label()));
        return Ok(out);
    }
    let u = state.field(&b.cst);
    let quad = Quadrature::for_state(&b.cst, state)?;
    let mut kw = kazdan_warner(&u, &r, b.q() - 2.0, &quad, &b.cst)?;
    kw.check_name = "flow_kw".into();
    kw.details = format!("Kazdan-Warner pairings of the converged flatness flow, center {:?} scale {:e}", state.bumps[0].center.coords().as_slice(), state.bumps[0].scale);
    out.push(kw);
    let bump = &state.bumps[0];
    let sigma = 4.0 / bump.scale;
    let t = pohozaev_identity(&u, &r, &exp, &bump.center, sigma, &GaugeRule::default_for(n))?;
    out.push(t.report("flow_pohozaev", 0.05));
    let level = energy_level(2.0, &b.cst)?;
    out.push(AuditReport::scalar("flow_energy_level", res.energy, level, 0.03 * level, "energy against c(R(0))"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_constant_for_n1_is_minus_eight_pi() {
        assert!((pohozaev_limit_constant(1, 1.0) + 8.0 * PI).abs() < 1e-12);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(6), 2.0);
    }
}
