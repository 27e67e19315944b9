//! Integral identities and constants as pass/fail checks: the Kazdan–Warner
//! pairings, the Pohozaev boundary term and balance, the flatness constant
//! `κ`, the flatness-condition vector and the decay diagnostic.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::bubbles::{weight_h_gradient, Constants};
use crate::field::ScalarField;
use crate::fields::gauge::sphere_nodes;
use crate::fields::{integrate_ball_fn, integrate_fn, pairwise_sum, Frame, FrameRule, GaugeRule, GridSpec};
use crate::functional::{translate_field, SubcriticalExponent};
use crate::group::{compose, dilate_unchecked, gauge_norm, pullback_left_translation, HPoint};
use crate::multibump::{Flatness, FlatnessFamily, MultiBump, RSpec};
use crate::ops::{a_matrix_apply, cartesian_gradient, dilation_from_gradient, horizontal_from_gradient};
use crate::{lit, to_f64, Error, Result, Scalar};

/// What a check compares against.
#[derive(Clone, Debug, PartialEq)]
pub enum Expected<T: Scalar> {
    Values(Vec<T>),
    /// Every component should vanish.
    IdentityZero,
    /// One-sided: `computed ≥ bound − tolerance` componentwise.
    AtLeast(T),
    /// Diagnostic only: passes when every component is finite.
    Finite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport<T: Scalar> {
    pub check_name: String,
    pub computed: Vec<T>,
    pub expected: Expected<T>,
    pub tolerance: T,
    pub pass: bool,
    pub details: String,
}

impl<T: Scalar> AuditReport<T> {
    /// Builds a report; `pass` follows from the other fields.
    pub fn new(name: impl Into<String>, computed: Vec<T>, expected: Expected<T>, tolerance: T, details: impl Into<String>) -> Self {
        let pass = verdict(&computed, &expected, tolerance);
        AuditReport { check_name: name.into(), computed, expected, tolerance, pass, details: details.into() }
    }

    pub fn scalar(name: impl Into<String>, computed: T, expected: T, tolerance: T, details: impl Into<String>) -> Self {
        Self::new(name, vec![computed], Expected::Values(vec![expected]), tolerance, details)
    }

    /// Same check with the tolerance multiplied by `s`.
    pub fn rescaled(&self, s: T) -> Self {
        Self::new(self.check_name.clone(), self.computed.clone(), self.expected.clone(), self.tolerance * s, self.details.clone())
    }

    pub const CSV_HEADER: &'static str = "check,computed,expected,tolerance,pass";

    /// `check,computed,expected,tolerance,pass`; vectors are `;`-joined.
    pub fn csv_row(&self) -> String {
        let comp = join(&self.computed);
        let exp = match &self.expected {
            Expected::Values(v) => join(v),
            Expected::IdentityZero => "identity-zero".into(),
            Expected::AtLeast(b) => format!(">={}", fmt(*b)),
            Expected::Finite => "finite".into(),
        };
        format!("{},{},{},{},{}", self.check_name, comp, exp, fmt(self.tolerance), self.pass)
    }
}

fn fmt<T: Scalar>(v: T) -> String {
    format!("{:.10e}", to_f64(v))
}

fn join<T: Scalar>(v: &[T]) -> String {
    v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(";")
}

fn verdict<T: Scalar>(c: &[T], e: &Expected<T>, tol: T) -> bool {
    match e {
        Expected::Values(v) => v.len() == c.len() && c.iter().zip(v).all(|(a, b)| (*a - *b).abs() <= tol),
        Expected::IdentityZero => c.iter().all(|a| a.abs() <= tol),
        Expected::AtLeast(b) => c.iter().all(|a| *a >= *b - tol),
        Expected::Finite => c.iter().all(|a| a.is_finite()),
    }
}

/// Sorted by check name (stable for equal names).
pub fn merge_reports<T: Scalar>(mut reports: Vec<AuditReport<T>>) -> Vec<AuditReport<T>> {
    reports.sort_by(|a, b| a.check_name.cmp(&b.check_name));
    reports
}

/// Human-readable summary of a report list.
pub fn summary<T: Scalar>(reports: &[AuditReport<T>]) -> String {
    let passed = reports.iter().filter(|r| r.pass).count();
    let mut s = format!("{passed}/{} checks passed\n", reports.len());
    for r in reports {
        let _ = writeln!(s, "  [{}] {}: {}", if r.pass { "pass" } else { "FAIL" }, r.check_name, r.details);
    }
    s
}

/// Where whole-space integrals are evaluated.
#[derive(Clone, Debug)]
pub enum Quadrature<T: Scalar> {
    /// Bubble-frame nodes shared by `frames`; error from a coarser rule.
    Frames { rule: FrameRule<T>, coarse: FrameRule<T>, frames: Vec<Frame<T>> },
    /// Trapezoid rule on a box with a homogeneous tail.
    Grid(GridSpec<T>),
}

impl<T: Scalar> Quadrature<T> {
    pub fn frames(cst: &Constants<T>, frames: Vec<Frame<T>>) -> Result<Self> {
        let rule = FrameRule::default_for(cst)?;
        let coarse = rule.coarse(cst)?;
        Ok(Quadrature::Frames { rule, coarse, frames })
    }

    /// Frames at the bumps of `state`.
    pub fn for_state(cst: &Constants<T>, state: &MultiBump<T>) -> Result<Self> {
        Self::frames(cst, state.bumps.iter().map(Frame::of).collect())
    }

    /// `(values, error estimates)` of `m` integrals; `tails[j]` is the decay
    /// exponent of integrand `j`, used by the grid variant.
    fn integrate_many<F>(&self, m: usize, tails: &[T], f: F) -> Result<(Vec<T>, Vec<T>)>
    where
        F: Fn(&HPoint<T>, &mut [T]) + Sync,
    {
        match self {
            Quadrature::Frames { rule, coarse, frames } => {
                let fine = rule.partition_nodes(frames).integrate_many(m, &f);
                let rough = coarse.partition_nodes(frames).integrate_many(m, &f);
                let err = fine.iter().zip(&rough).map(|(a, b)| (*a - *b).abs()).collect();
                Ok((fine, err))
            }
            Quadrature::Grid(spec) => {
                let mut vals = Vec::with_capacity(m);
                let mut errs = Vec::with_capacity(m);
                for j in 0..m {
                    let r = integrate_fn(spec, Some(tails[j]), |p| {
                        let mut buf = vec![T::zero(); m];
                        f(p, &mut buf);
                        buf[j]
                    })?;
                    vals.push(r.value);
                    errs.push(r.estimated_error);
                }
                Ok((vals, errs))
            }
        }
    }
}

fn growth_check<T: Scalar>(decay: T, growth: T, cst: &Constants<T>) -> Result<T> {
    let tail = decay * cst.qstar - growth;
    if !(tail > cst.q) {
        return Err(Error::TailExponent { gamma: to_f64(tail), q: to_f64(cst.q) });
    }
    Ok(tail)
}

/// Kazdan–Warner pairings of `u` against `R`:
/// `[∫⟨(z,2t),∇R⟩|u|^{Q*}, ∫X_1R|u|^{Q*}.., ∫Y_1R|u|^{Q*}.., ∫TR|u|^{Q*}]`.
///
/// `decay` is the exponent `γ` with `|u| = O(|ξ|^{−γ})`. The tolerance is the
/// largest quadrature error estimate plus roundoff on the absolute integrals.
pub fn kazdan_warner<T: Scalar, U: ScalarField<T> + ?Sized>(
    u: &U,
    r: &RSpec<T>,
    decay: T,
    quad: &Quadrature<T>,
    cst: &Constants<T>,
) -> Result<AuditReport<T>> {
    let n = cst.n;
    if u.n() != n || r.n() != n {
        return Err(Error::Dimension { expected: n, got: if u.n() != n { u.n() } else { r.n() } });
    }
    let tail = growth_check(decay, r.growth(), cst)?;
    let m = 2 * n + 2;
    let tails: Vec<T> = (0..2 * m).map(|j| if j % m == 0 { tail } else { tail + T::one() }).collect();
    let (vals, errs) = quad.integrate_many(2 * m, &tails, |p, out| {
        let w = u.value(p).abs().powf(cst.qstar);
        if w == T::zero() {
            return;
        }
        let Ok(g) = cartesian_gradient(r, p) else { return };
        let h = horizontal_from_gradient(p, &g);
        let mut comps = Vec::with_capacity(m);
        comps.push(dilation_from_gradient(p, &g));
        comps.extend(h);
        comps.push(g[2 * n]);
        for (j, c) in comps.iter().enumerate() {
            out[j] = *c * w;
            out[m + j] = c.abs() * w;
        }
    })?;
    let scale = vals[m..].iter().fold(T::zero(), |a, b| a.max(*b));
    let err = errs[..m].iter().fold(T::zero(), |a, b| a.max(*b));
    let tol = err + lit::<T>(1e-12) * scale;
    let details = format!("pairing {} max |integrand| mass {} quad err {}", fmt(vals[0]), fmt(scale), fmt(err));
    Ok(AuditReport::new("kazdan_warner", vals[..m].to_vec(), Expected::IdentityZero, tol, details))
}

/// `B|∇d|` at a node of the sphere about the origin, for the local field.
fn boundary_density<T: Scalar, V: ScalarField<T> + ?Sized>(v: &V, eta: &HPoint<T>, grad_d: &[T], sigma: T, q: T) -> Result<T> {
    let g = cartesian_gradient(v, eta)?;
    let ag = a_matrix_apply(eta, &g);
    let an = ag.iter().zip(grad_d).fold(T::zero(), |s, (a, b)| s + *a * *b);
    let h2 = horizontal_from_gradient(eta, &g).iter().fold(T::zero(), |s, a| s + *a * *a);
    let two = lit::<T>(2.0);
    Ok((q - two) / two * an * v.value(eta) - h2 * sigma / two + an * dilation_from_gradient(eta, &g))
}

fn boundary_sum<T: Scalar, V: ScalarField<T> + ?Sized>(v: &V, sigma: T, rule: &GaugeRule<T>, q: T) -> Result<T> {
    let nodes = sphere_nodes(&HPoint::origin(v.n()), sigma, rule)?;
    let mut vals = Vec::with_capacity(nodes.len());
    for nd in &nodes {
        vals.push(boundary_density(v, &nd.local, &nd.grad_d, sigma, q)? * nd.weight);
    }
    Ok(pairwise_sum(&vals))
}

/// `∮_{∂B_σ(ξ₀)} B(σ, ξ, u, ∇_H u) dS`, with `𝒳` the dilation field about
/// `ξ₀`. The second value is the difference to a coarser rule.
pub fn pohozaev_boundary_term<T: Scalar, U: ScalarField<T> + ?Sized>(
    u: &U,
    center: &HPoint<T>,
    sigma: T,
    rule: &GaugeRule<T>,
) -> Result<(T, T)> {
    let q = lit::<T>((2 * center.n() + 2) as f64);
    let v = translate_field(center, u);
    let fine = boundary_sum(&v, sigma, rule, q)?;
    let coarse = boundary_sum(&v, sigma, &rule.coarse(), q)?;
    Ok((fine, (fine - coarse).abs()))
}

/// `σ → 0` limit of the boundary term from `σ, σ/2, σ/4`, two Richardson
/// levels assuming an expansion in powers of `σ`.
pub fn pohozaev_boundary_limit<T: Scalar, U: ScalarField<T> + ?Sized>(
    u: &U,
    center: &HPoint<T>,
    sigma: T,
    rule: &GaugeRule<T>,
) -> Result<T> {
    let two = lit::<T>(2.0);
    let f0 = pohozaev_boundary_term(u, center, sigma, rule)?.0;
    let f1 = pohozaev_boundary_term(u, center, sigma / two, rule)?.0;
    let f2 = pohozaev_boundary_term(u, center, sigma / lit(4.0), rule)?.0;
    let r0 = two * f1 - f0;
    let r1 = two * f2 - f1;
    Ok((lit::<T>(4.0) * r1 - r0) / lit(3.0))
}

/// `Q/(p+1) − (Q−2)/2`.
pub fn volume_coefficient<T: Scalar>(q: T, p: T) -> T {
    let two = lit::<T>(2.0);
    q / (p + T::one()) - (q - two) / two
}

/// The same coefficient written through `τ`: `(Q−2)τ / (2(p+1))`.
pub fn volume_coefficient_tau<T: Scalar>(q: T, tau: T, p: T) -> T {
    let two = lit::<T>(2.0);
    (q - two) * tau / (two * (p + T::one()))
}

/// The four terms of the Pohozaev balance on `B_σ(ξ₀)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PohozaevTerms<T: Scalar> {
    /// `∮ B`.
    pub boundary: T,
    /// `(Q/(p+1) − (Q−2)/2) ∫ R_τ|u|^{p+1}`.
    pub volume: T,
    /// `1/(p+1) ∫ 𝒳(R_τ)|u|^{p+1}`.
    pub dilation: T,
    /// `−1/(p+1) ∮ R_τ|u|^{p+1} 𝒳·ν`.
    pub flux: T,
    pub coefficient: T,
    pub coefficient_tau: T,
    /// Combined quadrature error estimate.
    pub error: T,
}

impl<T: Scalar> PohozaevTerms<T> {
    pub fn residual(&self) -> T {
        self.boundary - (self.volume + self.dilation + self.flux)
    }

    pub fn largest(&self) -> T {
        [self.boundary, self.volume, self.dilation, self.flux].iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn relative_residual(&self) -> T {
        let l = self.largest();
        if l == T::zero() {
            T::zero()
        } else {
            self.residual().abs() / l
        }
    }

    pub fn report(&self, name: &str, tolerance: T) -> AuditReport<T> {
        let d = format!(
            "boundary {} volume {} dilation {} flux {} residual {}",
            fmt(self.boundary),
            fmt(self.volume),
            fmt(self.dilation),
            fmt(self.flux),
            fmt(self.residual())
        );
        AuditReport::scalar(name, self.relative_residual(), T::zero(), tolerance, d)
    }

    /// The volume coefficient by both formulas; exact agreement expected up
    /// to rounding.
    pub fn coefficient_report(&self) -> AuditReport<T> {
        let tol = lit::<T>(64.0) * T::epsilon() * (T::one() + self.coefficient.abs());
        AuditReport::scalar("pohozaev_volume_coefficient", self.coefficient, self.coefficient_tau, tol, "two algebraic forms")
    }
}

/// Terms of the Pohozaev identity for `−Δ_H u = R H^τ |u|^{p−1}u` on
/// `B_σ(ξ₀)`.
pub fn pohozaev_identity<T: Scalar, U: ScalarField<T> + ?Sized>(
    u: &U,
    r: &RSpec<T>,
    exp: &SubcriticalExponent<T>,
    center: &HPoint<T>,
    sigma: T,
    rule: &GaugeRule<T>,
) -> Result<PohozaevTerms<T>> {
    let n = center.n();
    if u.n() != n || r.n() != n {
        return Err(Error::Dimension { expected: n, got: u.n() });
    }
    let q = lit::<T>((2 * n + 2) as f64);
    let p1 = exp.p + T::one();
    let v = translate_field(center, u);
    let origin = HPoint::origin(n);
    let (boundary, berr) = pohozaev_boundary_term(u, center, sigma, rule)?;

    let power = |eta: &HPoint<T>| v.value(eta).abs().powf(p1);
    let weight = |eta: &HPoint<T>| exp.weight(r, &compose(center, eta));
    let dil = |eta: &HPoint<T>| -> T {
        let xi = compose(center, eta);
        let Ok(mut g) = cartesian_gradient(r, &xi) else { return T::nan() };
        if exp.tau != T::zero() {
            let mut gh = vec![T::zero(); 2 * n + 1];
            let h = weight_h_gradient(&xi, &mut gh);
            let rv = r.value(&xi);
            let ht = h.powf(exp.tau);
            for k in 0..g.len() {
                g[k] = g[k] * ht + rv * exp.tau * ht / h * gh[k];
            }
        }
        pullback_left_translation(center, &mut g);
        dilation_from_gradient(eta, &g)
    };
    let coefficient = volume_coefficient(q, exp.p);
    let coefficient_tau = volume_coefficient_tau(q, exp.tau, exp.p);
    let vol = integrate_ball_fn(|eta| weight(eta) * power(eta), &origin, sigma, rule)?;
    let xr = integrate_ball_fn(|eta| dil(eta) * power(eta), &origin, sigma, rule)?;

    let flux_sum = |rule: &GaugeRule<T>| -> Result<T> {
        let nodes = sphere_nodes(&origin, sigma, rule)?;
        let vals: Vec<T> = nodes.iter().map(|nd| weight(&nd.local) * power(&nd.local) * sigma * nd.weight).collect();
        Ok(pairwise_sum(&vals))
    };
    let flux = flux_sum(rule)?;
    let ferr = (flux - flux_sum(&rule.coarse())?).abs();
    Ok(PohozaevTerms {
        boundary,
        volume: coefficient * vol.value,
        dilation: xr.value / p1,
        flux: -flux / p1,
        coefficient,
        coefficient_tau,
        error: berr + coefficient.abs() * vol.estimated_error + (xr.estimated_error + ferr) / p1,
    })
}

fn beta_range<T: Scalar>(beta: T, cst: &Constants<T>) -> Result<()> {
    let two = lit::<T>(2.0);
    if !(beta > cst.q - two && beta < cst.q) {
        return Err(Error::BetaRange { beta: to_f64(beta), lo: to_f64(cst.q - two), hi: to_f64(cst.q) });
    }
    Ok(())
}

/// `(∫|x_1|^β w^{Q*}, ∫|t|^{β/2} w^{Q*})` for the standard bubble.
pub fn kappa_integrals<T: Scalar>(beta: T, cst: &Constants<T>, rule: &FrameRule<T>) -> Result<(T, T)> {
    beta_range(beta, cst)?;
    let half = beta / lit(2.0);
    let nodes = rule.weighted_nodes(&Frame::new(HPoint::origin(cst.n), T::one()));
    let v = nodes.integrate_many(2, |p, out| {
        out[0] = p.x[0].abs().powf(beta);
        out[1] = p.t.abs().powf(half);
    });
    Ok((v[0], v[1]))
}

/// `κ = ∫|x_1|^β w^{Q*} / ∫|t|^{β/2} w^{Q*}`, `Q−2 < β < Q`.
pub fn kappa_constant<T: Scalar>(beta: T, cst: &Constants<T>, rule: &FrameRule<T>) -> Result<T> {
    let (ix, it) = kappa_integrals(beta, cst, rule)?;
    Ok(ix / it)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Independent estimate of `κ` by importance sampling in Cartesian
/// coordinates.
///
/// Proposal: `s = |z|²` Beta-prime with density `∝ s^{n−1}(1+s)^{−n−1/2}`,
/// `z/|z|` uniform, `t | z` Cauchy with scale `1+s`. The `x`-integral is
/// averaged over all `2n` horizontal coordinates (equal by symmetry).
pub fn kappa_monte_carlo(beta: f64, n: usize, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    let q = (2 * n + 2) as f64;
    if !(beta > q - 2.0 && beta < q) {
        return Err(Error::BetaRange { beta, lo: q - 2.0, hi: q });
    }
    if samples < 2 {
        return Err(Error::Invalid("need at least 2 samples".into()));
    }
    let a = n as f64 + 0.5;
    let radial = Beta::new(n as f64, a - n as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sx, mut st, mut sxx, mut stt, mut sxt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut dir = vec![0.0; 2 * n];
    for _ in 0..samples {
        let b: f64 = radial.sample(&mut rng);
        let s = b / (1.0 - b);
        let mut norm = 0.0;
        for d in dir.iter_mut() {
            *d = gaussian(&mut rng);
            norm += *d * *d;
        }
        let rz = (s / norm).sqrt();
        let scale = 1.0 + s;
        let t = scale * (std::f64::consts::PI * (rng.random::<f64>() - 0.5)).tan();
        let dd = scale * scale + t * t;
        // w^{Q*}/q up to constants common to both integrals.
        let w = dd.powf(-q / 2.0) * scale.powf(a) * dd / scale;
        let fx = dir.iter().map(|d| (d * rz).abs().powf(beta)).sum::<f64>() / (2 * n) as f64 * w;
        let ft = t.abs().powf(beta / 2.0) * w;
        sx += fx;
        st += ft;
        sxx += fx * fx;
        stt += ft * ft;
        sxt += fx * ft;
    }
    let m = samples as f64;
    let (mx, mt) = (sx / m, st / m);
    let vx = (sxx / m - mx * mx) / (m - 1.0);
    let vt = (stt / m - mt * mt) / (m - 1.0);
    let cxt = (sxt / m - mx * mt) / (m - 1.0);
    let k = mx / mt;
    let var = k * k * (vx / (mx * mx) + vt / (mt * mt) - 2.0 * cxt / (mx * mt));
    Ok(MonteCarloEstimate { value: k, std_error: var.max(0.0).sqrt(), samples })
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// The flatness-condition vector at `ξ̂` and the scalar criteria.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessConditions<T: Scalar> {
    /// `[∫X_jQ(ξ̂∘ξ)w^{Q*}.., ∫Y_jQ(ξ̂∘ξ)w^{Q*}.., ∫TQ(ξ̂∘ξ)w^{Q*}, ∫Q(ξ̂∘ξ)w^{Q*}]`.
    pub vector: Vec<T>,
    pub errors: Vec<T>,
    /// `|v_k| > 10 err_k + 1e-12 scale`.
    pub nonzero: Vec<bool>,
    pub kappa: T,
    pub ix: T,
    pub it: T,
    /// `Σ(a_j+b_j) + κc`, the form written with `κ` as the weight on `c`.
    pub a2_stated: T,
    /// `Σ(a_j+b_j) + c/κ`, proportional to `∫Q w^{Q*}` for the even family.
    pub a2_consistent: T,
}

impl<T: Scalar> FlatnessConditions<T> {
    pub fn gradient(&self) -> &[T] {
        &self.vector[..self.vector.len() - 1]
    }

    pub fn mass(&self) -> T {
        *self.vector.last().unwrap()
    }

    /// Derivative components vanish (even family at the origin).
    pub fn parity_report(&self) -> AuditReport<T> {
        let g = self.gradient();
        let tol = self.errors[..g.len()].iter().fold(T::zero(), |m, e| m.max(*e)) * lit(10.0)
            + lit::<T>(1e-12) * self.ix.abs().max(self.it.abs());
        AuditReport::new("flatness_parity", g.to_vec(), Expected::IdentityZero, tol, "derivative components of the flatness vector")
    }

    /// `∫Q w^{Q*}` against `Σ(a_j+b_j)∫|x_1|^β w^{Q*} + c∫|t|^{β/2}w^{Q*}`.
    pub fn a2_report(&self, a_sum: T, c: T, rel: T) -> AuditReport<T> {
        let split = a_sum * self.ix + c * self.it;
        let d = format!(
            "kappa {} stated form {} consistent form {}",
            fmt(self.kappa),
            fmt(self.a2_stated),
            fmt(self.a2_consistent)
        );
        AuditReport::scalar("flatness_a2_scalar", self.mass(), split, rel * split.abs(), d)
    }
}

/// Evaluates the flatness vector of `f`'s `Q^{(β)}` at `ξ̂ = xi0`.
pub fn flatness_conditions<T: Scalar>(
    f: &Flatness<T>,
    xi0: &HPoint<T>,
    cst: &Constants<T>,
    rule: &FrameRule<T>,
) -> Result<FlatnessConditions<T>> {
    let n = cst.n;
    if f.n() != n || xi0.n() != n {
        return Err(Error::Dimension { expected: n, got: f.n() });
    }
    beta_range(f.beta, cst)?;
    let m = 2 * n + 2;
    let frame = Frame::new(HPoint::origin(n), T::one());
    let eval = |p: &HPoint<T>, out: &mut [T]| {
        let xi = compose(xi0, p);
        let mut g = vec![T::zero(); 2 * n + 1];
        f.q_gradient(&xi, &mut g);
        let h = horizontal_from_gradient(&xi, &g);
        out[..2 * n].copy_from_slice(&h);
        out[2 * n] = g[2 * n];
        out[2 * n + 1] = f.q_beta(&xi);
    };
    let vector = rule.weighted_nodes(&frame).integrate_many(m, eval);
    let rough = rule.coarse(cst)?.weighted_nodes(&frame).integrate_many(m, eval);
    let errors: Vec<T> = vector.iter().zip(&rough).map(|(a, b)| (*a - *b).abs()).collect();
    let (ix, it) = kappa_integrals(f.beta, cst, rule)?;
    let kappa = ix / it;
    let scale = ix.abs().max(it.abs());
    let nonzero = vector
        .iter()
        .zip(&errors)
        .map(|(v, e)| v.abs() > lit::<T>(10.0) * *e + lit::<T>(1e-12) * scale)
        .collect();
    let ab: T = f.a.iter().chain(&f.b).copied().sum();
    Ok(FlatnessConditions {
        vector,
        errors,
        nonzero,
        kappa,
        ix,
        it,
        a2_stated: ab + kappa * f.c,
        a2_consistent: ab + f.c / kappa,
    })
}

/// `Σ(a_j+b_j)` of an even flatness family.
pub fn coefficient_sum<T: Scalar>(f: &Flatness<T>) -> Result<T> {
    if f.family != FlatnessFamily::Even {
        return Err(Error::Invalid("coefficient sum is defined for the even family".into()));
    }
    Ok(f.a.iter().chain(&f.b).copied().sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayDiagnostic<T: Scalar> {
    /// `sup |ξ|^{Q−2}|u|` on the annulus samples.
    pub value_sup: T,
    /// `sup |ξ|^{Q−1}|∇_H u|`.
    pub gradient_sup: T,
}

impl<T: Scalar> DecayDiagnostic<T> {
    pub fn report(&self) -> AuditReport<T> {
        AuditReport::new(
            "decay",
            vec![self.value_sup, self.gradient_sup],
            Expected::Finite,
            T::zero(),
            "sup |xi|^(Q-2)|u| and sup |xi|^(Q-1)|grad_H u| on the annulus",
        )
    }
}

const DECAY_RADII: usize = 9;

/// Sampled decay constants of `u` on `l1 ≤ |ξ| ≤ l2` (`l2 > 4 l1`).
pub fn decay_diagnostic<T: Scalar, U: ScalarField<T> + ?Sized>(u: &U, annulus: (T, T)) -> Result<DecayDiagnostic<T>> {
    let (l1, l2) = annulus;
    if !(l1 > T::zero() && l2 > lit::<T>(4.0) * l1) {
        return Err(Error::Invalid(format!("annulus needs 0 < 4 l1 < l2, got ({}, {})", to_f64(l1), to_f64(l2))));
    }
    let n = u.n();
    let q = lit::<T>((2 * n + 2) as f64);
    let two = lit::<T>(2.0);
    let unit = GaugeRule::<T>::new(n, 2, 12, 12).unit_nodes();
    let mut vs = T::zero();
    let mut gs = T::zero();
    for i in 0..DECAY_RADII {
        let r = l1 * (l2 / l1).powf(lit::<T>(i as f64 / (DECAY_RADII - 1) as f64));
        for (eta, _) in &unit {
            let p = dilate_unchecked(r, eta);
            if let Some(g) = u.grid() {
                if !g.interior(&p, 2) {
                    return Err(Error::Grid("decay annulus leaves the sampled box".into()));
                }
            }
            let rho = gauge_norm(&p);
            vs = vs.max(rho.powf(q - two) * u.value(&p).abs());
            let g = cartesian_gradient(u, &p)?;
            let h = horizontal_from_gradient(&p, &g).iter().fold(T::zero(), |s, a| s + *a * *a).sqrt();
            gs = gs.max(rho.powf(q - T::one()) * h);
        }
    }
    Ok(DecayDiagnostic { value_sup: vs, gradient_sup: gs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::{bubble, standard_bubble, BumpParams};
    use crate::field::FnField;
    use crate::multibump::Ramp;

    fn cst() -> Constants<f64> {
        Constants::new(1).unwrap()
    }

    /// `|ξ|^{2−Q} + a + h`.
    fn fundamental(a: f64, h: f64) -> FnField<f64> {
        FnField::new(1, move |p: &HPoint<f64>| {
            let r2 = p.x[0] * p.x[0] + p.y[0] * p.y[0];
            (r2 * r2 + p.t * p.t).sqrt().recip() + a + h * p.x[0]
        })
    }

    #[test]
    fn report_verdicts() {
        let r = AuditReport::new("v", vec![1.0, 2.0], Expected::Values(vec![1.0, 2.1]), 0.05, "");
        assert!(!r.pass);
        assert!(r.rescaled(3.0).pass);
        assert!(AuditReport::new("z", vec![1e-9], Expected::IdentityZero, 1e-8, "").pass);
        assert!(AuditReport::new("l", vec![5.0], Expected::AtLeast(4.0), 0.0, "").pass);
        assert!(!AuditReport::new("f", vec![f64::NAN], Expected::Finite, 0.0, "").pass);
        let row = AuditReport::scalar("c", 0.5, 0.5, 1e-3, "").csv_row();
        assert_eq!(row, "c,5.0000000000e-1,5.0000000000e-1,1.0000000000e-3,true");
    }

    #[test]
    fn kazdan_warner_vanishes_for_constant_curvature() {
        let c = cst();
        let w = standard_bubble(&c);
        let quad = Quadrature::frames(&c, vec![Frame::new(HPoint::origin(1), 1.0)]).unwrap();
        let rep = kazdan_warner(&w, &RSpec::constant(1, 1.0), 2.0, &quad, &c).unwrap();
        assert!(rep.pass);
        assert!(rep.computed.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kazdan_warner_parity_for_even_flatness() {
        let c = cst();
        let f = Flatness::new(HPoint::origin(1), 1.0, 3.0, vec![-1.0], vec![-0.5], -2.0, FlatnessFamily::Even).unwrap();
        let w = standard_bubble(&c);
        let quad = Quadrature::frames(&c, vec![Frame::new(HPoint::origin(1), 1.0)]).unwrap();
        let rep = kazdan_warner(&w, &RSpec::Flatness(f), 2.0, &quad, &c).unwrap();
        // Odd integrands: only the radial pairing is even, and it equals
        // β∫Q w^{Q*} by homogeneity, so it does not vanish.
        for v in &rep.computed[1..] {
            assert!(v.abs() < 1e-10, "{:?}", rep.computed);
        }
        let (ix, it) = kappa_integrals(3.0, &c, &FrameRule::default_for(&c).unwrap()).unwrap();
        let homogeneous = 3.0 * (-1.5 * ix - 2.0 * it);
        assert!((rep.computed[0] / homogeneous - 1.0).abs() < 1e-9, "{} {homogeneous}", rep.computed[0]);
    }

    #[test]
    fn kazdan_warner_detects_monotone_curvature() {
        let c = cst();
        let r = RSpec::Ramp(Ramp { n: 1, level: 1.0, amp: 0.5, width: 1.0, axis: 0 });
        let w = bubble(BumpParams::new(1.0, HPoint::xyt(0.3, 0.0, 0.0), 1.0).unwrap(), &c);
        let quad = Quadrature::frames(&c, vec![Frame::new(HPoint::xyt(0.3, 0.0, 0.0), 1.0)]).unwrap();
        let rep = kazdan_warner(&w, &r, 2.0, &quad, &c).unwrap();
        assert!(rep.computed[1] > 10.0 * rep.tolerance, "{:?} {}", rep.computed, rep.tolerance);
        assert!(!rep.pass);
    }

    #[test]
    fn kazdan_warner_rejects_divergent_tail() {
        let c = cst();
        let w = standard_bubble(&c);
        let quad = Quadrature::frames(&c, vec![Frame::new(HPoint::origin(1), 1.0)]).unwrap();
        assert!(matches!(
            kazdan_warner(&w, &RSpec::constant(1, 1.0), 1.0, &quad, &c),
            Err(Error::TailExponent { .. })
        ));
    }

    #[test]
    fn boundary_term_of_fundamental_solution_vanishes() {
        let rule = GaugeRule::default_for(1);
        let u = fundamental(0.0, 0.0);
        for s in [0.5, 1.0, 2.0] {
            let (b, _) = pohozaev_boundary_term(&u, &HPoint::origin(1), s, &rule).unwrap();
            assert!(b.abs() < 1e-3, "sigma {s}: {b}");
        }
    }

    #[test]
    fn boundary_limit_with_constant_shift() {
        let rule = GaugeRule::default_for(1);
        let target = -8.0 * std::f64::consts::PI;
        for h in [0.0, 0.7] {
            let u = fundamental(1.0, h);
            let lim = pohozaev_boundary_limit(&u, &HPoint::origin(1), 0.4, &rule).unwrap();
            assert!((lim / target - 1.0).abs() < 0.02, "h {h}: {lim}");
        }
    }

    #[test]
    fn boundary_term_of_constant_is_zero() {
        let u = crate::field::Constant(1, 3.0);
        let (b, _) = pohozaev_boundary_term(&u, &HPoint::xyt(1.0, 0.0, 0.5), 1.0, &GaugeRule::default_for(1)).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn pohozaev_balances_on_bubbles() {
        let c = cst();
        let rule = GaugeRule::default_for(1);
        let exp = SubcriticalExponent::critical(&c);
        let center = HPoint::xyt(0.5, -0.2, 0.3);
        let w = bubble(BumpParams::new(1.0, center.clone(), 1.3).unwrap(), &c);
        for s in [0.5, 1.0, 2.0] {
            let t = pohozaev_identity(&w, &RSpec::constant(1, 1.0), &exp, &center, s, &rule).unwrap();
            assert_eq!(t.volume, 0.0);
            assert!(t.relative_residual() < 1e-4, "sigma {s}: {t:?}");
            assert!(t.report("p", 0.02).pass);
        }
    }

    #[test]
    fn volume_coefficient_two_ways() {
        let c = cst();
        for tau in [0.0, 0.01, 0.3, 1.0] {
            let e = SubcriticalExponent::new(tau, &c).unwrap();
            let a = volume_coefficient(c.q, e.p);
            let b = volume_coefficient_tau(c.q, tau, e.p);
            assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()), "{a} {b}");
        }
    }

    #[test]
    fn kappa_matches_closed_form_at_three() {
        // n = 1, β = 3: ∫|x|³w⁴ = π²/4 · k, ∫|t|^{3/2}w⁴ = π²/√2 · k.
        let c = cst();
        let exact = 2f64.sqrt() / 4.0;
        let coarse = kappa_constant(3.0, &c, &FrameRule::new(&c, 32, 24, 24).unwrap()).unwrap();
        let fine = kappa_constant(3.0, &c, &FrameRule::default_for(&c).unwrap()).unwrap();
        assert!((fine / exact - 1.0).abs() < 2e-3, "{fine} vs {exact}");
        assert!((coarse / fine - 1.0).abs() < 0.01);
        let near = kappa_constant(3.01, &c, &FrameRule::default_for(&c).unwrap()).unwrap();
        assert!((near - fine).abs() < 0.05 * fine);
    }

    #[test]
    fn kappa_range_is_enforced() {
        let c = cst();
        let rule = FrameRule::new(&c, 8, 4, 4).unwrap();
        assert!(matches!(kappa_constant(2.0, &c, &rule), Err(Error::BetaRange { .. })));
        assert!(kappa_monte_carlo(4.0, 1, 10, 1).is_err());
    }

    #[test]
    fn kappa_monte_carlo_agrees() {
        let exact = 2f64.sqrt() / 4.0;
        let mc = kappa_monte_carlo(3.0, 1, 400_000, 7).unwrap();
        assert!((mc.value / exact - 1.0).abs() < 0.02, "{mc:?}");
        assert!(mc.std_error < 0.01 * exact, "{mc:?}");
        assert_eq!(mc, kappa_monte_carlo(3.0, 1, 400_000, 7).unwrap());
    }

    #[test]
    fn flatness_even_family_at_origin() {
        let c = cst();
        let rule = FrameRule::default_for(&c).unwrap();
        let f = Flatness::new(HPoint::origin(1), 1.0, 3.0, vec![1.0], vec![2.0], -1.5, FlatnessFamily::Even).unwrap();
        let fc = flatness_conditions(&f, &HPoint::origin(1), &c, &rule).unwrap();
        assert!(fc.parity_report().pass, "{:?}", fc.vector);
        assert!(fc.nonzero[3]);
        let rep = fc.a2_report(3.0, -1.5, 1e-9);
        assert!(rep.pass, "{rep:?}");
        assert!((fc.mass() - fc.it * (3.0 * fc.kappa - 1.5)).abs() < 1e-9 * fc.mass().abs().max(1.0));
        assert!((fc.a2_consistent * fc.kappa - (3.0 * fc.kappa - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn flatness_signed_family_t_component() {
        let c = cst();
        let rule = FrameRule::default_for(&c).unwrap();
        let f = Flatness::new(HPoint::origin(1), 1.0, 3.0, vec![1.0], vec![1.0], 1.0, FlatnessFamily::Signed).unwrap();
        let fc = flatness_conditions(&f, &HPoint::origin(1), &c, &rule).unwrap();
        assert!(fc.nonzero[2], "{:?}", fc.vector);
        assert!(fc.vector[2] > 0.0);
    }

    #[test]
    fn flatness_vector_scales_with_coefficients() {
        let c = cst();
        let rule = FrameRule::new(&c, 24, 16, 16).unwrap();
        let lam: f64 = 1.7;
        let xi0 = HPoint::xyt(0.4, -0.3, 0.2);
        let mk = |s: f64| Flatness::new(HPoint::origin(1), 0.0, 3.0, vec![s], vec![-2.0 * s], 0.5 * s, FlatnessFamily::Even).unwrap();
        let base = flatness_conditions(&mk(1.0), &xi0, &c, &rule).unwrap();
        let big = flatness_conditions(&mk(lam.powf(3.0)), &xi0, &c, &rule).unwrap();
        for (a, b) in base.vector.iter().zip(&big.vector) {
            assert!((b - lam.powf(3.0) * a).abs() < 1e-10 * b.abs().max(1.0));
        }
        // Homogeneity of Q itself.
        let f = mk(1.0);
        let p = HPoint::xyt(0.3, 0.8, -0.5);
        assert!((f.q_beta(&dilate_unchecked(lam, &p)) - lam.powf(3.0) * f.q_beta(&p)).abs() < 1e-12);
    }

    #[test]
    fn decay_of_fundamental_solution() {
        let d = decay_diagnostic(&fundamental(0.0, 0.0), (1.0, 8.0)).unwrap();
        assert!((d.value_sup - 1.0).abs() < 1e-12);
        assert!(d.report().pass);
    }

    #[test]
    fn decay_of_bubble_is_stable() {
        let c = cst();
        let w = standard_bubble(&c);
        let a = decay_diagnostic(&w, (4.0, 20.0)).unwrap();
        let b = decay_diagnostic(&w, (8.0, 40.0)).unwrap();
        assert!(a.value_sup <= c.c0 * 1.0001 && a.value_sup > 0.9 * c.c0);
        assert!((a.value_sup / b.value_sup - 1.0).abs() < 0.05);
        assert!((a.gradient_sup / b.gradient_sup - 1.0).abs() < 0.05);
    }

    #[test]
    fn decay_of_compact_support() {
        let u = FnField::new(1, |p: &HPoint<f64>| (1.0 - gauge_norm(p)).max(0.0).powi(3));
        let d = decay_diagnostic(&u, (2.0, 9.0)).unwrap();
        assert_eq!((d.value_sup, d.gradient_sup), (0.0, 0.0));
        assert!(decay_diagnostic(&u, (2.0, 7.0)).is_err());
    }
}
