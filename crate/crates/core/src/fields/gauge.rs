//! Integration over gauge balls `B_r(ξ₀) = {d(ξ, ξ₀) < r}` and their
//! boundaries, in gauge polar coordinates
//! `ξ = ξ₀ ∘ δ_r(ω √cos φ, sin φ)`, `φ ∈ [−π/2, π/2]`, `ω ∈ S^{2n−1}`,
//! where `dξ = r^{Q−1} cos^{n−1}φ dr dφ dω`.

use crate::field::{AffineMap, ScalarField};
use crate::fields::quad::{pairwise_sum, QuadratureResult};
use crate::fields::sphere::{gauss_legendre, SphereRule};
use crate::group::{inverse, HPoint};
use crate::{lit, to_f64, Error, Result, Scalar};

#[derive(Clone, Debug)]
pub struct GaugeRule<T: Scalar> {
    pub n: usize,
    pub n_r: usize,
    pub n_phi: usize,
    pub n_angle: usize,
    omega: SphereRule<T>,
    phi: Vec<(f64, f64)>,
    radial: Vec<(f64, f64)>,
}

impl<T: Scalar> GaugeRule<T> {
    pub fn new(n: usize, n_r: usize, n_phi: usize, n_angle: usize) -> Self {
        let omega = SphereRule::new(n, n_angle, n_angle);
        // φ = (π/2) sin(πu/2) clusters nodes at the poles, where √cos φ has a
        // square-root singularity.
        let (gx, gw) = gauss_legendre(n_phi);
        let hp = std::f64::consts::FRAC_PI_2;
        let phi = gx
            .iter()
            .zip(&gw)
            .map(|(&u, &w)| {
                let ph = hp * (hp * u).sin();
                let jac = hp * hp * (hp * u).cos();
                (ph, w * jac * ph.cos().powi(n as i32 - 1))
            })
            .collect();
        let (rx, rw) = gauss_legendre(n_r);
        let radial = rx.iter().zip(&rw).map(|(&x, &w)| ((x + 1.0) / 2.0, w / 2.0)).collect();
        GaugeRule { n, n_r, n_phi, n_angle, omega, phi, radial }
    }

    pub fn default_for(n: usize) -> Self {
        Self::new(n, 32, 40, if n == 1 { 48 } else { 16 })
    }

    /// The same rule with half the nodes per direction (error estimates).
    pub fn coarse(&self) -> Self {
        Self::new(self.n, (self.n_r / 2).max(2), (self.n_phi / 2).max(2), (self.n_angle / 2).max(2))
    }

    /// Unit-sphere nodes `(η, dσ-weight)` with `dσ = cos^{n−1}φ dφ dω`.
    pub fn unit_nodes(&self) -> Vec<(HPoint<T>, T)> {
        let mut out = Vec::with_capacity(self.phi.len() * self.omega.len());
        for &(ph, wph) in &self.phi {
            let c = ph.cos().max(0.0).sqrt();
            let s = ph.sin();
            for (z, &w) in self.omega.nodes.iter().zip(&self.omega.weights) {
                let x: Vec<T> = z.iter().map(|v| v.re * lit(c)).collect();
                let y: Vec<T> = z.iter().map(|v| v.im * lit(c)).collect();
                out.push((HPoint::new(&x, &y, lit(s)), w * lit(wph)));
            }
        }
        out
    }
}

/// Euclidean gradient of `ρ(η) = |η|` at `η ≠ 0`:
/// `∂x ρ = |z|² x/ρ³`, `∂y ρ = |z|² y/ρ³`, `∂t ρ = t/(2ρ³)`.
pub fn gauge_gradient<T: Scalar>(eta: &HPoint<T>) -> Vec<T> {
    let n = eta.n();
    let r2 = eta.z_norm2();
    let rho = (r2 * r2 + eta.t * eta.t).sqrt().sqrt();
    let r3 = rho * rho * rho;
    let mut g = Vec::with_capacity(2 * n + 1);
    g.extend(eta.x.iter().map(|&x| r2 * x / r3));
    g.extend(eta.y.iter().map(|&y| r2 * y / r3));
    g.push(eta.t / (lit::<T>(2.0) * r3));
    g
}

/// A node on `∂B_σ(ξ₀)`.
#[derive(Clone, Debug)]
pub struct SphereNode<T: Scalar> {
    /// Physical point `ξ₀ ∘ η`.
    pub point: HPoint<T>,
    /// Local point `η` with `|η| = σ`.
    pub local: HPoint<T>,
    /// Euclidean gradient of `ξ ↦ d(ξ, ξ₀)` at `point`.
    pub grad_d: Vec<T>,
    /// Weight for the coarea form: `∮ g/|∇d| dS ≈ Σ g · weight`.
    pub weight: T,
}

pub fn sphere_nodes<T: Scalar>(center: &HPoint<T>, sigma: T, rule: &GaugeRule<T>) -> Result<Vec<SphereNode<T>>> {
    if !(sigma > T::zero()) {
        return Err(Error::Invalid(format!("radius must be positive, got {}", to_f64(sigma))));
    }
    let q = 2 * center.n() + 2;
    let back = AffineMap { a: inverse(center), s: T::one() };
    let to_phys = AffineMap { a: center.clone(), s: T::one() };
    let scale = sigma.powi(q as i32 - 1);
    Ok(rule
        .unit_nodes()
        .into_iter()
        .map(|(u, w)| {
            let local = crate::group::dilate_unchecked(sigma, &u);
            let point = to_phys.apply(&local);
            let mut g = gauge_gradient(&local);
            back.pull_gradient(&mut g);
            SphereNode { point, local, grad_d: g, weight: w * scale }
        })
        .collect())
}

fn euclid<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &a| s + a * a).sqrt()
}

fn sphere_sum<T: Scalar, F: Fn(&HPoint<T>) -> T>(f: &F, center: &HPoint<T>, sigma: T, rule: &GaugeRule<T>) -> Result<T> {
    let nodes = sphere_nodes(center, sigma, rule)?;
    let v: Vec<T> = nodes.iter().map(|nd| f(&nd.point) * euclid(&nd.grad_d) * nd.weight).collect();
    Ok(pairwise_sum(&v))
}

/// `∮_{∂B_σ(ξ₀)} f dS` with the Euclidean surface measure
/// `dS = |∇d| σ^{Q−1} cos^{n−1}φ dφ dω`.
pub fn integrate_sphere_fn<T: Scalar, F: Fn(&HPoint<T>) -> T>(
    f: F,
    center: &HPoint<T>,
    sigma: T,
    rule: &GaugeRule<T>,
) -> Result<QuadratureResult<T>> {
    let fine = sphere_sum(&f, center, sigma, rule)?;
    let coarse = sphere_sum(&f, center, sigma, &rule.coarse())?;
    Ok(QuadratureResult { value: fine, estimated_error: (fine - coarse).abs(), tail_correction: T::zero() })
}

pub fn integrate_sphere<T: Scalar, F: ScalarField<T> + ?Sized>(
    f: &F,
    center: &HPoint<T>,
    sigma: T,
    rule: &GaugeRule<T>,
) -> Result<QuadratureResult<T>> {
    integrate_sphere_fn(|p| f.value(p), center, sigma, rule)
}

fn ball_sum<T: Scalar, F: Fn(&HPoint<T>) -> T>(f: &F, center: &HPoint<T>, radius: T, rule: &GaugeRule<T>) -> T {
    let q = 2 * center.n() + 2;
    let unit = rule.unit_nodes();
    let to_phys = AffineMap { a: center.clone(), s: T::one() };
    let mut shells = Vec::with_capacity(rule.radial.len());
    for &(x, wx) in &rule.radial {
        let r = radius * lit(x);
        let wr = radius * lit(wx) * r.powi(q as i32 - 1);
        let v: Vec<T> = unit
            .iter()
            .map(|(u, w)| f(&to_phys.apply(&crate::group::dilate_unchecked(r, u))) * *w)
            .collect();
        shells.push(wr * pairwise_sum(&v));
    }
    pairwise_sum(&shells)
}

/// `∫_{B_r(ξ₀)} f`.
pub fn integrate_ball_fn<T: Scalar, F: Fn(&HPoint<T>) -> T>(
    f: F,
    center: &HPoint<T>,
    radius: T,
    rule: &GaugeRule<T>,
) -> Result<QuadratureResult<T>> {
    if !(radius > T::zero()) {
        return Err(Error::Invalid(format!("radius must be positive, got {}", to_f64(radius))));
    }
    let fine = ball_sum(&f, center, radius, rule);
    let coarse = ball_sum(&f, center, radius, &rule.coarse());
    Ok(QuadratureResult { value: fine, estimated_error: (fine - coarse).abs(), tail_correction: T::zero() })
}

pub fn integrate_ball<T: Scalar, F: ScalarField<T> + ?Sized>(
    f: &F,
    center: &HPoint<T>,
    radius: T,
    rule: &GaugeRule<T>,
) -> Result<QuadratureResult<T>> {
    integrate_ball_fn(|p| f.value(p), center, radius, rule)
}

/// `|B_1|` for `n`: `|S^{2n−1}| ∫ cos^{n−1}φ dφ / Q`, by the same rule.
pub fn unit_ball_volume<T: Scalar>(rule: &GaugeRule<T>) -> T {
    let q = lit::<T>((2 * rule.n + 2) as f64);
    let s: T = rule.unit_nodes().iter().map(|(_, w)| *w).sum();
    s / q
}
