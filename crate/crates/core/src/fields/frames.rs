//! Bubble-frame quadrature: integrals over `H^n` of functions built from a
//! few bubbles, each bubble integrated in coordinates centered and scaled by
//! its own `(a, λ)`. Several bubbles share the work through the partition
//! `w_i^{Q*} / Σ_j w_j^{Q*}`.

use rayon::prelude::*;

use crate::bubbles::{standard_bubble, BumpParams, Constants};
use crate::field::ScalarField;
use crate::fields::gauge::GaugeRule;
use crate::fields::quad::pairwise_sum;
use crate::fields::sphere::gauss_legendre;
use crate::group::{compose, dilate_unchecked, inverse, HPoint};
use crate::{lit, Error, Result, Scalar};

/// Center and concentration of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T: Scalar> {
    pub center: HPoint<T>,
    pub scale: T,
}

impl<T: Scalar> Frame<T> {
    pub fn new(center: HPoint<T>, scale: T) -> Self {
        Frame { center, scale }
    }

    pub fn of(p: &BumpParams<T>) -> Self {
        Frame { center: p.center.clone(), scale: p.scale }
    }

    /// `a ∘ δ_{1/λ}(η)`.
    pub fn to_physical(&self, eta: &HPoint<T>) -> HPoint<T> {
        compose(&self.center, &dilate_unchecked(T::one() / self.scale, eta))
    }
}

/// Quadrature points and weights; `Σ f(p_k) w_k` approximates an integral.
#[derive(Clone, Debug, Default)]
pub struct Nodes<T: Scalar> {
    pub points: Vec<HPoint<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> Nodes<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ f(p_k) w_k`, evaluated in parallel and summed pairwise.
    pub fn integrate<F: Fn(&HPoint<T>) -> T + Sync>(&self, f: F) -> T {
        let v: Vec<T> = self
            .points
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(p, &w)| if w == T::zero() { T::zero() } else { f(p) * w })
            .collect();
        pairwise_sum(&v)
    }

    /// Several integrals sharing one pass over the nodes. `f` writes `m`
    /// integrand values into its buffer.
    pub fn integrate_many<F>(&self, m: usize, f: F) -> Vec<T>
    where
        F: Fn(&HPoint<T>, &mut [T]) + Sync,
    {
        let rows: Vec<Vec<T>> = self
            .points
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(p, &w)| {
                let mut buf = vec![T::zero(); m];
                if w != T::zero() {
                    f(p, &mut buf);
                    buf.iter_mut().for_each(|v| *v *= w);
                }
                buf
            })
            .collect();
        (0..m)
            .map(|j| pairwise_sum(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect()
    }
}

/// Per-frame rule in gauge polar coordinates with the radius compactified
/// by `ρ = s/(1−s)`, `s ∈ [0, 1)`.
///
/// A frame `(a, λ)` places the nodes at `a ∘ δ_{1/λ}(η_k)`. Away from the
/// center the angular nodes stay uniform in the homogeneous geometry, so
/// structure at gauge distance `R` is resolved as well as structure at
/// distance 1 (a Cayley-sphere rule squeezes the `t` direction by `R^{-2}`).
#[derive(Clone, Debug)]
pub struct FrameRule<T: Scalar> {
    pub n: usize,
    pub n_r: usize,
    pub n_phi: usize,
    pub n_angle: usize,
    c0: T,
    q: T,
    /// `(η_k, dη-weight, w_{0,1}(η_k)^{Q*})`.
    unit: Vec<(HPoint<T>, T, T)>,
}

impl<T: Scalar> FrameRule<T> {
    pub fn new(cst: &Constants<T>, n_r: usize, n_phi: usize, n_angle: usize) -> Result<Self> {
        if n_r < 2 || n_phi < 2 || n_angle < 2 {
            return Err(Error::Invalid("frame rule needs at least 2 nodes per direction".into()));
        }
        let angular = GaugeRule::<T>::new(cst.n, 2, n_phi, n_angle).unit_nodes();
        let (gx, gw) = gauss_legendre(n_r);
        let qi = 2 * cst.n as i32 + 2;
        let w0 = standard_bubble(cst);
        let mut unit = Vec::with_capacity(n_r * angular.len());
        for (x, w) in gx.iter().zip(&gw) {
            let s = (x + 1.0) / 2.0;
            let rho = s / (1.0 - s);
            let wr = w / 2.0 / ((1.0 - s) * (1.0 - s)) * rho.powi(qi - 1);
            for (theta, wa) in &angular {
                let eta = dilate_unchecked(lit::<T>(rho), theta);
                let wq = w0.value(&eta).powf(cst.qstar);
                unit.push((eta, *wa * lit::<T>(wr), wq));
            }
        }
        Ok(FrameRule { n: cst.n, n_r, n_phi, n_angle, c0: cst.c0, q: cst.q, unit })
    }

    pub fn default_for(cst: &Constants<T>) -> Result<Self> {
        match cst.n {
            1 => Self::new(cst, 48, 32, 32),
            2 => Self::new(cst, 32, 16, 8),
            _ => Self::new(cst, 24, 8, 4),
        }
    }

    /// Roughly half the nodes per direction (error estimates).
    pub fn coarse(&self, cst: &Constants<T>) -> Result<Self> {
        Self::new(cst, (self.n_r * 2 / 3).max(2), (self.n_phi * 2 / 3).max(2), (self.n_angle * 2 / 3).max(2))
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }

    /// Unit-amplitude `w_{a,λ}(ξ)^{Q*} = λ^Q c0^{Q*} D(η)^{−Q/2}`.
    pub fn unit_bubble_power(&self, f: &Frame<T>, p: &HPoint<T>) -> T {
        let eta = dilate_unchecked(f.scale, &compose(&inverse(&f.center), p));
        let s = T::one() + eta.z_norm2();
        let d = eta.t * eta.t + s * s;
        let two = lit::<T>(2.0);
        f.scale.powf(self.q) * self.c0.powf(two * self.q / (self.q - two)) * d.powf(-self.q / two)
    }

    /// Nodes with `Σ G(p_k) w_k ≈ ∫ G w^{Q*}` for the unit bubble of `f`.
    pub fn weighted_nodes(&self, f: &Frame<T>) -> Nodes<T> {
        let points = self.unit.iter().map(|(eta, _, _)| f.to_physical(eta)).collect();
        let weights = self.unit.iter().map(|(_, w, wq)| *w * *wq).collect();
        Nodes { points, weights }
    }

    /// Nodes with `Σ F(p_k) w_k ≈ ∫ F` for `F` concentrated near frame `f`.
    pub fn single_nodes(&self, f: &Frame<T>) -> Nodes<T> {
        let lq = f.scale.powf(-self.q);
        let points = self.unit.iter().map(|(eta, _, _)| f.to_physical(eta)).collect();
        let weights = self.unit.iter().map(|(_, w, _)| *w * lq).collect();
        Nodes { points, weights }
    }

    /// Nodes with `Σ F(p_k) w_k ≈ ∫ F` over `H^n`, shared among `frames`
    /// through the partition `w_i^{Q*} / Σ_j w_j^{Q*}`.
    pub fn partition_nodes(&self, frames: &[Frame<T>]) -> Nodes<T> {
        let mut out = Nodes { points: Vec::with_capacity(frames.len() * self.len()), weights: Vec::new() };
        for (i, f) in frames.iter().enumerate() {
            let lq = f.scale.powf(self.q);
            let pts: Vec<HPoint<T>> = self.unit.iter().map(|(eta, _, _)| f.to_physical(eta)).collect();
            let ws: Vec<T> = pts
                .par_iter()
                .zip(self.unit.par_iter())
                .map(|(p, (_, w, wq))| {
                    let own = lq * *wq;
                    let mut total = T::zero();
                    for (j, g) in frames.iter().enumerate() {
                        total += if j == i { own } else { self.unit_bubble_power(g, p) };
                    }
                    *w / lq * (own / total)
                })
                .collect();
            out.points.extend(pts);
            out.weights.extend(ws);
        }
        out
    }

    /// `∫ F` with [`FrameRule::partition_nodes`].
    pub fn integrate<F: ScalarField<T> + ?Sized>(&self, f: &F, frames: &[Frame<T>]) -> T {
        self.partition_nodes(frames).integrate(|p| f.value(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::bubble;

    #[test]
    fn bubble_mass_in_its_own_frame() {
        let cst = Constants::<f64>::new(1).unwrap();
        let rule = FrameRule::new(&cst, 48, 32, 32).unwrap();
        let f = Frame::new(HPoint::xyt(0.3, -1.0, 2.0), 1.7);
        let w = bubble(BumpParams::new(1.0, f.center.clone(), f.scale).unwrap(), &cst);
        let m = rule.single_nodes(&f).integrate(|p| w.value(p).powi(4));
        assert!((m / (4.0 * std::f64::consts::PI.powi(2)) - 1.0).abs() < 1e-8, "{m}");
        let one = rule.weighted_nodes(&f).integrate(|_| 1.0);
        assert!((one - m).abs() < 1e-9);
    }

    #[test]
    fn separated_interaction_converges() {
        let cst = Constants::<f64>::new(1).unwrap();
        let frames = vec![Frame::new(HPoint::xyt(-5.0, 0.0, 0.0), 1.0), Frame::new(HPoint::xyt(5.0, 0.0, 0.0), 1.5)];
        let w: Vec<_> = frames
            .iter()
            .map(|f| bubble(BumpParams::new(1.0, f.center.clone(), f.scale).unwrap(), &cst))
            .collect();
        let f = |p: &HPoint<f64>| w[0].value(p).powi(3) * w[1].value(p);
        let fine = FrameRule::new(&cst, 64, 48, 48).unwrap().partition_nodes(&frames).integrate(f);
        let default = FrameRule::default_for(&cst).unwrap().partition_nodes(&frames).integrate(f);
        assert!((default / fine - 1.0).abs() < 2e-5, "{default} {fine}");
    }
}
