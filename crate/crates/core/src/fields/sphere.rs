//! Product rules on `[-1,1]` and on the unit spheres `S^{2m−1} ⊂ C^m`.

use num_complex::Complex;

use crate::{lit, Scalar};

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_m`).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// A quadrature rule on the unit sphere `S^{2m−1} ⊂ C^m`.
///
/// Moduli `|ζ_j|` come from hyperspherical angles on the positive orthant of
/// `S^{m−1}` (Gauss–Legendre in each angle), phases from the trapezoid rule.
/// The weights sum to `|S^{2m−1}| = 2π^m/(m−1)!`.
#[derive(Clone, Debug)]
pub struct SphereRule<T: Scalar> {
    pub m: usize,
    pub nodes: Vec<Vec<Complex<T>>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> SphereRule<T> {
    pub fn new(m: usize, n_angle: usize, n_phase: usize) -> Self {
        assert!(m >= 1 && n_phase >= 1);
        let (gx, gw) = gauss_legendre(n_angle.max(1));
        let half_pi = std::f64::consts::FRAC_PI_2;
        // Orthant nodes: (moduli, weight).
        let mut orth: Vec<(Vec<f64>, f64)> = vec![(vec![], 1.0)];
        if m == 1 {
            orth = vec![(vec![1.0], 1.0)];
        } else {
            for level in 0..m - 1 {
                let mut next = Vec::new();
                for (prefix, w) in &orth {
                    for (a, b) in gx.iter().zip(&gw) {
                        let chi = half_pi * (a + 1.0) / 2.0;
                        let wchi = b * half_pi / 2.0;
                        // sin^{m−2−level} χ from the hyperspherical element.
                        let jac = chi.sin().powi((m - 2 - level) as i32);
                        let mut p = prefix.clone();
                        p.push(chi);
                        next.push((p, w * wchi * jac));
                    }
                }
                orth = next;
            }
            orth = orth
                .into_iter()
                .map(|(chis, w)| {
                    let mut r = Vec::with_capacity(m);
                    let mut s = 1.0;
                    for c in &chis {
                        r.push(s * c.cos());
                        s *= c.sin();
                    }
                    r.push(s);
                    let prod: f64 = r.iter().product();
                    (r, w * prod)
                })
                .collect();
        }
        let dphi = 2.0 * std::f64::consts::PI / n_phase as f64;
        let total_phase = n_phase.pow(m as u32);
        let mut nodes = Vec::with_capacity(orth.len() * total_phase);
        let mut weights = Vec::with_capacity(orth.len() * total_phase);
        for (r, w) in &orth {
            for idx in 0..total_phase {
                let mut k = idx;
                let mut z = Vec::with_capacity(m);
                for rj in r {
                    let ph = (k % n_phase) as f64 * dphi;
                    k /= n_phase;
                    z.push(Complex::new(lit::<T>(rj * ph.cos()), lit::<T>(rj * ph.sin())));
                }
                nodes.push(z);
                weights.push(lit::<T>(w * dphi.powi(m as i32)));
            }
        }
        SphereRule { m, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `|S^{2m−1}|`.
    pub fn area(m: usize) -> f64 {
        let fact: f64 = (1..m).map(|k| k as f64).product();
        2.0 * std::f64::consts::PI.powi(m as i32) / fact
    }
}
