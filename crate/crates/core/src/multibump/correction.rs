//! Grid correction `v` for full-grid mode.
//!
//! One box per bump, in the bump's left-translated frame. On each box `v` is
//! trilinear (`Q1`, zero on the boundary), the Dirichlet term uses 2-point
//! Gauss integration per cell and the potential uses lumped nodal weights.
//! `v` minimizes `I(U + v) − I(U)` subject to `⟨v, ∂U⟩ = 0` for the
//! amplitude and frame directions of the owning bump, by preconditioned
//! nonlinear CG. Boxes are treated independently.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use crate::bubbles::{Bubble, BumpParams, Constants};
use crate::field::ScalarField;
use crate::fields::{pairwise_sum, GridField, GridSpec};
use crate::functional::SubcriticalExponent;
use crate::group::HPoint;
use crate::linalg::solve_symmetric;
use crate::multibump::flow::{Point, TraceRow};
use crate::multibump::reduced::frame_jet;
use crate::multibump::{correction_spec, FlowConfig, RSpec};
use crate::{lit, to_f64, Result, Scalar};

/// Largest CG step as a fraction of `max |U|`.
const MAX_STEP: f64 = 0.05;

/// Discretized problem on one box.
pub(crate) struct Problem {
    d: usize,
    counts: Vec<usize>,
    h: Vec<f64>,
    lo: Vec<f64>,
    /// Lumped nodal weights (zero on the boundary).
    omega: Vec<f64>,
    free: Vec<bool>,
    u: Vec<f64>,
    reff: Vec<f64>,
    /// `−Δ_H U`.
    f: Vec<f64>,
    p: f64,
    /// Constraint kernels `−Δ_H ∂U`: amplitude, then the frame steps.
    kernels: Vec<Vec<f64>>,
    /// Reference gradients of the `2^d` corner basis functions at the `2^d`
    /// Gauss points, and the Gauss offsets (in cell units).
    basis: Vec<Vec<[f64; 16]>>,
    gauss: Vec<Vec<f64>>,
    corners: Vec<usize>,
}

impl Problem {
    pub fn new<T: Scalar>(
        spec: &GridSpec<T>,
        owner: usize,
        bumps: &[BumpParams<T>],
        cst: &Constants<T>,
        r: &RSpec<T>,
        exp: &SubcriticalExponent<T>,
    ) -> Self {
        let d = spec.dim();
        let counts = spec.counts().to_vec();
        let h: Vec<f64> = spec.spacing.iter().map(|v| to_f64(*v)).collect();
        let lo: Vec<f64> = spec.lo.iter().map(|v| to_f64(*v)).collect();
        let p0 = to_f64(cst.critical_power());
        let np = 2 * cst.n + 2;
        let bubbles: Vec<Bubble<T>> = bumps
            .iter()
            .map(|b| Bubble::new(BumpParams { alpha: T::one(), center: b.center.clone(), scale: b.scale }, cst))
            .collect();
        let alpha: Vec<f64> = bumps.iter().map(|b| to_f64(b.alpha)).collect();
        let len = spec.len();
        let mut omega = vec![0.0; len];
        let mut free = vec![false; len];
        let mut u = vec![0.0; len];
        let mut reff = vec![0.0; len];
        let mut f = vec![0.0; len];
        let mut kernels = vec![vec![0.0; len]; np + 1];
        let vol: f64 = h.iter().product();
        let mut buf = vec![T::zero(); d];
        let mut jet = vec![T::zero(); np];
        for idx in 0..len {
            let mut rem = idx;
            let mut interior = true;
            for &c in &counts {
                let i = rem % c;
                rem /= c;
                interior &= i > 0 && i + 1 < c;
            }
            spec.local_coords(idx, &mut buf);
            let x = spec.to_physical(&HPoint::from_coords(&buf));
            let mut uu = 0.0;
            let mut ff = 0.0;
            for (j, b) in bubbles.iter().enumerate() {
                let w = to_f64(b.value(&x));
                uu += alpha[j] * w;
                ff += alpha[j] * w.powf(p0);
            }
            u[idx] = uu;
            f[idx] = ff;
            reff[idx] = to_f64(exp.weight(r, &x));
            if interior {
                free[idx] = true;
                omega[idx] = vol;
                let w = to_f64(frame_jet(&bubbles[owner], &x, &mut jet));
                kernels[0][idx] = w.powf(p0);
                let c = alpha[owner] * p0 * w.powf(p0 - 1.0);
                for m in 0..np {
                    kernels[m + 1][idx] = c * to_f64(jet[m]);
                }
            }
        }

        let nc = 1usize << d;
        let g = 1.0 / 3f64.sqrt();
        let gauss: Vec<Vec<f64>> =
            (0..nc).map(|q| (0..d).map(|k| if (q >> k) & 1 == 1 { 0.5 + 0.5 * g } else { 0.5 - 0.5 * g }).collect()).collect();
        let basis = gauss
            .iter()
            .map(|gp| {
                (0..nc)
                    .map(|c| {
                        let mut out = [0.0; 16];
                        for k in 0..d {
                            let mut v = 1.0;
                            for l in 0..d {
                                let bit = (c >> l) & 1 == 1;
                                if l == k {
                                    v *= if bit { 1.0 } else { -1.0 } / h[k];
                                } else {
                                    v *= if bit { gp[l] } else { 1.0 - gp[l] };
                                }
                            }
                            out[k] = v;
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        let mut stride = vec![1usize; d];
        for k in 1..d {
            stride[k] = stride[k - 1] * counts[k - 1];
        }
        let corners = (0..nc).map(|c| (0..d).map(|k| ((c >> k) & 1) * stride[k]).sum()).collect();
        Problem { d, counts, h, lo, omega, free, u, reff, f, p: to_f64(exp.p), kernels, basis, gauss, corners }
    }

    fn prim(&self, u: f64) -> f64 {
        u.abs().powf(self.p + 1.0) / (self.p + 1.0)
    }

    /// Cell lower corners (linear indices) and cell-center local coordinates
    /// are generated on the fly.
    fn for_cells<F: FnMut(usize, &[f64])>(&self, mut f: F) {
        let d = self.d;
        let cells: Vec<usize> = self.counts.iter().map(|c| c - 1).collect();
        let total: usize = cells.iter().product();
        let mut lo = vec![0.0; d];
        for c in 0..total {
            let mut rem = c;
            let mut idx = 0;
            let mut stride = 1;
            for k in 0..d {
                let i = rem % cells[k];
                rem /= cells[k];
                idx += i * stride;
                stride *= self.counts[k];
                lo[k] = self.lo[k] + i as f64 * self.h[k];
            }
            f(idx, &lo);
        }
    }

    /// `A(z) g` for the horizontal metric in local coordinates.
    fn metric(&self, z: &[f64], g: &[f64], out: &mut [f64]) {
        let n = (self.d - 1) / 2;
        let gt = g[2 * n];
        out[2 * n] = 0.0;
        for j in 0..n {
            let (x, y) = (z[j], z[n + j]);
            let xv = g[j] + 2.0 * y * gt;
            let yv = g[n + j] - 2.0 * x * gt;
            out[j] = xv;
            out[n + j] = yv;
            out[2 * n] += 2.0 * y * xv - 2.0 * x * yv;
        }
    }

    /// `½ a(v,v)` by 2-point Gauss per cell; adds `a(v,·)` to `grad` when
    /// it is non-empty.
    fn kinetic(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.d;
        let wq = self.h.iter().product::<f64>() / self.gauss.len() as f64;
        let mut kin = Vec::new();
        let mut z = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut s = vec![0.0; d];
        self.for_cells(|base, lo| {
            let mut e = 0.0;
            for (q, gp) in self.gauss.iter().enumerate() {
                g.iter_mut().for_each(|x| *x = 0.0);
                for (c, off) in self.corners.iter().enumerate() {
                    let vc = v[base + off];
                    if vc != 0.0 {
                        for k in 0..d {
                            g[k] += vc * self.basis[q][c][k];
                        }
                    }
                }
                for k in 0..d {
                    z[k] = lo[k] + gp[k] * self.h[k];
                }
                self.metric(&z, &g, &mut s);
                e += 0.5 * wq * (0..d).map(|k| s[k] * g[k]).sum::<f64>();
                if !grad.is_empty() {
                    for (c, off) in self.corners.iter().enumerate() {
                        let dot: f64 = (0..d).map(|k| s[k] * self.basis[q][c][k]).sum();
                        grad[base + off] += wq * dot;
                    }
                }
            }
            kin.push(e);
        });
        pairwise_sum(&kin)
    }

    /// `(E(v), ∇E(v))` with `E = ½ a(v,v) + Σω f v − Σω R(F(U+v) − F(U))`.
    pub fn energy_gradient(&self, v: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; if want_grad { v.len() } else { 0 }];
        let kin = self.kinetic(v, &mut grad);
        let mut pot = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            if !self.free[i] {
                if want_grad {
                    grad[i] = 0.0;
                }
                continue;
            }
            let om = self.omega[i];
            let w = self.u[i] + v[i];
            pot.push(om * (self.f[i] * v[i] - self.reff[i] * (self.prim(w) - self.prim(self.u[i]))));
            if want_grad {
                grad[i] += om * (self.f[i] - self.reff[i] * w.abs().powf(self.p) * w.signum());
            }
        }
        (kin + pairwise_sum(&pot), grad)
    }

    /// Diagonal of the stiffness plus `ω |R| p |U|^{p−1}`.
    fn preconditioner(&self) -> Vec<f64> {
        let d = self.d;
        let wq = self.h.iter().product::<f64>() / self.gauss.len() as f64;
        let mut diag = vec![0.0; self.u.len()];
        let mut z = vec![0.0; d];
        let mut s = vec![0.0; d];
        self.for_cells(|base, lo| {
            for (q, gp) in self.gauss.iter().enumerate() {
                for k in 0..d {
                    z[k] = lo[k] + gp[k] * self.h[k];
                }
                for (c, off) in self.corners.iter().enumerate() {
                    let b = &self.basis[q][c][..d];
                    self.metric(&z, b, &mut s);
                    diag[base + off] += wq * (0..d).map(|k| s[k] * b[k]).sum::<f64>();
                }
            }
        });
        for i in 0..diag.len() {
            diag[i] = if self.free[i] {
                diag[i] + self.omega[i] * self.reff[i].abs() * self.p * self.u[i].abs().powf(self.p - 1.0)
            } else {
                1.0
            };
        }
        diag
    }

    fn constraint_rows(&self) -> Vec<Vec<f64>> {
        self.kernels
            .iter()
            .map(|k| k.iter().zip(&self.omega).map(|(a, b)| a * b).collect())
            .filter(|row: &Vec<f64>| row.iter().any(|x| *x != 0.0))
            .collect()
    }

    /// `P⁻¹ g` projected onto `{C x = 0}` in the `P` metric.
    fn project(&self, rows: &[Vec<f64>], pinv: &[f64], gram: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = g.iter().zip(pinv).map(|(a, b)| a * b).collect();
        if rows.is_empty() {
            return y;
        }
        let cy = DVector::from_iterator(rows.len(), rows.iter().map(|r| dot(r, &y)));
        if let Some(mu) = solve_symmetric(gram, &cy, 1e-13) {
            for (m, r) in rows.iter().enumerate() {
                for i in 0..y.len() {
                    y[i] -= mu[m] * pinv[i] * r[i];
                }
            }
        }
        y
    }

    /// Runs at most `steps` CG iterations; calls `report(energy, grad_norm)`
    /// after each.
    pub fn solve<F: FnMut(f64, f64)>(&self, steps: usize, tol: f64, mut report: F) -> Vec<f64> {
        let len = self.u.len();
        let rows = self.constraint_rows();
        let pc = self.preconditioner();
        let pinv: Vec<f64> = pc.iter().map(|p| if *p > 0.0 { 1.0 / p } else { 0.0 }).collect();
        let nr = rows.len();
        let gram = DMatrix::from_fn(nr, nr, |a, b| (0..len).map(|i| rows[a][i] * pinv[i] * rows[b][i]).sum());
        let umax = self.u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut v = vec![0.0; len];
        let (mut e, mut g) = self.energy_gradient(&v, true);
        let mut z = self.project(&rows, &pinv, &gram, &g);
        let mut gz = dot(&g, &z);
        let mut dir: Vec<f64> = z.iter().map(|x| -x).collect();
        for _ in 0..steps {
            if gz.max(0.0).sqrt() < tol {
                break;
            }
            let mut slope = dot(&g, &dir);
            if slope >= 0.0 {
                dir = z.iter().map(|x| -x).collect();
                slope = -gz;
            }
            // Secant estimate of the curvature along `dir`.
            let eps = 1e-6 / dir.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            let probe: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
            let (_, gp) = self.energy_gradient(&probe, true);
            let curv = (dot(&gp, &dir) - slope) / eps;
            // E is unbounded below away from U: keep steps small against it.
            let dmax = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let tmax = MAX_STEP * umax / dmax.max(1e-300);
            // Negative curvature: the grid does not resolve the constrained
            // minimum; keep the current iterate.
            if !(curv > 0.0) {
                break;
            }
            let mut t = (-slope / curv).min(tmax);
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                let (et, _) = self.energy_gradient(&trial, false);
                if et.is_finite() && et <= e + 1e-4 * t * slope {
                    accepted = Some((trial, et));
                    break;
                }
                t *= 0.5;
            }
            let Some((nv, ne)) = accepted else { break };
            v = nv;
            e = ne;
            let (_, ng) = self.energy_gradient(&v, true);
            let nz = self.project(&rows, &pinv, &gram, &ng);
            let ngz = dot(&ng, &nz);
            let beta = ((ngz - dot(&ng, &z)) / gz).max(0.0);
            dir = nz.iter().zip(&dir).map(|(a, b)| -a + beta * b).collect();
            g = ng;
            z = nz;
            gz = ngz;
            report(e, gz.max(0.0).sqrt());
        }
        v
    }

    /// Constraint values `⟨v, ∂U⟩` scaled by the kernel norms.
    #[cfg(test)]
    pub fn orthogonality(&self, v: &[f64]) -> f64 {
        self.kernels
            .iter()
            .map(|k| {
                let kw: Vec<f64> = k.iter().zip(&self.omega).map(|(a, b)| a * b).collect();
                let nk = dot(&kw, k).sqrt();
                if nk > 0.0 {
                    dot(&kw, v).abs() / nk
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Corrections for every bump of an accepted parameter-phase point. Returns
/// the grids and one trace row per CG iteration, numbered from `first`.
pub(crate) fn correct<T: Scalar>(
    point: &Point<T>,
    r: &RSpec<T>,
    exp: &SubcriticalExponent<T>,
    cst: &Constants<T>,
    cfg: &FlowConfig<T>,
    first: usize,
) -> Result<(Vec<Arc<GridField<T>>>, Vec<TraceRow<T>>)> {
    let (a, bt, m) = cfg.correction_grid;
    let tol = to_f64(cfg.gradient_tolerance);
    let mut grids = Vec::with_capacity(point.bumps.len());
    let mut rows = Vec::new();
    let mut base = point.energy;
    for (i, b) in point.bumps.iter().enumerate() {
        let spec = correction_spec(b, a, bt, m)?;
        let prob = Problem::new(&spec, i, &point.bumps, cst, r, exp);
        let mut last = 0.0;
        let v = prob.solve(cfg.correction_steps, tol, |e, gn| {
            last = e;
            rows.push(TraceRow {
                step: first + rows.len(),
                tau: exp.tau,
                energy: lit(base + e),
                grad_norm: lit(gn),
                bumps: point.bumps.clone(),
            });
        });
        base += last;
        grids.push(Arc::new(GridField { spec, data: v.iter().map(|x| lit(*x)).collect() }));
    }
    Ok((grids, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(r0: f64, tau: f64) -> (Problem, Constants<f64>) {
        let cst = Constants::<f64>::new(1).unwrap();
        let exp = SubcriticalExponent::new(tau, &cst).unwrap();
        let b = BumpParams::new(r0.powf(-0.5), HPoint::xyt(0.3, -0.2, 0.1), 1.5).unwrap();
        let spec = correction_spec(&b, 3.0, 6.0, 33).unwrap();
        (Problem::new(&spec, 0, &[b], &cst, &RSpec::constant(1, r0), &exp), cst)
    }

    #[test]
    fn gradient_matches_differences() {
        let (prob, _) = setup(1.0, 0.05);
        let mut v: Vec<f64> = (0..prob.u.len()).map(|i| if prob.free[i] { ((i * 7919) % 13) as f64 * 1e-3 } else { 0.0 }).collect();
        let (_, g) = prob.energy_gradient(&v, true);
        for &i in &[prob.u.len() / 2, prob.u.len() / 3 + 5] {
            if !prob.free[i] {
                continue;
            }
            let h = 1e-6;
            v[i] += h;
            let ep = prob.energy_gradient(&v, false).0;
            v[i] -= 2.0 * h;
            let em = prob.energy_gradient(&v, false).0;
            v[i] += h;
            let fd = (ep - em) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "{fd} {}", g[i]);
        }
    }

    #[test]
    fn exact_bubble_needs_no_correction() {
        let (prob, _) = setup(2.0, 0.0);
        let (_, g) = prob.energy_gradient(&vec![0.0; prob.u.len()], true);
        let interior_lumped = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        // Only the stiffness of v = 0 vanishes; the residual is f − R U^p = 0.
        assert!(interior_lumped < 1e-12, "{interior_lumped}");
    }

    #[test]
    fn subcritical_correction_lowers_energy_and_stays_orthogonal() {
        let (prob, _) = setup(1.0, 0.05);
        let mut energies = Vec::new();
        let v = prob.solve(60, 1e-9, |e, _| energies.push(e));
        assert!(!energies.is_empty());
        assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(energies[0] < 0.0);
        assert!(*energies.last().unwrap() > -1e-2, "{energies:?}");
        assert!(prob.orthogonality(&v) < 1e-8, "{}", prob.orthogonality(&v));
    }
}
