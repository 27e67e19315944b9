//! Small dense solves for the parameter-space iterations (at most a few
//! dozen unknowns), done in `f64`.

use nalgebra::{DMatrix, DVector};

/// Symmetric solve `A x = b`: Cholesky when `A` is positive definite,
/// otherwise an eigenvalue pseudo-inverse dropping `|μ| < rcond · max|μ|`.
pub fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Option<DVector<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    if let Some(ch) = sym.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    pinv_solve(&sym, b, rcond)
}

/// `A⁺ b` for symmetric `A`.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Option<DVector<f64>> {
    let eig = a.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(top > 0.0) || !top.is_finite() {
        return None;
    }
    let c = eig.eigenvectors.transpose() * b;
    let scaled = DVector::from_iterator(
        c.len(),
        c.iter().zip(eig.eigenvalues.iter()).map(|(ci, mu)| if mu.abs() > rcond * top { ci / mu } else { 0.0 }),
    );
    Some(&eig.eigenvectors * scaled)
}

/// Largest and smallest eigenvalues of a symmetric matrix.
pub fn eig_range(a: &DMatrix<f64>) -> (f64, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let e = sym.symmetric_eigen().eigenvalues;
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    (lo, hi)
}

/// `sqrt(bᵀ A⁻¹ b)`; `None` when `A` is singular.
pub fn dual_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<f64> {
    solve_symmetric(a, b, 1e-12).map(|x| b.dot(&x).max(0.0).sqrt())
}
