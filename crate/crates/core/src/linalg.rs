//! Small dense linear-algebra helpers shared by the design, fitting and
//! Wald code. Everything here works on `nalgebra` dynamic matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Numerical rank from the singular values, relative to the largest one.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax * a.nrows().max(a.ncols()) as f64).count()
}

/// Orthonormal basis of the column space of `a`.
pub fn column_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = rank(a);
    if k == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    // nalgebra does not sort singular values, so pick the k largest.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    DMatrix::from_fn(a.nrows(), k, |r, c| u[(r, order[c])])
}

/// Orthonormal basis `U` of the orthogonal complement of span(a), so that
/// `Uᵀ a = 0` and `[basis(a) U]` spans the whole space.
pub fn orthogonal_complement(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let q = column_basis(a);
    let projector = DMatrix::<f64>::identity(n, n) - &q * q.transpose();
    let eig = SymmetricEigen::new(projector);
    let mut cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    cols.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    DMatrix::from_fn(n, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])])
}

/// Moore–Penrose pseudo-inverse with a relative cut-off on singular values.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = RANK_TOL * smax * a.nrows().max(a.ncols()) as f64;
    svd.pseudo_inverse(cut.max(f64::MIN_POSITIVE))
        .expect("cut-off is non-negative")
}

/// Ratio of extreme eigenvalues of a symmetric matrix (infinite if the
/// smallest is not positive).
pub fn sym_condition(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let ev = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Outcome of a guarded symmetric positive-definite solve.
#[derive(Debug, Clone)]
pub struct GuardedSolve {
    pub x: DVector<f64>,
    pub condition: f64,
    pub ridged: bool,
}

/// Solve `a x = b` for symmetric positive (semi)definite `a`.
///
/// When the eigenvalue condition number exceeds `max_condition` a ridge of
/// `1e-10 · max(1, max diag)` is added and the result is flagged. If the
/// ridged matrix still cannot be factorised the call fails.
pub fn solve_spd_guarded(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_condition: f64,
) -> Result<GuardedSolve> {
    let condition = sym_condition(a);
    let mut m = a.clone();
    let mut ridged = false;
    if !(condition <= max_condition) {
        let dmax = m.diagonal().iter().cloned().fold(1.0, f64::max);
        for i in 0..m.nrows() {
            m[(i, i)] += 1e-10 * dmax;
        }
        ridged = true;
    }
    let chol = m.cholesky().ok_or(Error::Singular { condition })?;
    Ok(GuardedSolve {
        x: chol.solve(b),
        condition,
        ridged,
    })
}
