//! Marginal moments under the score transform and the moment-equality
//! constraints ME, VE, CE and ME₂.
//!
//! The constraint functions take unnormalised weights and divide by their
//! total internally. VE and CE are then homogeneous of degree zero and ME,
//! ME₂ are linear, which is what the constrained fitter expects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{self, pair_chain};
use crate::error::{Error, Result};
use crate::table::{ProbTable, TableShape};

/// Means, variances, correlations and raw mixed moments of the marginals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSet {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub rho: DMatrix<f64>,
    pub mixed: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MomentModel {
    /// Equal marginal means.
    Me,
    /// Equal marginal variances.
    Ve,
    /// Equal pairwise correlations.
    Ce,
    /// Equal means, second moments and mixed moments.
    Me2,
}

impl MomentModel {
    pub fn name(self) -> &'static str {
        match self {
            MomentModel::Me => "ME",
            MomentModel::Ve => "VE",
            MomentModel::Ce => "CE",
            MomentModel::Me2 => "ME2",
        }
    }

    /// Number of constraints for `t` variables.
    pub fn dim(self, t: usize) -> usize {
        match self {
            MomentModel::Me | MomentModel::Ve => t - 1,
            MomentModel::Ce => design::v2_len(t),
            MomentModel::Me2 => (t * t + 3 * t - 6) / 2,
        }
    }
}

/// Scores per variable at every cell; row `h` holds `s_{h+1}`.
pub(crate) struct ScoreGrid {
    pub(crate) s: Vec<Vec<f64>>,
}

impl ScoreGrid {
    pub(crate) fn new(shape: &TableShape) -> Self {
        let s = (1..=shape.t())
            .map(|h| design::score_vector(shape, h).unwrap().as_slice().to_vec())
            .collect();
        ScoreGrid { s }
    }

    fn t(&self) -> usize {
        self.s.len()
    }
}

/// Raw first, second and mixed moments of normalised `w`.
struct Raw {
    total: f64,
    mu: Vec<f64>,
    var: Vec<f64>,
    cov: DMatrix<f64>,
    mixed: DMatrix<f64>,
}

fn raw_moments(g: &ScoreGrid, w: &[f64]) -> Raw {
    let t = g.t();
    let total: f64 = w.iter().sum();
    let mut mu = vec![0.0; t];
    let mut mixed = DMatrix::zeros(t, t);
    for (i, &wi) in w.iter().enumerate() {
        for a in 0..t {
            mu[a] += wi * g.s[a][i];
            for b in a..t {
                mixed[(a, b)] += wi * g.s[a][i] * g.s[b][i];
            }
        }
    }
    for a in 0..t {
        mu[a] /= total;
        for b in a..t {
            mixed[(a, b)] /= total;
            mixed[(b, a)] = mixed[(a, b)];
        }
    }
    let cov = DMatrix::from_fn(t, t, |a, b| mixed[(a, b)] - mu[a] * mu[b]);
    let var = (0..t).map(|a| cov[(a, a)]).collect();
    Raw {
        total,
        mu,
        var,
        cov,
        mixed,
    }
}

/// Marginal moments of a probability table.
pub fn moments(p: &ProbTable) -> Result<MomentSet> {
    let g = ScoreGrid::new(p.shape());
    let raw = raw_moments(&g, p.probs());
    let t = g.t();
    for (a, &v) in raw.var.iter().enumerate() {
        if v <= 0.0 {
            return Err(Error::DegenerateMarginal { variable: a + 1 });
        }
    }
    let rho = DMatrix::from_fn(t, t, |a, b| {
        if a == b {
            1.0
        } else {
            raw.cov[(a, b)] / (raw.var[a] * raw.var[b]).sqrt()
        }
    });
    Ok(MomentSet {
        mu: raw.mu,
        sigma2: raw.var,
        rho,
        mixed: raw.mixed,
    })
}

/// Constraint values and Jacobian for one moment model, evaluated at
/// (possibly unnormalised) weights `w`.
pub(crate) fn constraint_with_jacobian(
    model: MomentModel,
    shape: &TableShape,
    grid: &ScoreGrid,
    w: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let t = shape.t();
    let n = w.len();
    match model {
        MomentModel::Me | MomentModel::Me2 => {
            let m = match model {
                MomentModel::Me => DMatrix::from_fn(t - 1, n, |h, i| grid.s[h][i] - grid.s[h + 1][i]),
                _ => design::moment_matrix(shape),
            };
            let h = &m * DVector::from_row_slice(w);
            Ok((h, m))
        }
        MomentModel::Ve => {
            let raw = raw_moments(grid, w);
            let dvar = variance_gradients(grid, &raw);
            let h = DVector::from_fn(t - 1, |a, _| raw.var[a] - raw.var[a + 1]);
            let jac = DMatrix::from_fn(t - 1, n, |a, i| dvar[a][i] - dvar[a + 1][i]);
            Ok((h, jac))
        }
        MomentModel::Ce => {
            let raw = raw_moments(grid, w);
            for (a, &v) in raw.var.iter().enumerate() {
                if v <= 0.0 {
                    return Err(Error::DegenerateMarginal { variable: a + 1 });
                }
            }
            let dvar = variance_gradients(grid, &raw);
            let chain = pair_chain(t);
            let mut rho = Vec::with_capacity(chain.len());
            let mut drho = Vec::with_capacity(chain.len());
            for &(s, u) in &chain {
                let (a, b) = (s - 1, u - 1);
                let sd = (raw.var[a] * raw.var[b]).sqrt();
                let r = raw.cov[(a, b)] / sd;
                let grad: Vec<f64> = (0..n)
                    .map(|i| {
                        let dc = ((grid.s[a][i] - raw.mu[a]) * (grid.s[b][i] - raw.mu[b])
                            - raw.cov[(a, b)])
                            / raw.total;
                        dc / sd - 0.5 * r * (dvar[a][i] / raw.var[a] + dvar[b][i] / raw.var[b])
                    })
                    .collect();
                rho.push(r);
                drho.push(grad);
            }
            let k = chain.len() - 1;
            let h = DVector::from_fn(k, |j, _| rho[j] - rho[j + 1]);
            let jac = DMatrix::from_fn(k, n, |j, i| drho[j][i] - drho[j + 1][i]);
            Ok((h, jac))
        }
    }
}

fn variance_gradients(grid: &ScoreGrid, raw: &Raw) -> Vec<Vec<f64>> {
    (0..grid.t())
        .map(|a| {
            grid.s[a]
                .iter()
                .map(|&x| ((x - raw.mu[a]).powi(2) - raw.var[a]) / raw.total)
                .collect()
        })
        .collect()
}

/// Constraint vector of a moment model; zero exactly when the model holds.
pub fn constraint_vector(model: MomentModel, p: &ProbTable) -> Result<DVector<f64>> {
    let grid = ScoreGrid::new(p.shape());
    constraint_with_jacobian(model, p.shape(), &grid, p.probs()).map(|(h, _)| h)
}

/// Analytic Jacobian of [`constraint_vector`] with respect to the cell
/// probabilities.
pub fn constraint_jacobian(model: MomentModel, p: &ProbTable) -> Result<DMatrix<f64>> {
    let grid = ScoreGrid::new(p.shape());
    constraint_with_jacobian(model, p.shape(), &grid, p.probs()).map(|(_, j)| j)
}
