//! Constraint functions `h(π) = 0` for the likelihood fitter.
//!
//! Every constraint is homogeneous in π (degree 0 or 1), so the fitter can
//! work with unnormalised weights and rescale freely.

use nalgebra::{DMatrix, DVector};

use crate::design::DesignSystem;
use crate::error::{Error, Result};
use crate::fdiv::FFunction;
use crate::moments::{self, MomentModel, ScoreGrid};
use crate::table::{Orbits, TableShape};

/// A smooth vector constraint with first and second derivatives.
pub trait Constraint: Send + Sync {
    fn dim(&self) -> usize;

    /// Values `h(π)` and Jacobian `∂h/∂π` (rows are constraints).
    fn eval(&self, pi: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>;

    /// `Σ_k w_k ∇²h_k(π)`.
    fn weighted_hessian(&self, pi: &[f64], w: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// `h(π) = Aπ`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub a: DMatrix<f64>,
}

impl Constraint for LinearConstraint {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval(&self, pi: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((&self.a * DVector::from_row_slice(pi), self.a.clone()))
    }

    fn weighted_hessian(&self, pi: &[f64], _w: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(pi.len(), pi.len()))
    }
}

/// Equal probabilities within every orbit: `π_i - π_j = 0` for consecutive
/// members of each orbit.
pub fn symmetry_constraint(shape: &TableShape) -> LinearConstraint {
    let orbits = Orbits::new(shape);
    let mut rows = Vec::new();
    for members in orbits.iter() {
        for pair in members.windows(2) {
            let mut row = DVector::zeros(shape.n_cells());
            row[pair[0]] = 1.0;
            row[pair[1]] = -1.0;
            rows.push(row.transpose());
        }
    }
    LinearConstraint {
        a: if rows.is_empty() {
            DMatrix::zeros(0, shape.n_cells())
        } else {
            DMatrix::from_rows(&rows)
        },
    }
}

/// Variance or correlation equality; second derivatives by central
/// differences of the analytic Jacobian.
pub struct MomentConstraint {
    model: MomentModel,
    shape: TableShape,
    grid: ScoreGrid,
}

impl MomentConstraint {
    pub fn new(model: MomentModel, shape: &TableShape) -> Self {
        MomentConstraint {
            model,
            shape: shape.clone(),
            grid: ScoreGrid::new(shape),
        }
    }
}

impl Constraint for MomentConstraint {
    fn dim(&self) -> usize {
        self.model.dim(self.shape.t())
    }

    fn eval(&self, pi: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        moments::constraint_with_jacobian(self.model, &self.shape, &self.grid, pi)
    }

    fn weighted_hessian(&self, pi: &[f64], w: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = pi.len();
        let total: f64 = pi.iter().sum();
        let mut hess = DMatrix::zeros(n, n);
        let mut x = pi.to_vec();
        for j in 0..n {
            let step = 1e-5 * pi[j].max(1e-3 * total / n as f64);
            x[j] = pi[j] + step;
            let (_, jp) = self.eval(&x)?;
            x[j] = pi[j] - step;
            let (_, jm) = self.eval(&x)?;
            x[j] = pi[j];
            let col = (jp.transpose() * w - jm.transpose() * w) / (2.0 * step);
            hess.set_column(j, &col);
        }
        // symmetrise away the finite-difference noise
        Ok((&hess + hess.transpose()) * 0.5)
    }
}

/// `h(π) = Uᵀ F(π / π^S)`, the linear-form constraint of an asymmetry family.
pub struct LinkConstraint {
    ff: FFunction,
    orbits: Orbits,
    u: DMatrix<f64>,
}

impl LinkConstraint {
    pub fn new(ds: &DesignSystem, ff: FFunction) -> Self {
        LinkConstraint {
            ff,
            orbits: Orbits::new(&ds.shape),
            u: ds.u.clone(),
        }
    }

    pub fn from_parts(orbits: Orbits, u: DMatrix<f64>, ff: FFunction) -> Self {
        LinkConstraint { ff, orbits, u }
    }

    /// Ratios `r_i = π_i / π^S_i` and orbit totals.
    fn ratios(&self, pi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let sums = self.orbits.sums(pi);
        let mut r = vec![0.0; pi.len()];
        for (o, members) in self.orbits.iter().enumerate() {
            if !(sums[o] > 0.0) {
                return Err(Error::DegenerateOrbit {
                    representative: self.orbits.representative(o).coords().to_vec(),
                });
            }
            let k = members.len() as f64;
            for &i in members {
                r[i] = k * pi[i] / sums[o];
            }
        }
        Ok((r, sums))
    }

    /// Jacobian of the cellwise map `π ↦ F(π/π^S)`.
    pub fn link_jacobian(&self, pi: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (r, sums) = self.ratios(pi)?;
        let n = pi.len();
        let mut jac = DMatrix::zeros(n, n);
        let mut link = vec![0.0; n];
        for (o, members) in self.orbits.iter().enumerate() {
            let k = members.len() as f64;
            let s = sums[o];
            for &i in members {
                let d2 = self.ff.f_second(r[i]);
                link[i] = self.ff.link(r[i]);
                for &j in members {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    jac[(i, j)] = d2 * k * (delta / s - pi[i] / (s * s));
                }
            }
        }
        Ok((link, jac))
    }
}

impl Constraint for LinkConstraint {
    fn dim(&self) -> usize {
        self.u.ncols()
    }

    fn eval(&self, pi: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (link, jac) = self.link_jacobian(pi)?;
        if link.iter().any(|v| !v.is_finite()) {
            return Err(Error::Positivity {
                iteration: 0,
                detail: "link evaluated outside its domain".into(),
            });
        }
        let ut = self.u.transpose();
        Ok((&ut * DVector::from_vec(link), ut * jac))
    }

    fn weighted_hessian(&self, pi: &[f64], w: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (r, sums) = self.ratios(pi)?;
        let cell_w = &self.u * w;
        let n = pi.len();
        let mut hess = DMatrix::zeros(n, n);
        for (o, members) in self.orbits.iter().enumerate() {
            let k = members.len() as f64;
            let s = sums[o];
            for &i in members {
                let wi = cell_w[i];
                if wi == 0.0 {
                    continue;
                }
                let f2 = self.ff.f_second(r[i]);
                let f3 = self.ff.f_third(r[i]);
                let grad = |j: usize| k * (if i == j { 1.0 } else { 0.0 } / s - pi[i] / (s * s));
                for &j in members {
                    for &l in members {
                        let second = k
                            * (-(if i == j { 1.0 } else { 0.0 }) / (s * s)
                                - (if i == l { 1.0 } else { 0.0 }) / (s * s)
                                + 2.0 * pi[i] / (s * s * s));
                        hess[(j, l)] += wi * (f3 * grad(j) * grad(l) + f2 * second);
                    }
                }
            }
        }
        Ok(hess)
    }
}
