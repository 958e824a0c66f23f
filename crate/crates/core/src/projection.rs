//! Direct f-divergence projection onto the moment-matched set.
//!
//! Given an interior target table, find the distribution closest to complete
//! symmetry in `D_f` that keeps the target's orbit sums, marginal means and
//! raw second moments. Stationarity gives
//! `π_i = q_i F^-1(m_iᵀλ + γ_o)` with `q` the orbit average of the target,
//! so the search runs over the moment multipliers `λ` only. Each orbit
//! constant `γ_o` is recovered from a scalar monotone equation.

use nalgebra::{DMatrix, DVector};

use crate::design::{moment_matrix, quadratic_predictor};
use crate::error::{Error, Result};
use crate::fdiv::FFunction;
use crate::linalg;
use crate::table::{cell_index, Cell, Orbits, ProbTable, TableShape};

#[derive(Debug, Clone)]
pub struct ProjectionSpec {
    pub target: ProbTable,
    pub ff: FFunction,
    /// Stop once the moment residual is below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ProjectionSpec {
    pub fn new(target: ProbTable, ff: FFunction) -> Result<Self> {
        if !target.is_interior() {
            return Err(Error::InvalidTable(
                "projection target must be strictly positive".into(),
            ));
        }
        Ok(ProjectionSpec {
            target,
            ff,
            tolerance: 1e-12,
            max_iterations: 500,
        })
    }
}

/// Full output of [`iproject_detailed`].
#[derive(Debug, Clone)]
pub struct Projection {
    pub pi: ProbTable,
    pub lambda: DVector<f64>,
    /// One constant per orbit, in orbit order.
    pub gamma: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solve `sum_j F^-1(eta_j + γ) = k` for γ, where `k = eta.len()`.
pub(crate) fn orbit_gamma(eta: &[f64], ff: &FFunction) -> Result<f64> {
    let k = eta.len() as f64;
    let (lo, hi) = ff.inverse_domain();
    let emin = eta.iter().cloned().fold(f64::INFINITY, f64::min);
    let emax = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if emin == emax {
        // every term is F^-1(0) = 1
        return Ok(-emin);
    }
    let glo = lo - emin;
    let ghi = hi - emax;
    if !(glo < ghi) {
        return Err(Error::Infeasible(format!(
            "predictor spread {:.3e} exceeds the inverse-link domain",
            emax - emin
        )));
    }
    let phi = |g: f64| eta.iter().map(|&e| ff.link_inv_unchecked(e + g)).sum::<f64>() - k;

    // Lower end: either the finite domain edge or an expanding search.
    let mut a = if glo.is_finite() {
        glo
    } else if ghi.is_finite() {
        ghi - 1.0
    } else {
        -eta.iter().sum::<f64>() / k
    };
    if glo.is_finite() {
        if phi(a) >= 0.0 {
            return Err(Error::Infeasible(
                "orbit mass cannot be matched with positive cells".into(),
            ));
        }
    } else {
        let mut step = 1.0;
        while phi(a) >= 0.0 {
            a -= step;
            step *= 2.0;
            if !a.is_finite() {
                return Err(Error::Infeasible("no lower bracket for γ".into()));
            }
        }
    }
    // Upper end: approach a finite edge from inside, or expand outward.
    let mut b;
    if ghi.is_finite() {
        let mut gap = (ghi - a).min(1.0) / 2.0;
        b = ghi - gap;
        while !(phi(b) > 0.0) {
            gap /= 2.0;
            b = ghi - gap;
            if gap < 1e-300 {
                return Err(Error::Infeasible("no upper bracket for γ".into()));
            }
        }
    } else {
        let mut step = 1.0;
        b = a + step;
        while phi(b) <= 0.0 {
            step *= 2.0;
            b = a + step;
            if !b.is_finite() {
                return Err(Error::Infeasible("no upper bracket for γ".into()));
            }
        }
    }

    while b - a > 1e-12 * (1.0 + a.abs().max(b.abs())) {
        let mid = 0.5 * (a + b);
        if phi(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    // Newton polish, kept inside the final bracket.
    let mut g = 0.5 * (a + b);
    for _ in 0..3 {
        let v = phi(g);
        let d: f64 = eta.iter().map(|&e| ff.link_inv_deriv_unchecked(e + g)).sum();
        if d <= 0.0 || !d.is_finite() {
            break;
        }
        let next = g - v / d;
        if next <= a || next >= b || !next.is_finite() {
            break;
        }
        g = next;
    }
    Ok(g)
}

/// Orbit constant γ for the predictor `u'α + u'Bu` on the cells of one orbit.
pub fn normalize_gamma(
    shape: &TableShape,
    orbit: &[Cell],
    alpha: &DVector<f64>,
    b: &DMatrix<f64>,
    ff: &FFunction,
) -> Result<f64> {
    let eta: Vec<f64> = orbit
        .iter()
        .map(|c| {
            let u = DVector::from_iterator(shape.t(), c.coords().iter().map(|&x| shape.score(x)));
            u.dot(alpha) + (u.transpose() * b * &u)[(0, 0)]
        })
        .collect();
    orbit_gamma(&eta, ff)
}

/// Evaluate the model form: `π_i = q_i F^-1(η_i + γ_o)`, with γ chosen so
/// every orbit keeps the mass of `q`. Returns the table and the γ values.
pub(crate) fn forward(
    orbits: &Orbits,
    q: &[f64],
    eta: &[f64],
    ff: &FFunction,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pi = vec![0.0; q.len()];
    let mut gammas = Vec::with_capacity(orbits.len());
    for members in orbits.iter() {
        let e: Vec<f64> = members.iter().map(|&i| eta[i]).collect();
        let g = orbit_gamma(&e, ff)?;
        for &i in members {
            pi[i] = q[i] * ff.link_inv_unchecked(eta[i] + g);
        }
        gammas.push(g);
    }
    Ok((pi, gammas))
}

/// A GS[f] distribution from `(α, B)` and a symmetric reference table.
pub fn gs_forward(
    reference: &ProbTable,
    alpha: &DVector<f64>,
    b: &DMatrix<f64>,
    ff: &FFunction,
) -> Result<ProbTable> {
    let shape = reference.shape();
    let orbits = Orbits::new(shape);
    let q = orbits.symmetrize(reference.probs());
    let eta = quadratic_predictor(shape, alpha, b);
    let (pi, _) = forward(&orbits, &q, &eta, ff)?;
    ProbTable::from_weights(shape.clone(), pi)
}

struct DualPoint {
    pi: Vec<f64>,
    gamma: Vec<f64>,
    residual: DVector<f64>,
    value: f64,
}

fn dual_point(
    orbits: &Orbits,
    m: &DMatrix<f64>,
    q: &[f64],
    c: &DVector<f64>,
    ff: &FFunction,
    lambda: &DVector<f64>,
) -> Result<DualPoint> {
    let eta = m.transpose() * lambda;
    let (pi, gamma) = forward(orbits, q, eta.as_slice(), ff)?;
    let residual = m * DVector::from_row_slice(&pi) - c;
    let div: f64 = pi.iter().zip(q).map(|(&p, &qi)| qi * ff.f(p / qi)).sum();
    let value = div - lambda.dot(&residual);
    Ok(DualPoint {
        pi,
        gamma,
        residual,
        value,
    })
}

/// Newton matrix of the moment residual with respect to λ.
fn dual_hessian(orbits: &Orbits, m: &DMatrix<f64>, q: &[f64], pi: &[f64], ff: &FFunction) -> DMatrix<f64> {
    let d = m.nrows();
    let mut j = DMatrix::zeros(d, d);
    for members in orbits.iter() {
        let w: Vec<f64> = members.iter().map(|&i| q[i] / ff.f_second(pi[i] / q[i])).collect();
        let wsum: f64 = w.iter().sum();
        let mut mean = DVector::zeros(d);
        for (k, &i) in members.iter().enumerate() {
            mean.axpy(w[k] / wsum, &m.column(i), 1.0);
        }
        for (k, &i) in members.iter().enumerate() {
            let dev = m.column(i) - &mean;
            j.ger(w[k], &dev, &dev, 1.0);
        }
    }
    j
}

/// Project and return multipliers and diagnostics as well as the table.
pub fn iproject_detailed(spec: &ProjectionSpec) -> Result<Projection> {
    let shape = spec.target.shape();
    let orbits = Orbits::new(shape);
    let q = orbits.symmetrize(spec.target.probs());
    let m = moment_matrix(shape);
    let c = &m * DVector::from_row_slice(spec.target.probs());
    let ff = &spec.ff;

    let mut lambda = DVector::zeros(m.nrows());
    let mut cur = dual_point(&orbits, &m, &q, &c, ff, &lambda)?;
    let mut trace = Vec::new();
    for iter in 0..spec.max_iterations {
        let res = cur.residual.amax();
        trace.push(res);
        if res < spec.tolerance {
            return Ok(Projection {
                pi: ProbTable::from_weights(shape.clone(), cur.pi)?,
                lambda,
                gamma: cur.gamma,
                iterations: iter,
                residual: res,
            });
        }
        let j = dual_hessian(&orbits, &m, &q, &cur.pi, ff);
        let newton = -(linalg::pinv(&j) * &cur.residual);
        let gradient = -cur.residual.clone();
        let mut accepted = None;
        for direction in [newton, gradient] {
            // slope of the dual along the direction; the gradient is -r
            let slope = -cur.residual.dot(&direction);
            if !(slope > 0.0) {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..60 {
                let trial = &lambda + &direction * t;
                if let Ok(next) = dual_point(&orbits, &m, &q, &c, ff, &trial) {
                    let armijo = next.value >= cur.value + 1e-4 * t * slope;
                    let smaller = next.residual.amax() < res;
                    if armijo || smaller {
                        accepted = Some((trial, next));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((l, next)) => {
                let step = (&l - &lambda).amax();
                lambda = l;
                cur = next;
                if step < 1e-14 && cur.residual.amax() < 1e-9 {
                    let residual = cur.residual.amax();
                    return Ok(Projection {
                        pi: ProbTable::from_weights(shape.clone(), cur.pi)?,
                        lambda,
                        gamma: cur.gamma,
                        iterations: iter + 1,
                        residual,
                    });
                }
            }
            None => {
                if res < 1e-9 {
                    // Stalled at round-off level; the point is as good as it gets.
                    return Ok(Projection {
                        pi: ProbTable::from_weights(shape.clone(), cur.pi)?,
                        lambda,
                        gamma: cur.gamma,
                        iterations: iter,
                        residual: res,
                    });
                }
                return Err(Error::Positivity {
                    iteration: iter,
                    detail: format!("no admissible dual step, residual {res:.3e}"),
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: spec.max_iterations,
        residual: cur.residual.amax(),
        trace,
    })
}

/// The projected table only.
pub fn iproject(spec: &ProjectionSpec) -> Result<ProbTable> {
    iproject_detailed(spec).map(|p| p.pi)
}

/// Cell predictor η at a given cell, for callers that hold `(α, B)`.
pub fn predictor_at(shape: &TableShape, cell: &Cell, alpha: &DVector<f64>, b: &DMatrix<f64>) -> Result<f64> {
    cell_index(shape, cell)?;
    let u = DVector::from_iterator(shape.t(), cell.coords().iter().map(|&x| shape.score(x)));
    Ok(u.dot(alpha) + (u.transpose() * b * &u)[(0, 0)])
}
