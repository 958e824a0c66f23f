//! Constrained multinomial maximum likelihood by sequential quadratic
//! programming in log-probabilities.
//!
//! With `x = ln π` the problem is
//! `min φ(x) = n Σ e^{x_i} - Σ n_i x_i` subject to `h(e^x) = 0`. For
//! homogeneous `h` the optimum has `Σ π = 1`, so no separate normalisation
//! constraint is needed; iterates are rescaled after every accepted step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::constraint::Constraint;
use crate::error::{Error, Result};
use crate::linalg;

/// Tuning knobs for [`solve`].
#[derive(Debug, Clone)]
pub struct HlpOptions {
    pub max_iterations: usize,
    /// Bound on `‖h(π)‖∞`.
    pub constraint_tol: f64,
    /// Bound on the relative change of the log-likelihood.
    pub loglik_tol: f64,
    /// Bound on the stationarity residual divided by `n`.
    pub kkt_tol: f64,
    pub max_halvings: usize,
    /// Retry once from the uniform table when the smoothed start fails.
    pub restart: bool,
}

impl Default for HlpOptions {
    fn default() -> Self {
        HlpOptions {
            max_iterations: 200,
            constraint_tol: 1e-10,
            loglik_tol: 1e-10,
            kkt_tol: 1e-7,
            max_halvings: 30,
            restart: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HlpSolution {
    pub pi: Vec<f64>,
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    pub constraint_residual: f64,
    pub loglik: f64,
}

struct State {
    x: Vec<f64>,
    pi: Vec<f64>,
    h: DVector<f64>,
    jac: DMatrix<f64>,
}

impl State {
    fn at(x: Vec<f64>, c: &dyn Constraint) -> Result<State> {
        let pi: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        if pi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Positivity {
                iteration: 0,
                detail: "probability overflow".into(),
            });
        }
        let (h, jac) = c.eval(&pi)?;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Positivity {
                iteration: 0,
                detail: "constraint is not finite".into(),
            });
        }
        Ok(State { x, pi, h, jac })
    }

    fn normalized(self, c: &dyn Constraint) -> Result<State> {
        let total: f64 = self.pi.iter().sum();
        let shift = total.ln();
        State::at(self.x.iter().map(|v| v - shift).collect(), c)
    }
}

fn objective(n: f64, counts: &[f64], s: &State) -> f64 {
    n * s.pi.iter().sum::<f64>() - counts.iter().zip(&s.x).map(|(c, x)| c * x).sum::<f64>()
}

fn loglik(counts: &[f64], pi: &[f64]) -> f64 {
    counts
        .iter()
        .zip(pi)
        .filter(|(c, _)| **c > 0.0)
        .map(|(c, p)| c * p.ln())
        .sum()
}

fn merit(n: f64, counts: &[f64], s: &State, rho: f64) -> f64 {
    objective(n, counts, s) + rho * s.h.iter().map(|v| v.abs()).sum::<f64>()
}

/// Solve the equality-constrained QP for a step and new multipliers.
struct Step {
    delta: DVector<f64>,
    nu: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    g: DMatrix<f64>,
    schur_pinv: DMatrix<f64>,
}

fn qp_step(b: DMatrix<f64>, g: DMatrix<f64>, grad: &DVector<f64>, h: &DVector<f64>) -> Option<Step> {
    let chol = b.cholesky()?;
    let binv_gt = chol.solve(&g.transpose());
    let binv_grad = chol.solve(grad);
    let schur = &g * &binv_gt;
    let schur = (&schur + schur.transpose()) * 0.5;
    let schur_pinv = linalg::pinv(&schur);
    let nu = &schur_pinv * (&g * &binv_grad - h);
    let delta = &binv_gt * &nu - binv_grad;
    if delta.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Step {
        delta,
        nu,
        chol,
        g,
        schur_pinv,
    })
}

fn run(
    counts: &[f64],
    c: &dyn Constraint,
    start: Vec<f64>,
    opts: &HlpOptions,
) -> Result<HlpSolution> {
    let n: f64 = counts.iter().sum();
    let ncell = counts.len();
    let x0: Vec<f64> = start.iter().map(|p| p.ln()).collect();
    let mut s = State::at(x0, c)?.normalized(c)?;

    let g0 = &s.jac * DMatrix::from_diagonal(&DVector::from_row_slice(&s.pi));
    if linalg::rank(&g0) < c.dim() {
        return Err(Error::Config(format!(
            "constraint Jacobian has rank {} < {} at the start point",
            linalg::rank(&g0),
            c.dim()
        )));
    }

    let mut nu = DVector::zeros(c.dim());
    let mut rho: f64 = 1.0;
    let mut ll = loglik(counts, &s.pi);
    let mut ll_change = f64::INFINITY;
    let mut trace = Vec::new();

    for iter in 0..opts.max_iterations {
        let pi_v = DVector::from_row_slice(&s.pi);
        let grad = &pi_v * n - DVector::from_row_slice(counts);
        let g = &s.jac * DMatrix::from_diagonal(&pi_v);

        // Hessian of the Lagrangian in x.
        let w = c.weighted_hessian(&s.pi, &nu)?;
        let hx = s.jac.transpose() * &nu;
        let mut b = DMatrix::from_diagonal(&(&pi_v * n));
        for i in 0..ncell {
            for j in 0..ncell {
                b[(i, j)] -= s.pi[i] * w[(i, j)] * s.pi[j];
            }
            b[(i, i)] -= hx[i] * s.pi[i];
        }
        let step = qp_step(b, g.clone(), &grad, &s.h)
            .or_else(|| qp_step(DMatrix::from_diagonal(&(&pi_v * n)), g.clone(), &grad, &s.h))
            .ok_or_else(|| Error::NonConvergence {
                iterations: iter,
                residual: s.h.amax(),
                trace: trace.clone(),
            })?;

        let kkt = (&grad - g.transpose() * &step.nu).amax() / n;
        let hres = s.h.amax();
        trace.push(hres.max(kkt));
        if hres < opts.constraint_tol && kkt < opts.kkt_tol && ll_change < opts.loglik_tol {
            return Ok(HlpSolution {
                pi: s.pi,
                multipliers: step.nu,
                iterations: iter,
                constraint_residual: hres,
                loglik: ll,
            });
        }

        rho = rho.max(1.1 * step.nu.amax());
        let h1: f64 = s.h.iter().map(|v| v.abs()).sum();
        let slope = grad.dot(&step.delta) - rho * h1;
        let m0 = merit(n, counts, &s, rho);

        let try_point = |delta: &DVector<f64>, t: f64| -> Option<State> {
            let x: Vec<f64> = s.x.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect();
            State::at(x, c).ok()
        };

        let mut accepted: Option<State> = None;
        if let Some(full) = try_point(&step.delta, 1.0) {
            if merit(n, counts, &full, rho) <= m0 + 1e-4 * slope {
                accepted = Some(full);
            } else {
                // Second-order correction against the curvature of h.
                let gb = step.chol.solve(&step.g.transpose());
                let corr = -(&gb * (&step.schur_pinv * &full.h));
                let soc = &step.delta + corr;
                if let Some(p) = try_point(&soc, 1.0) {
                    if merit(n, counts, &p, rho) <= m0 + 1e-4 * slope {
                        accepted = Some(p);
                    }
                }
            }
        }
        if accepted.is_none() {
            let mut t = 0.5;
            for _ in 0..opts.max_halvings {
                if let Some(p) = try_point(&step.delta, t) {
                    if merit(n, counts, &p, rho) <= m0 + 1e-4 * t * slope {
                        accepted = Some(p);
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        let next = match accepted {
            Some(p) => p.normalized(c)?,
            None => {
                // Round-off stall at an already feasible stationary point.
                if hres < 1e-8 && kkt < 1e-5 {
                    return Ok(HlpSolution {
                        pi: s.pi,
                        multipliers: step.nu,
                        iterations: iter,
                        constraint_residual: hres,
                        loglik: ll,
                    });
                }
                return Err(Error::NonConvergence {
                    iterations: iter,
                    residual: hres,
                    trace,
                });
            }
        };
        let ll_new = loglik(counts, &next.pi);
        ll_change = (ll_new - ll).abs() / (1.0 + ll.abs());
        ll = ll_new;
        nu = step.nu;
        s = next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: s.h.amax(),
        trace,
    })
}

/// Maximise the multinomial likelihood of `counts` subject to `c(π) = 0`.
pub fn solve(counts: &[f64], c: &dyn Constraint, opts: &HlpOptions) -> Result<HlpSolution> {
    let n: f64 = counts.iter().sum();
    let ncell = counts.len() as f64;
    if c.dim() == 0 {
        let pi: Vec<f64> = counts.iter().map(|v| v / n).collect();
        return Ok(HlpSolution {
            loglik: loglik(counts, &pi),
            pi,
            multipliers: DVector::zeros(0),
            iterations: 0,
            constraint_residual: 0.0,
        });
    }
    let smoothed: Vec<f64> = counts.iter().map(|v| (v + 0.5) / (n + 0.5 * ncell)).collect();
    match run(counts, c, smoothed, opts) {
        Ok(sol) => Ok(sol),
        Err(e @ Error::Config(_)) => Err(e),
        Err(first) if opts.restart => {
            let uniform = vec![1.0 / ncell; counts.len()];
            run(counts, c, uniform, opts).map_err(|_| first)
        }
        Err(e) => Err(e),
    }
}
