//! Standard f-functions and f-divergences.
//!
//! Every family here is standardised: `f(1) = 0`, `f'(1) = 0` and
//! `f''(1) = 1`. The link `F = f'` and its inverse drive the asymmetry
//! models; `F^-1` is only defined on an interval where it stays positive.
//!
//! | family | `f(x)` | `F^-1(y)` | domain of `F^-1` |
//! |---|---|---|---|
//! | KL | `x ln x - x + 1` | `e^y` | all reals |
//! | Pearson | `(x - 1)^2 / 2` | `y + 1` | `y > -1` |
//! | Hellinger | `2 (sqrt x - 1)^2` | `(1 - y/2)^-2` | `y < 2` |
//! | Power(λ) | Cressie–Read `f_λ` | `(λy + 1)^(1/λ)` | `λy + 1 > 0` |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::table::ProbTable;

/// Below this magnitude a nonzero power parameter is evaluated by series.
const SERIES_LAMBDA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FFunction {
    KullbackLeibler,
    Pearson,
    Hellinger,
    /// Cressie–Read power family with parameter λ.
    Power(f64),
}

/// `(x^λ - 1) / λ`, with a series branch near λ = 0.
fn box_cox(x: f64, lambda: f64) -> f64 {
    let l = x.ln();
    if lambda == 0.0 {
        l
    } else if lambda.abs() < SERIES_LAMBDA {
        l * (1.0 + lambda * l / 2.0 + lambda * lambda * l * l / 6.0)
    } else {
        (x.powf(lambda) - 1.0) / lambda
    }
}

impl FFunction {
    pub fn power(lambda: f64) -> Self {
        FFunction::Power(lambda)
    }

    /// Short name used by reports and the command line.
    pub fn name(&self) -> String {
        match self {
            FFunction::KullbackLeibler => "kl".into(),
            FFunction::Pearson => "pearson".into(),
            FFunction::Hellinger => "hellinger".into(),
            FFunction::Power(l) => format!("power:{l}"),
        }
    }

    /// The f-function itself. `x` must be non-negative; `f(0)` is the limit.
    pub fn f(&self, x: f64) -> f64 {
        if x == 0.0 {
            return self.f_at_zero();
        }
        match *self {
            FFunction::KullbackLeibler => x * x.ln() - x + 1.0,
            FFunction::Pearson => 0.5 * (x - 1.0) * (x - 1.0),
            FFunction::Hellinger => {
                let d = x.sqrt() - 1.0;
                2.0 * d * d
            }
            FFunction::Power(l) if l == 0.0 => x * x.ln() - x + 1.0,
            FFunction::Power(l) if l == -1.0 => x - 1.0 - x.ln(),
            FFunction::Power(l) => (x * box_cox(x, l) - (x - 1.0)) / (l + 1.0),
        }
    }

    fn f_at_zero(&self) -> f64 {
        match *self {
            FFunction::KullbackLeibler => 1.0,
            FFunction::Pearson => 0.5,
            FFunction::Hellinger => 2.0,
            FFunction::Power(l) if l > -1.0 => 1.0 / (l + 1.0),
            FFunction::Power(_) => f64::INFINITY,
        }
    }

    /// `lim_{t -> inf} f(t) / t`, the weight of mass placed where `q = 0`.
    fn slope_at_infinity(&self) -> f64 {
        match *self {
            FFunction::KullbackLeibler | FFunction::Pearson => f64::INFINITY,
            FFunction::Hellinger => 2.0,
            FFunction::Power(l) if l >= 0.0 => f64::INFINITY,
            FFunction::Power(l) => -1.0 / l,
        }
    }

    /// The link `F = f'`.
    pub fn link(&self, x: f64) -> f64 {
        match *self {
            FFunction::KullbackLeibler => x.ln(),
            FFunction::Pearson => x - 1.0,
            FFunction::Hellinger => 2.0 * (1.0 - 1.0 / x.sqrt()),
            FFunction::Power(l) if l == -1.0 => 1.0 - 1.0 / x,
            FFunction::Power(l) => box_cox(x, l),
        }
    }

    /// `f''(x) = F'(x)`.
    pub fn f_second(&self, x: f64) -> f64 {
        match *self {
            FFunction::KullbackLeibler => 1.0 / x,
            FFunction::Pearson => 1.0,
            FFunction::Hellinger => x.powf(-1.5),
            FFunction::Power(l) => x.powf(l - 1.0),
        }
    }

    /// `f'''(x) = F''(x)`.
    pub fn f_third(&self, x: f64) -> f64 {
        match *self {
            FFunction::KullbackLeibler => -1.0 / (x * x),
            FFunction::Pearson => 0.0,
            FFunction::Hellinger => -1.5 * x.powf(-2.5),
            FFunction::Power(l) => (l - 1.0) * x.powf(l - 2.0),
        }
    }

    /// Open interval of `y` on which `F^-1(y)` is defined and positive.
    pub fn inverse_domain(&self) -> (f64, f64) {
        match *self {
            FFunction::KullbackLeibler => (f64::NEG_INFINITY, f64::INFINITY),
            FFunction::Pearson => (-1.0, f64::INFINITY),
            FFunction::Hellinger => (f64::NEG_INFINITY, 2.0),
            FFunction::Power(l) if l == 0.0 => (f64::NEG_INFINITY, f64::INFINITY),
            FFunction::Power(l) if l > 0.0 => (-1.0 / l, f64::INFINITY),
            FFunction::Power(l) => (f64::NEG_INFINITY, -1.0 / l),
        }
    }

    pub fn in_inverse_domain(&self, y: f64) -> bool {
        let (lo, hi) = self.inverse_domain();
        y > lo && y < hi
    }

    /// `F^-1(y)`, or a domain error carrying the violated bounds.
    pub fn link_inv(&self, y: f64) -> Result<f64> {
        if !self.in_inverse_domain(y) || !y.is_finite() {
            let (lower, upper) = self.inverse_domain();
            return Err(Error::Domain {
                value: y,
                lower,
                upper,
            });
        }
        Ok(self.link_inv_unchecked(y))
    }

    pub(crate) fn link_inv_unchecked(&self, y: f64) -> f64 {
        match *self {
            FFunction::KullbackLeibler => y.exp(),
            FFunction::Pearson => y + 1.0,
            FFunction::Hellinger => {
                let b = 1.0 - 0.5 * y;
                1.0 / (b * b)
            }
            FFunction::Power(l) if l == 0.0 => y.exp(),
            FFunction::Power(l) => ((l * y).ln_1p() / l).exp(),
        }
    }

    /// Derivative of `F^-1` at `y`, i.e. `1 / f''(F^-1(y))`.
    pub(crate) fn link_inv_deriv_unchecked(&self, y: f64) -> f64 {
        1.0 / self.f_second(self.link_inv_unchecked(y))
    }

    /// Curvature `c = f''(1)`; 1 for every standardised family.
    pub fn curvature(&self) -> f64 {
        self.f_second(1.0)
    }
}

impl fmt::Display for FFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "kl" | "kullback-leibler" => Ok(FFunction::KullbackLeibler),
            "pearson" => Ok(FFunction::Pearson),
            "hellinger" => Ok(FFunction::Hellinger),
            other => {
                let lambda = other
                    .strip_prefix("power:")
                    .ok_or_else(|| Error::Config(format!("unknown f-function `{s}`")))?;
                let lambda: f64 = lambda
                    .parse()
                    .map_err(|_| Error::Config(format!("bad power parameter in `{s}`")))?;
                if !lambda.is_finite() {
                    return Err(Error::Config(format!("bad power parameter in `{s}`")));
                }
                Ok(FFunction::Power(lambda))
            }
        }
    }
}

/// `D_f(p || q) = sum_i q_i f(p_i / q_i)`.
///
/// Cells with `q_i = 0` contribute `p_i lim f(t)/t`, so the result is
/// `f64::INFINITY` when that limit is infinite and `p_i > 0`.
pub fn divergence(ff: &FFunction, p: &ProbTable, q: &ProbTable) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::Dimension("divergence between different shapes".into()));
    }
    Ok(divergence_slices(ff, p.probs(), q.probs()))
}

pub(crate) fn divergence_slices(ff: &FFunction, p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        total += if qi > 0.0 {
            qi * ff.f(pi / qi)
        } else if pi > 0.0 {
            pi * ff.slope_at_infinity()
        } else {
            0.0
        };
    }
    total
}
