//! Monte Carlo power study: multivariate normal draws, discretisation into
//! an r^T table and goodness-of-fit rejection rates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mle::{Fitter, ModelSpec};
use crate::table::{CountTable, TableShape};

/// Seed used when a configuration does not name one.
pub const DEFAULT_SEED: u64 = 20_240_531;

/// Replicates and sample size of the full-scale study.
pub const FULL_SCALE_REPS: usize = 10_000;

/// Share of failed replicates above which a study is aborted.
pub const MAX_FAILURE_SHARE: f64 = 0.001;

fn default_alpha() -> f64 {
    0.05
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_n_obs() -> usize {
    10_000
}

fn default_n_reps() -> usize {
    1_000
}

/// A simulation scenario and the models to test on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Full T×T correlation matrix.
    pub correlations: Vec<Vec<f64>>,
    #[serde(default = "default_n_obs")]
    pub n_obs: usize,
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    /// Per-variable increasing thresholds; defaults to μ₁ and μ₁ ± 0.6σ₁ for
    /// every variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutpoints: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub models: Vec<ModelSpec>,
}

impl SimConfig {
    pub fn t(&self) -> usize {
        self.means.len()
    }

    /// Covariance `Σ_ij = ρ_ij σ_i σ_j`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let t = self.t();
        DMatrix::from_fn(t, t, |i, j| {
            self.correlations[i][j] * (self.variances[i] * self.variances[j]).sqrt()
        })
    }

    /// Thresholds actually used for binning.
    pub fn effective_cutpoints(&self) -> Vec<Vec<f64>> {
        match &self.cutpoints {
            Some(c) => c.clone(),
            None => vec![default_cutpoints(self.means[0], self.variances[0].sqrt()).to_vec(); self.t()],
        }
    }

    pub fn shape(&self) -> Result<TableShape> {
        let r = self.effective_cutpoints()[0].len() + 1;
        TableShape::equally_spaced(r, self.t())
    }

    /// Check dimensions, positive variances, a positive definite correlation
    /// matrix and increasing cutpoints of equal count.
    pub fn validate(&self) -> Result<()> {
        let t = self.t();
        if t < 2 {
            return Err(Error::Config("at least two variables are needed".into()));
        }
        if self.variances.len() != t || self.correlations.len() != t || self.correlations.iter().any(|r| r.len() != t) {
            return Err(Error::Config("means, variances and correlations disagree in size".into()));
        }
        if let Some(v) = self.variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("variance {v} is not positive")));
        }
        for i in 0..t {
            if self.correlations[i][i] != 1.0 {
                return Err(Error::Config("correlation diagonal must be 1".into()));
            }
            for j in 0..t {
                if self.correlations[i][j] != self.correlations[j][i] {
                    return Err(Error::Config("correlation matrix is not symmetric".into()));
                }
            }
        }
        if self.covariance().cholesky().is_none() {
            return Err(Error::Config("covariance matrix is not positive definite".into()));
        }
        let cuts = self.effective_cutpoints();
        if cuts.len() != t {
            return Err(Error::Config("one cutpoint list per variable is needed".into()));
        }
        let r1 = cuts[0].len();
        if r1 == 0 || cuts.iter().any(|c| c.len() != r1 || c.windows(2).any(|w| w[0] >= w[1])) {
            return Err(Error::Config("cutpoints must be strictly increasing and equal in count".into()));
        }
        if self.n_obs == 0 || self.n_reps == 0 {
            return Err(Error::Config("n_obs and n_reps must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models to test".into()));
        }
        Ok(())
    }
}

/// `(μ₁ - 0.6σ₁, μ₁, μ₁ + 0.6σ₁)`.
pub fn default_cutpoints(mu1: f64, sigma1: f64) -> [f64; 3] {
    [mu1 - 0.6 * sigma1, mu1, mu1 + 0.6 * sigma1]
}

fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// `n_obs × T` draws for one replicate, reproducible from `(seed, replicate)`.
pub fn mvn_sample(config: &SimConfig, replicate: u64) -> Result<DMatrix<f64>> {
    let t = config.t();
    let chol = config
        .covariance()
        .cholesky()
        .ok_or_else(|| Error::Config("covariance matrix is not positive definite".into()))?;
    let l = chol.l();
    let mu = DVector::from_row_slice(&config.means);
    let mut rng = replicate_rng(config.seed, replicate);
    let mut out = DMatrix::zeros(config.n_obs, t);
    let mut z = DVector::zeros(t);
    for row in 0..config.n_obs {
        for k in 0..t {
            z[k] = rng.sample(StandardNormal);
        }
        let x = &mu + &l * &z;
        out.row_mut(row).copy_from(&x.transpose());
    }
    Ok(out)
}

/// Category of `x` given increasing thresholds: values at or below the
/// first threshold fall in category 1.
pub fn category(x: f64, cuts: &[f64]) -> usize {
    1 + cuts.iter().filter(|c| x > **c).count()
}

/// Bin every row of `samples` into a table cell.
pub fn discretize(samples: &DMatrix<f64>, cutpoints: &[Vec<f64>]) -> Result<CountTable> {
    let t = samples.ncols();
    if cutpoints.len() != t {
        return Err(Error::Dimension("one cutpoint list per column is needed".into()));
    }
    let r = cutpoints[0].len() + 1;
    let shape = TableShape::equally_spaced(r, t)?;
    let mut counts = vec![0u64; shape.n_cells()];
    for row in samples.row_iter() {
        let mut idx = 0;
        for (k, cuts) in cutpoints.iter().enumerate() {
            idx = idx * r + category(row[k], cuts) - 1;
        }
        counts[idx] += 1;
    }
    CountTable::new(shape, counts)
}

/// Rejection rate of one model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PowerRow {
    pub model: String,
    pub df: usize,
    pub rejections: usize,
    /// Replicates whose fit succeeded.
    pub valid: usize,
    pub failures: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PowerReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_obs: usize,
    pub n_reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub rows: Vec<PowerRow>,
}

/// Wilson score interval for `k` successes in `n` trials at 95%.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Outcome of one replicate per model: `Some(rejected)` or `None` on a
/// failed fit.
pub fn replicate_outcomes(config: &SimConfig, fitters: &[Fitter], replicate: u64) -> Result<Vec<Option<bool>>> {
    let sample = mvn_sample(config, replicate)?;
    let table = discretize(&sample, &config.effective_cutpoints())?;
    Ok(fitters
        .iter()
        .map(|f| f.fit(&table).ok().map(|fit| fit.pvalue < config.alpha))
        .collect())
}

/// Run the study. Replicates run in parallel on independent RNG streams,
/// so the report depends only on the configuration.
pub fn power_study(config: &SimConfig) -> Result<PowerReport> {
    config.validate()?;
    let shape = config.shape()?;
    let fitters = config
        .models
        .iter()
        .map(|m| Fitter::new(&shape, *m))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = (0..config.n_reps as u64)
        .into_par_iter()
        .map(|rep| replicate_outcomes(config, &fitters, rep))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(fitters.len());
    for (k, fitter) in fitters.iter().enumerate() {
        let failures = outcomes.iter().filter(|o| o[k].is_none()).count();
        if failures as f64 > MAX_FAILURE_SHARE * config.n_reps as f64 {
            return Err(Error::Config(format!(
                "{} failed on {failures} of {} replicates",
                fitter.spec().label(),
                config.n_reps
            )));
        }
        let rejections = outcomes.iter().filter(|o| o[k] == Some(true)).count();
        let valid = config.n_reps - failures;
        let (ci_low, ci_high) = wilson_interval(rejections, valid);
        rows.push(PowerRow {
            model: fitter.spec().label(),
            df: fitter.df(),
            rejections,
            valid,
            failures,
            rate: if valid > 0 { rejections as f64 / valid as f64 } else { f64::NAN },
            ci_low,
            ci_high,
        });
    }
    Ok(PowerReport {
        name: config.name.clone(),
        n_obs: config.n_obs,
        n_reps: config.n_reps,
        alpha: config.alpha,
        seed: config.seed,
        rows,
    })
}
