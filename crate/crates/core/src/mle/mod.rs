//! Maximum-likelihood fitting of the symmetry, asymmetry and moment models.

mod constraint;
mod potential;
mod solver;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

pub use constraint::{symmetry_constraint, Constraint, LinearConstraint, LinkConstraint, MomentConstraint};
pub use potential::{discrepancy_measures, pair_discrepancy, potential_params, potential_value, Discrepancy, Potential};
pub use solver::{HlpOptions, HlpSolution};

use crate::design::{asymmetry_dim, design_matrix, AsymmetryFamily, DesignSystem};
use crate::error::{Error, Result};
use crate::fdiv::FFunction;
use crate::linalg;
use crate::moments::MomentModel;
use crate::table::{symmetric_class_count, CountTable, Orbits, ProbTable, TableShape};

/// Every model the fitter understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    S,
    Gs,
    Els,
    Ls,
    Me2,
    Me,
    Ve,
    Ce,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 8] = [
        ModelFamily::S,
        ModelFamily::Gs,
        ModelFamily::Els,
        ModelFamily::Ls,
        ModelFamily::Me2,
        ModelFamily::Me,
        ModelFamily::Ve,
        ModelFamily::Ce,
    ];

    pub fn asymmetry(self) -> Option<AsymmetryFamily> {
        match self {
            ModelFamily::Gs => Some(AsymmetryFamily::Gs),
            ModelFamily::Els => Some(AsymmetryFamily::Els),
            ModelFamily::Ls => Some(AsymmetryFamily::Ls),
            _ => None,
        }
    }

    pub fn moment(self) -> Option<MomentModel> {
        match self {
            ModelFamily::Me2 => Some(MomentModel::Me2),
            ModelFamily::Me => Some(MomentModel::Me),
            ModelFamily::Ve => Some(MomentModel::Ve),
            ModelFamily::Ce => Some(MomentModel::Ce),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::S => "S",
            ModelFamily::Gs => "GS",
            ModelFamily::Els => "ELS",
            ModelFamily::Ls => "LS",
            ModelFamily::Me2 => "ME2",
            ModelFamily::Me => "ME",
            ModelFamily::Ve => "VE",
            ModelFamily::Ce => "CE",
        }
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s" => Ok(ModelFamily::S),
            "gs" => Ok(ModelFamily::Gs),
            "els" => Ok(ModelFamily::Els),
            "ls" => Ok(ModelFamily::Ls),
            "me2" => Ok(ModelFamily::Me2),
            "me" => Ok(ModelFamily::Me),
            "ve" => Ok(ModelFamily::Ve),
            "ce" => Ok(ModelFamily::Ce),
            _ => Err(Error::Config(format!("unknown model `{s}`"))),
        }
    }
}

/// A model family together with its f-function where one applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "ff_name")]
    pub ff: Option<FFunction>,
}

mod ff_name {
    use super::FFunction;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ff: &Option<FFunction>, s: S) -> Result<S::Ok, S::Error> {
        match ff {
            Some(f) => s.serialize_str(&f.name()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<FFunction>, D::Error> {
        let name: Option<String> = Option::deserialize(d)?;
        name.map(|n| n.parse().map_err(serde::de::Error::custom)).transpose()
    }
}

impl ModelSpec {
    /// Asymmetry families need an f-function; for the others it is dropped.
    pub fn new(family: ModelFamily, ff: Option<FFunction>) -> Result<Self> {
        if family.asymmetry().is_some() {
            if ff.is_none() {
                return Err(Error::Config(format!(
                    "model {} needs an f-function",
                    family.name()
                )));
            }
            Ok(ModelSpec { family, ff })
        } else {
            Ok(ModelSpec { family, ff: None })
        }
    }

    pub fn symmetry() -> Self {
        ModelSpec {
            family: ModelFamily::S,
            ff: None,
        }
    }

    pub fn asymmetry(family: AsymmetryFamily, ff: FFunction) -> Self {
        let family = match family {
            AsymmetryFamily::Gs => ModelFamily::Gs,
            AsymmetryFamily::Els => ModelFamily::Els,
            AsymmetryFamily::Ls => ModelFamily::Ls,
        };
        ModelSpec { family, ff: Some(ff) }
    }

    pub fn moment(model: MomentModel) -> Self {
        let family = match model {
            MomentModel::Me => ModelFamily::Me,
            MomentModel::Ve => ModelFamily::Ve,
            MomentModel::Ce => ModelFamily::Ce,
            MomentModel::Me2 => ModelFamily::Me2,
        };
        ModelSpec { family, ff: None }
    }

    /// Short label such as `GS`, `PGS`, `HELS` or `GS[power:0.5]`.
    pub fn label(&self) -> String {
        let base = self.family.name();
        match self.ff {
            None | Some(FFunction::KullbackLeibler) => base.to_string(),
            Some(FFunction::Pearson) => format!("P{base}"),
            Some(FFunction::Hellinger) => format!("H{base}"),
            Some(ff) => format!("{base}[{ff}]"),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Result of one model fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// `None` for fits of an ad-hoc constraint through [`fit_hlp`].
    pub spec: Option<ModelSpec>,
    pub counts: CountTable,
    pub pihat: ProbTable,
    pub mhat: Vec<f64>,
    /// Coefficients of the asymmetry columns and the orbit block, when the
    /// fitted link is finite everywhere.
    pub theta_prime: Option<Vec<f64>>,
    pub g2: f64,
    pub df: usize,
    pub pvalue: f64,
    pub converged: bool,
    pub iterations: usize,
    pub constraint_residual: f64,
}

/// Likelihood-ratio statistic `2 Σ n_i ln(n_i / m̂_i)`; empty cells add 0.
pub fn g2(counts: &CountTable, fitted: &[f64]) -> Result<f64> {
    if fitted.len() != counts.counts().len() {
        return Err(Error::Dimension("fitted values do not match the table".into()));
    }
    let mut total = 0.0;
    for (&n, &m) in counts.counts().iter().zip(fitted) {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::InvalidFit(format!("fitted value {m}")));
        }
        if n > 0 {
            if m == 0.0 {
                return Err(Error::InvalidFit("zero fitted value for an observed cell".into()));
            }
            let n = n as f64;
            total += n * (n / m).ln();
        }
    }
    Ok((2.0 * total).max(0.0))
}

/// Residual degrees of freedom of a model on an `r^T` table.
pub fn degrees_of_freedom(family: ModelFamily, shape: &TableShape) -> Result<usize> {
    let (r, t) = (shape.r(), shape.t());
    let n = shape.n_cells() as i64;
    let l = symmetric_class_count(r, t) as i64;
    let t = t as i64;
    let df = match family {
        ModelFamily::S => n - l,
        ModelFamily::Gs => n - l - asymmetry_dim(AsymmetryFamily::Gs, t as usize) as i64,
        ModelFamily::Els => n - l - 2 * t + 2,
        ModelFamily::Ls => n - l - t + 1,
        ModelFamily::Me2 => (t * t + 3 * t - 6) / 2,
        ModelFamily::Me | ModelFamily::Ve => t - 1,
        ModelFamily::Ce => (t * t - t - 2) / 2,
    };
    if df <= 0 {
        return Err(Error::Config(format!(
            "{} has {df} degrees of freedom for r = {r}, T = {t}",
            family.name()
        )));
    }
    Ok(df as usize)
}

/// Upper tail of χ²_df at `g2`.
pub fn pvalue(g2: f64, df: usize) -> f64 {
    if g2 <= 0.0 {
        return 1.0;
    }
    if df == 0 {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, g2 / 2.0)
}

/// Closed-form fit of complete symmetry: every cell gets its orbit average.
pub fn fit_symmetry(counts: &CountTable) -> Result<FitResult> {
    let shape = counts.shape();
    let orbits = Orbits::new(shape);
    let mhat = orbits.symmetrize(&counts.as_f64());
    let pihat = ProbTable::from_weights(shape.clone(), mhat.clone())?;
    let g = g2(counts, &mhat)?;
    let df = degrees_of_freedom(ModelFamily::S, shape)?;
    Ok(FitResult {
        spec: Some(ModelSpec::symmetry()),
        counts: counts.clone(),
        pihat,
        mhat,
        theta_prime: None,
        g2: g,
        df,
        pvalue: pvalue(g, df),
        converged: true,
        iterations: 0,
        constraint_residual: 0.0,
    })
}

fn assemble(
    counts: &CountTable,
    spec: Option<ModelSpec>,
    sol: HlpSolution,
    df: usize,
) -> Result<FitResult> {
    let shape = counts.shape().clone();
    let n = counts.n() as f64;
    let pihat = ProbTable::from_weights(shape, sol.pi)?;
    let mhat: Vec<f64> = pihat.probs().iter().map(|p| p * n).collect();
    let g = g2(counts, &mhat)?;
    Ok(FitResult {
        spec,
        counts: counts.clone(),
        pihat,
        mhat,
        theta_prime: None,
        g2: g,
        df,
        pvalue: pvalue(g, df),
        converged: true,
        iterations: sol.iterations,
        constraint_residual: sol.constraint_residual,
    })
}

/// Fit an arbitrary homogeneous constraint; df is the constraint dimension.
pub fn fit_hlp(counts: &CountTable, h: &dyn Constraint) -> Result<FitResult> {
    fit_hlp_with(counts, h, &HlpOptions::default())
}

pub fn fit_hlp_with(counts: &CountTable, h: &dyn Constraint, opts: &HlpOptions) -> Result<FitResult> {
    let sol = solver::solve(&counts.as_f64(), h, opts)?;
    assemble(counts, None, sol, h.dim())
}

/// A reusable fitter for one table shape and model; building the design
/// and constraint is done once.
pub struct Fitter {
    shape: TableShape,
    spec: ModelSpec,
    df: usize,
    constraint: Option<Box<dyn Constraint>>,
    design: Option<DesignSystem>,
    x_pinv: Option<DMatrix<f64>>,
    pub options: HlpOptions,
}

impl Fitter {
    pub fn new(shape: &TableShape, spec: ModelSpec) -> Result<Self> {
        let spec = ModelSpec::new(spec.family, spec.ff)?;
        let df = degrees_of_freedom(spec.family, shape)?;
        let mut design = None;
        let mut x_pinv = None;
        let constraint: Option<Box<dyn Constraint>> = match spec.family {
            ModelFamily::S => None,
            ModelFamily::Gs | ModelFamily::Els | ModelFamily::Ls => {
                let ds = design_matrix(shape, spec.family.asymmetry().unwrap())?;
                let c = LinkConstraint::new(&ds, spec.ff.unwrap());
                x_pinv = Some(linalg::pinv(&ds.x));
                design = Some(ds);
                Some(Box::new(c))
            }
            ModelFamily::Me | ModelFamily::Me2 => {
                let model = spec.family.moment().unwrap();
                let a = if model == MomentModel::Me2 {
                    crate::design::moment_matrix(shape)
                } else {
                    DMatrix::from_fn(shape.t() - 1, shape.n_cells(), |h, i| {
                        let d = crate::design::delta1(shape, h + 1).unwrap();
                        d[i]
                    })
                };
                Some(Box::new(LinearConstraint { a }))
            }
            ModelFamily::Ve | ModelFamily::Ce => {
                Some(Box::new(MomentConstraint::new(spec.family.moment().unwrap(), shape)))
            }
        };
        Ok(Fitter {
            shape: shape.clone(),
            spec,
            df,
            constraint,
            design,
            x_pinv,
            options: HlpOptions::default(),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn df(&self) -> usize {
        self.df
    }

    pub fn design(&self) -> Option<&DesignSystem> {
        self.design.as_ref()
    }

    pub fn fit(&self, counts: &CountTable) -> Result<FitResult> {
        if counts.shape() != &self.shape {
            return Err(Error::Dimension("table shape differs from the fitter's".into()));
        }
        let Some(c) = &self.constraint else {
            return fit_symmetry(counts);
        };
        let sol = solver::solve(&counts.as_f64(), c.as_ref(), &self.options)?;
        let mut fit = assemble(counts, Some(self.spec), sol, self.df)?;
        if let (Some(pinv), Some(ff)) = (&self.x_pinv, self.spec.ff) {
            let orbits = Orbits::new(&self.shape);
            let ratio = orbits.conditional(fit.pihat.probs())?;
            let link: Vec<f64> = ratio
                .iter()
                .enumerate()
                .map(|(i, c)| ff.link(c * orbits.size_of_cell(i) as f64))
                .collect();
            if link.iter().all(|v| v.is_finite()) {
                fit.theta_prime = Some((pinv * DVector::from_vec(link)).as_slice().to_vec());
            }
        }
        Ok(fit)
    }
}

/// Fit one model to a table.
pub fn fit_model(counts: &CountTable, spec: &ModelSpec) -> Result<FitResult> {
    Fitter::new(counts.shape(), *spec)?.fit(counts)
}
