//! Potential parameters θ and within-orbit discrepancy measures of a fitted
//! asymmetry model.

use serde::{Deserialize, Serialize};

use super::FitResult;
use crate::design::{design_matrix, quadratic_predictor, recover_coefficients};
use crate::error::{Error, Result};
use crate::fdiv::FFunction;
use crate::table::{cell_index, cell_of_index, Cell, Orbits};

/// θ at one cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    pub cell: String,
    pub coords: Vec<usize>,
    pub orbit: usize,
    pub theta: f64,
}

/// θ for a predictor value `eta` on an orbit of size `orbit_size`.
///
/// KL gives `exp(η)`, Pearson `η/|D|`, Hellinger `-½ sqrt|D| η` and the
/// power family `λ η / |D|^λ` (with the KL form at λ = 0).
pub fn potential_value(ff: &FFunction, eta: f64, orbit_size: usize) -> f64 {
    let d = orbit_size as f64;
    match *ff {
        FFunction::KullbackLeibler => eta.exp(),
        FFunction::Pearson => eta / d,
        FFunction::Hellinger => -0.5 * d.sqrt() * eta,
        FFunction::Power(l) if l == 0.0 => eta.exp(),
        FFunction::Power(l) => l * eta / d.powf(l),
    }
}

fn asymmetry_parts(fit: &FitResult) -> Result<(crate::design::AsymmetryFamily, FFunction, &[f64])> {
    let spec = fit
        .spec
        .ok_or_else(|| Error::Config("fit has no model specification".into()))?;
    let family = spec
        .family
        .asymmetry()
        .ok_or_else(|| Error::Config(format!("{} has no potential parameters", spec.label())))?;
    let theta = fit
        .theta_prime
        .as_deref()
        .ok_or_else(|| Error::InvalidFit("fitted link is not finite".into()))?;
    Ok((family, spec.ff.expect("asymmetry spec carries f"), theta))
}

/// Plug-in θ̂ at every cell, in lexicographic cell order.
pub fn potential_params(fit: &FitResult) -> Result<Vec<Potential>> {
    let (family, ff, theta) = asymmetry_parts(fit)?;
    let shape = fit.pihat.shape();
    let ds = design_matrix(shape, family)?;
    let (alpha, b) = recover_coefficients(&ds, theta)?;
    let eta = quadratic_predictor(shape, &alpha, &b);
    let orbits = Orbits::new(shape);
    Ok((0..shape.n_cells())
        .map(|i| {
            let cell = cell_of_index(shape, i).expect("index in range");
            Potential {
                cell: cell.to_string(),
                coords: cell.coords().to_vec(),
                orbit: orbits.orbit_of(i),
                theta: potential_value(&ff, eta[i], orbits.size_of_cell(i)),
            }
        })
        .collect())
}

/// Comparison of the fitted conditional probabilities of two cells in the
/// same orbit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discrepancy {
    pub first: String,
    pub second: String,
    /// `π^c_i / π^c_j`; 1 under symmetry.
    pub ratio: f64,
    /// `π^c_i - π^c_j`; 0 under symmetry.
    pub difference: f64,
    /// `(π^c_i)^-1/2 - (π^c_j)^-1/2`; 0 under symmetry.
    pub inverse_root_difference: f64,
    /// The measure matching the fitted f-function.
    pub measure: f64,
}

fn measure_for(ff: Option<FFunction>, a: f64, b: f64) -> f64 {
    match ff {
        Some(FFunction::Pearson) => a - b,
        Some(FFunction::Hellinger) => a.powf(-0.5) - b.powf(-0.5),
        Some(FFunction::Power(l)) if l != 0.0 => a.powf(l) - b.powf(l),
        _ => a / b,
    }
}

/// Discrepancy between two cells of the same orbit.
pub fn pair_discrepancy(fit: &FitResult, first: &Cell, second: &Cell) -> Result<Discrepancy> {
    let shape = fit.pihat.shape();
    let i = cell_index(shape, first)?;
    let j = cell_index(shape, second)?;
    let orbits = Orbits::new(shape);
    if orbits.orbit_of(i) != orbits.orbit_of(j) {
        return Err(Error::Config(format!("{first} and {second} lie in different orbits")));
    }
    let cond = orbits.conditional(fit.pihat.probs())?;
    let (a, b) = (cond[i], cond[j]);
    Ok(Discrepancy {
        first: first.to_string(),
        second: second.to_string(),
        ratio: a / b,
        difference: a - b,
        inverse_root_difference: a.powf(-0.5) - b.powf(-0.5),
        measure: measure_for(fit.spec.and_then(|s| s.ff), a, b),
    })
}

/// All pairwise discrepancies within the orbit of `cell`.
pub fn discrepancy_measures(fit: &FitResult, cell: &Cell) -> Result<Vec<Discrepancy>> {
    let members = cell.orbit();
    let mut out = Vec::new();
    for (k, a) in members.iter().enumerate() {
        for b in &members[k + 1..] {
            out.push(pair_discrepancy(fit, a, b)?);
        }
    }
    Ok(out)
}
