//! JSON documents for tables, fit reports and simulation configurations.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mle::{discrepancy_measures, g2, potential_params, Discrepancy, FitResult, ModelSpec, Potential};
use crate::table::{cell_of_index, CountTable, Orbits, TableShape};

/// Names for the variables and their categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default)]
    pub categories: Vec<String>,
}

/// A contingency table on disk: counts in lexicographic cell order with the
/// first variable varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub r: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
}

impl TableDocument {
    pub fn from_table(table: &CountTable) -> Self {
        let shape = table.shape();
        let default: Vec<f64> = (1..=shape.r()).map(|i| i as f64).collect();
        TableDocument {
            r: shape.r(),
            t: shape.t(),
            scores: (shape.scores() != default.as_slice()).then(|| shape.scores().to_vec()),
            counts: table.counts().to_vec(),
            labels: None,
        }
    }

    pub fn shape(&self) -> Result<TableShape> {
        match &self.scores {
            Some(s) => TableShape::new(self.r, self.t, s.clone()),
            None => TableShape::equally_spaced(self.r, self.t),
        }
    }

    /// The count table, optionally with replacement scores.
    pub fn to_table_with_scores(&self, scores: Option<&[f64]>) -> Result<CountTable> {
        let shape = match scores {
            Some(s) => TableShape::new(self.r, self.t, s.to_vec())?,
            None => self.shape()?,
        };
        CountTable::new(shape, self.counts.clone())
    }

    pub fn to_table(&self) -> Result<CountTable> {
        self.to_table_with_scores(None)
    }
}

/// One cell of a fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedCell {
    pub cell: String,
    pub count: u64,
    pub fitted: f64,
    pub probability: f64,
}

/// Everything a fit produces, in a form that can be re-read and rescored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
    pub g2: f64,
    pub df: usize,
    pub pvalue: f64,
    pub converged: bool,
    pub iterations: usize,
    pub constraint_residual: f64,
    pub table: TableDocument,
    pub cells: Vec<FittedCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_prime: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub potentials: Vec<Potential>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discrepancies: Vec<Discrepancy>,
}

impl FitReport {
    /// Build a report; potentials and within-orbit discrepancies are added
    /// for asymmetry models with a finite fitted link.
    pub fn from_fit(fit: &FitResult) -> Self {
        let shape = fit.counts.shape();
        let cells = (0..shape.n_cells())
            .map(|i| FittedCell {
                cell: cell_of_index(shape, i).expect("index in range").to_string(),
                count: fit.counts.counts()[i],
                fitted: fit.mhat[i],
                probability: fit.pihat.probs()[i],
            })
            .collect();
        let is_asym = fit.spec.is_some_and(|s| s.family.asymmetry().is_some());
        let (potentials, discrepancies) = if is_asym && fit.theta_prime.is_some() {
            let pots = potential_params(fit).unwrap_or_default();
            let orbits = Orbits::new(shape);
            let mut disc = Vec::new();
            for o in 0..orbits.len() {
                let rep = orbits.representative(o);
                if rep.orbit_size() > 1 {
                    disc.extend(discrepancy_measures(fit, rep).unwrap_or_default());
                }
            }
            (pots, disc)
        } else {
            (Vec::new(), Vec::new())
        };
        FitReport {
            model: fit.spec.map(|s| s.label()).unwrap_or_else(|| "custom".into()),
            spec: fit.spec,
            g2: fit.g2,
            df: fit.df,
            pvalue: fit.pvalue,
            converged: fit.converged,
            iterations: fit.iterations,
            constraint_residual: fit.constraint_residual,
            table: TableDocument::from_table(&fit.counts),
            cells,
            theta_prime: fit.theta_prime.clone(),
            potentials,
            discrepancies,
        }
    }

    /// G² recomputed from the stored counts and fitted values.
    pub fn rescore(&self) -> Result<f64> {
        let table = self.table.to_table()?;
        let fitted: Vec<f64> = self.cells.iter().map(|c| c.fitted).collect();
        g2(&table, &fitted)
    }
}

/// Read and parse a JSON document.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Write a value as pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
