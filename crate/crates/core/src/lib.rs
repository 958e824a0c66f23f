//! Symmetry and asymmetry models for square contingency tables built from
//! f-divergences.
//!
//! The crate fits the complete symmetry model, the generalized symmetry
//! family GS\[f\] with its nested ELS\[f\] and LS\[f\] submodels, and the
//! marginal moment equality models by constrained maximum likelihood. It
//! also computes Wald statistics for the decomposition of symmetry into
//! GS\[f\] and second-moment equality, and runs Monte Carlo power studies.
//!
//! ```
//! use gsf_core::{fit_model, AsymmetryFamily, CountTable, FFunction, ModelSpec, TableShape};
//!
//! let shape = TableShape::equally_spaced(2, 2).unwrap();
//! let table = CountTable::new(shape, vec![10, 4, 7, 9]).unwrap();
//! let fit = fit_model(&table, &ModelSpec::symmetry()).unwrap();
//! assert_eq!(fit.df, 1);
//! let gs = ModelSpec::asymmetry(AsymmetryFamily::Ls, FFunction::KullbackLeibler);
//! assert!(fit_model(&table, &gs).is_err());
//! ```

pub mod design;
pub mod error;
pub mod fdiv;
pub mod io;
pub mod linalg;
pub mod mle;
pub mod moments;
pub mod projection;
pub mod simulate;
pub mod table;
pub mod wald;

pub use nalgebra;

pub use design::{design_matrix, AsymmetryFamily, DesignSystem};
pub use error::{Error, Result};
pub use fdiv::{divergence, FFunction};
pub use io::{FitReport, TableDocument};
pub use mle::{fit_model, potential_params, FitResult, Fitter, ModelFamily, ModelSpec};
pub use moments::{moments, MomentModel, MomentSet};
pub use projection::{iproject, iproject_detailed, Projection, ProjectionSpec};
pub use simulate::{power_study, PowerReport, SimConfig};
pub use table::{Cell, CountTable, Orbits, ProbTable, TableShape};
pub use wald::{decompose, WaldReport};
