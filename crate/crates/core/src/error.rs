use thiserror::Error;

/// Errors raised by table construction, model fitting and the test statistics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid table shape: {0}")]
    Shape(String),

    #[error("cell coordinate {value} at position {position} is outside 1..={r}")]
    CellRange { position: usize, value: usize, r: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid probability table: {0}")]
    InvalidTable(String),

    #[error("orbit of {representative:?} has zero total probability")]
    DegenerateOrbit { representative: Vec<usize> },

    #[error("link inverse argument {value} is outside the domain ({lower}, {upper})")]
    Domain { value: f64, lower: f64, upper: f64 },

    #[error("variable {variable} has zero variance")]
    DegenerateMarginal { variable: usize },

    #[error("design matrix is rank deficient in the {block} block (rank {rank} < {expected})")]
    RankDeficient {
        block: &'static str,
        rank: usize,
        expected: usize,
    },

    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("no orbit normalising constant exists: {0}")]
    Infeasible(String),

    #[error("positivity lost during iteration {iteration}: {detail}")]
    Positivity { iteration: usize, detail: String },

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("matrix is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("invalid fit: {0}")]
    InvalidFit(String),

    #[error("document I/O failed: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
