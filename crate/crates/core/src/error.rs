//! Error type shared by every module, with the CLI exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("expression `{expr}`: {msg}")]
    Expression { expr: String, msg: String },

    #[error("no convergence after {iterations} iterations (last update {last_update:.3e})")]
    MaxIterationsExceeded { iterations: usize, last_update: f64 },

    #[error("blow-up: |value| = {value:.3e} exceeds the bound {bound:.3e}")]
    BlowUp { value: f64, bound: f64 },

    #[error("negative density {value:.3e} at node {node}, level {level}")]
    NegativeDensity { value: f64, node: usize, level: usize },

    #[error("linearized solve failed to converge ({0}); the base is not numerically stable")]
    StabilityViolation(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("incompatible boundary data: {0}")]
    Incompatible(String),

    #[error("remainder iteration does not contract (update ratio {ratio:.3}); use a larger R")]
    NonContraction { ratio: f64 },

    #[error("probe: {0}")]
    Probe(String),

    #[error("exponent cap exceeded: max |Re(xi).x| = {value:.1} > {cap:.1}; shrink the domain or R")]
    Overflow { value: f64, cap: f64 },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("positivity floor violated: {0}")]
    Positivity(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("inconsistent Cauchy data: {0}")]
    InconsistentCauchy(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("property check failed: {0}")]
    Property(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 2 for bad input, 3 for solver failure, 4 for a failed property.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::ShapeMismatch { .. }
            | Error::Config(_)
            | Error::Expression { .. }
            | Error::Incompatible(_)
            | Error::MissingData(_)
            | Error::Integrity(_)
            | Error::Format(_)
            | Error::Io { .. } => 2,
            Error::Property(_) => 4,
            _ => 3,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}
