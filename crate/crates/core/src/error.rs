use std::path::PathBuf;

use thiserror::Error;

use crate::rod::RodState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular configuration: {0}")]
    SingularConfiguration(String),

    /// The inner equilibrium solve did not reach its gradient tolerance.
    #[error("relaxation did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e}, tolerance {tolerance:.3e})")]
    ConvergenceFailure {
        iterations: usize,
        gradient_norm: f64,
        tolerance: f64,
        last_state: Box<RodState>,
    },

    #[error("collapse stalled at weight {weight:.6e}: step {step:.3e} fell below {min_step:.3e} after {accepted} accepted steps")]
    StalledCollapse {
        weight: f64,
        step: f64,
        min_step: f64,
        accepted: usize,
        /// Weights of all accepted steps up to the stall.
        weights: Vec<f64>,
    },

    #[error("{file}: parse error at line {line}, column {column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{file}: schema violation at `{field}`: {message}")]
    Schema {
        file: String,
        field: String,
        message: String,
    },

    #[error("{file}: `{field}` references unknown {kind} `{id}`")]
    DanglingReference {
        file: String,
        field: String,
        kind: &'static str,
        id: String,
    },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::SingularConfiguration(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
