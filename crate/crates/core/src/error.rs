use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants split into two families: input problems (bad shapes, bad files,
/// violated preconditions) and numerical problems (singular systems,
/// non-convergence, infeasible programs). [`Error::is_numerical`] tells them
/// apart, which is what the CLI uses to pick an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{path}: row {row}: {message}")]
    Csv {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    SingularMatrix { pivot: usize, value: f64 },

    #[error("kernel matrix is near-singular (eigenvalue {eigenvalue:e} below floor {floor:e})")]
    NearSingularKernel { eigenvalue: f64, floor: f64 },

    #[error("eigendecomposition did not converge")]
    EigenNonConvergence,

    #[error("dual solver did not converge after {iterations} sweeps (KKT violation {kkt_violation:e})")]
    NonConvergence {
        iterations: usize,
        kkt_violation: f64,
    },

    #[error("hard-margin problem is infeasible: dual value exceeded cap {cap:e}")]
    InfeasiblePrimal { cap: f64 },

    #[error("leave-one-out subproblem {index} failed: {source}")]
    LooSubproblem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("excess level {eps:e} is unreachable along a direction in the kernel of the design")]
    UnreachableLevel { eps: f64 },

    #[error("minimizer set is not a singleton (kernel dimension {null_dim})")]
    NonUniqueMinimizer { null_dim: usize },

    #[error("reference model does not label the sample with unit margin (min margin {min_margin})")]
    InvalidReference { min_margin: f64 },

    #[error("experiment construction bug: {0}")]
    Construction(String),

    #[error("report serialization failed: {0}")]
    Serialization(String),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularMatrix { .. }
            | Error::NearSingularKernel { .. }
            | Error::EigenNonConvergence
            | Error::NonConvergence { .. }
            | Error::InfeasiblePrimal { .. }
            | Error::Construction(_) => true,
            Error::LooSubproblem { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
