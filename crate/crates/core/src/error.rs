use thiserror::Error;

use crate::assembly::PdReport;

/// Errors raised by the estimator and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: column `{column}` has zero variance")]
    DegenerateColumn { column: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid precision matrix: {0}")]
    InvalidPrecision(String),

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "constructed precision matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e}); \
         use smaller band values"
    )]
    NonPdConstruction { min_eigenvalue: f64 },

    #[error("sampler diverged at iteration {iteration}")]
    SamplerDivergence { iteration: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate residual variance for node {node}")]
    DegenerateResidual { node: usize },

    #[error("positive-definite correction did not converge after {} iterations", report.iterations)]
    PdNonConvergence { report: PdReport },

    #[error("log predictive density underflow at observation {observation}")]
    Underflow { observation: usize },

    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) | Error::Dimension(_) => ErrorClass::Usage,
            Error::DegenerateColumn { .. }
            | Error::InvalidData(_)
            | Error::InvalidPrecision(_)
            | Error::Csv(_)
            | Error::Io(_) => ErrorClass::Data,
            Error::Singular
            | Error::NonPdConstruction { .. }
            | Error::SamplerDivergence { .. }
            | Error::DegenerateResidual { .. }
            | Error::PdNonConvergence { .. }
            | Error::Underflow { .. } => ErrorClass::Numerical,
            Error::Node { source, .. } => source.class(),
        }
    }

    pub(crate) fn at_node(self, node: usize) -> Error {
        match self {
            e @ Error::Node { .. } => e,
            e => Error::Node {
                node,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
