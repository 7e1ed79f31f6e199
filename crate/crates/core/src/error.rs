use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("{context}: matrix must be square, got {rows}x{cols}")]
    NotSquare {
        context: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("{context}: non-finite entry")]
    NonFinite { context: String },

    #[error("output matrix C_{index} is not symmetric (residual {residual:e} exceeds {limit:e})")]
    Asymmetric {
        index: usize,
        residual: f64,
        limit: f64,
    },

    #[error("stacked quadratic output matrix is zero")]
    ZeroQuadraticOutput,

    #[error("stage decomposition residual {residual:e} exceeds threshold {threshold:e} at stage {stage}")]
    DecompositionResidual {
        stage: usize,
        residual: f64,
        threshold: f64,
    },

    #[error("{0} is not positive definite (smallest eigenvalue {1:e})")]
    NotPositiveDefinite(&'static str, f64),

    #[error(
        "Riccati matrix lost positive definiteness at t = {t}: smallest eigenvalue {min_eig:e}"
    )]
    RiccatiIndefinite { t: f64, min_eig: f64 },

    #[error("non-finite state at t = {t} in {context}")]
    Diverged { t: f64, context: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed trace: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DecompositionResidual { .. }
                | Error::RiccatiIndefinite { .. }
                | Error::Diverged { .. }
        )
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }
}
