use std::path::PathBuf;

use crate::quantizer::ScalarQuantizer;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    /// Configuration document failed schema validation at `path` (a JSON-pointer-like field path).
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(
        "Lloyd-Max design for {bits} bits did not converge after {iterations} iterations \
         (relative MSE change {residual:e})"
    )]
    NonConvergence {
        bits: u32,
        iterations: usize,
        residual: f64,
        last: Box<ScalarQuantizer>,
    },

    #[error("channel matrix is singular or ill-conditioned (condition number {condition:e})")]
    Singular { condition: f64 },

    /// A closed-form rate or power expression left its domain of validity.
    #[error("closed-form approximation breaks down in {formula}: numerator {numerator}, denominator {denominator}")]
    ApproximationBreakdown {
        formula: &'static str,
        numerator: f64,
        denominator: f64,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code: 1 validation, 2 numerical breakdown, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config { .. } => 1,
            Error::NonConvergence { .. }
            | Error::Singular { .. }
            | Error::ApproximationBreakdown { .. } => 2,
            Error::Io { .. } => 3,
        }
    }
}
