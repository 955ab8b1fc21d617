use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value {value} at point {point:?}")]
    NonFinite { value: f64, point: Vec<f64> },

    #[error("inverse back-substitution did not converge after {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("time-extent bracket exceeded the horizon {horizon}")]
    Horizon { horizon: f64 },

    #[error("stencil at {point:?} leaves the declared domain")]
    StencilOutsideDomain { point: Vec<f64> },

    #[error("curve left the domain at time {time}")]
    DomainExit { time: f64, point: Vec<f64> },

    #[error("singular controllability Gramian")]
    SingularGramian,

    #[error("malformed specification: {0}")]
    Spec(String),

    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config {
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        }
    }
}
