//! Error type shared across the crate.
//!
//! Densities follow the support convention: a point outside the support
//! yields `-inf`, not an error. Errors are reserved for NaN propagation,
//! dimension mismatches, failed factorizations and capability violations.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {term}: {value}")]
    NonFinite { term: String, value: f64 },

    #[error("Cholesky factorization failed for {what}")]
    CholeskyFailed { what: String },

    #[error("gradient requested outside the support of the target")]
    OutsideSupport,

    #[error("modified Bessel argument overflow: |z| = {arg:e}")]
    BesselOverflow { arg: f64 },

    #[error("total weight collapse: all log-weights are -inf")]
    WeightCollapse,

    #[error("fixed-point iteration diverged: iterate norm {norm:e} exceeds 10x start")]
    FixedPointDiverged { norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("kernel failed at time step {step}: {source}")]
    TimeStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the time-step index where it occurred.
    pub fn at_step(self, step: usize) -> Error {
        Error::TimeStep {
            step,
            source: Box::new(self),
        }
    }

    /// Checks a computed log-density value: NaN or +inf is an error naming
    /// the offending term, -inf is a legal out-of-support value.
    pub fn check_log_density(value: f64, term: &str) -> Result<f64> {
        if value.is_nan() || value == f64::INFINITY {
            Err(Error::NonFinite {
                term: term.to_string(),
                value,
            })
        } else {
            Ok(value)
        }
    }
}
