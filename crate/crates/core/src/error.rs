use thiserror::Error;

/// Errors produced by the imaging, noise, reduction and gain routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("object dimensions {width}x{height} are not divisible by bin factor {bin_factor}")]
    NonDivisibleGeometry {
        width: usize,
        height: usize,
        bin_factor: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("at least 2 samples are required, got {0}")]
    InsufficientSamples(usize),

    #[error(
        "box projection did not converge: KKT residual {residual:e} after {iterations} iterations"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("problem is infeasible: {0}")]
    InfeasibleProblem(&'static str),

    #[error("bisection failed: {0}")]
    BisectionFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
