use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: expected {expected}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// A non-finite input, or an exponent `|F·x/(R·T)|` beyond the overflow guard.
    #[error("domain error in {quantity}: argument {value} is non-finite or overflows the exponent guard")]
    Domain { quantity: &'static str, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure at t = {time:e} s: {source}")]
    Numeric { time: f64, source: Box<Error> },

    #[error("{context} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("sweep failed at {} frequencies (first at {:.6e} Hz: {})", .failures.len(), .failures[0].0, .failures[0].1)]
    Sweep { failures: Vec<(f64, Error)> },
}

impl Error {
    /// True for errors caused by bad inputs rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Config(_)
                | Error::LengthMismatch { .. }
                | Error::InsufficientData { .. }
        )
    }
}
