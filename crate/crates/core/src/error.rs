use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point outside the domain of the map or of an operation.
    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// An index (branch number, lag, step count) outside the supported range.
    #[error("{what} = {value} is outside the supported range {lo}..={hi}")]
    Range {
        what: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An iterative method failed to converge.
    #[error("{method} did not converge after {iterations} iterations (last change {residual:e})")]
    Numeric {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },
}
