use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("{what} did not converge after {terms} terms (partial value {partial:e})")]
    NonConvergence {
        what: &'static str,
        terms: usize,
        partial: f64,
    },

    #[error("cholesky factorization failed at leading minor {index} (pivot {pivot:e})")]
    Factorization { index: usize, pivot: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("price {price} violates the {bound} no-arbitrage bound")]
    OutOfBand { price: f64, bound: &'static str },

    #[error("empty sample")]
    EmptySample,

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
