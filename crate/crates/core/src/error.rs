use thiserror::Error;

/// Errors raised anywhere in the testing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A copula parameter lies outside the family's admissible range.
    #[error("parameter domain error: {0}")]
    Domain(String),

    /// Invalid run configuration (bandwidth, bootstrap count, grid size, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The data violate an assumption of the procedure (ties, non-finite values, too few rows).
    #[error("data error: {0}")]
    Data(String),

    /// A model specification string could not be parsed.
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
