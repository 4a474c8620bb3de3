//! Crate-wide error type and process exit-code mapping.
//!
//! Errors fall into three families that the command-line driver maps onto
//! distinct exit codes so scripts can tell them apart:
//!
//! * [`Error::Validation`] — bad arguments or configuration (exit 2),
//! * [`Error::Data`] — malformed or inconsistent input data, including I/O
//!   failures while reading it (exit 3),
//! * [`Error::Numeric`] — a numerical routine could not produce a reliable
//!   answer, e.g. a singular regression design (exit 4).

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments, detected before touching data.
    #[error("validation: {0}")]
    Validation(String),

    /// Input data is malformed, inconsistent, or insufficient.
    #[error("data: {0}")]
    Data(String),

    /// A numerical procedure failed (degenerate or singular inputs).
    #[error("numeric: {0}")]
    Numeric(String),

    /// Underlying I/O failure (treated as a data problem at the exit-code level).
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor for [`Error::Validation`].
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Convenience constructor for [`Error::Data`].
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Convenience constructor for [`Error::Numeric`].
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for this error: 2 validation, 3 data/io, 4 numeric.
    /// Success is 0 by convention.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_family() {
        assert_eq!(Error::validation("x").exit_code(), 2);
        assert_eq!(Error::data("x").exit_code(), 3);
        assert_eq!(
            Error::from(std::io::Error::new(std::io::ErrorKind::NotFound, "gone")).exit_code(),
            3
        );
        assert_eq!(Error::numeric("x").exit_code(), 4);
    }

    #[test]
    fn display_prefixes_name_the_family() {
        assert!(Error::validation("bad window").to_string().starts_with("validation:"));
        assert!(Error::data("bad row").to_string().starts_with("data:"));
        assert!(Error::numeric("singular").to_string().starts_with("numeric:"));
    }
}
