//! Crate-wide error type.
//!
//! Errors split into two families: *validation* errors, meaning the inputs
//! themselves are malformed or out of range, and *runtime* errors, meaning a
//! well-posed computation could not be completed (budget exhausted, iteration
//! failed to converge, sampled data degenerate). The CLI maps the families to
//! distinct exit codes.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed model: bad probability vectors, non-stochastic rows,
    /// non-integrable densities, invalid parameters.
    #[error("invalid model: {0}")]
    Model(String),

    /// Input outside the mathematical domain of the requested operation,
    /// e.g. a positive tilt passed to the log-MGF or a target distortion
    /// outside the open interval where the rate is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested enumeration exceeds the hard size guard.
    #[error("size guard exceeded: needed {needed} but the limit is {limit} ({what})")]
    SizeGuard {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    /// A search ran out of its computation budget before finishing.
    #[error("budget exhausted: {0}")]
    Budget(String),

    /// Sampled data carries no usable information, e.g. every trial of an
    /// empirical study was truncated.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Malformed serialized data (bitstreams, CSV tables).
    #[error("format error: {0}")]
    Format(String),

    /// An iterative routine failed to converge or a bracket could not be
    /// established.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Operation defined by the theory only for certain variants, e.g.
    /// max-entropy machinery outside squared error / first power.
    #[error("not implemented: {0}")]
    Unsupported(String),

    /// Malformed experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True when the error reflects malformed input rather than a failure of
    /// an otherwise well-posed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Model(_) | Error::Domain(_) | Error::Config(_) | Error::SizeGuard { .. }
        )
    }
}

/// Checks a size guard, returning `Err` when `needed` exceeds `limit`.
pub fn guard_size(what: &'static str, needed: u128, limit: u128) -> Result<()> {
    if needed > limit {
        Err(Error::SizeGuard {
            what,
            needed,
            limit,
        })
    } else {
        Ok(())
    }
}
