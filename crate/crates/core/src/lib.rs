//! Rate functions and codebook simulations for lossy compression with
//! mismatched random codebooks.
//!
//! The crate centers on one question: when an i.i.d. source is compressed by
//! scanning a randomly generated codebook for the first word within target
//! distortion, what rate does the scheme achieve, and how does it decompose
//! into the best rate achievable at that codeword marginal plus a divergence
//! penalty for generating the codebook from the wrong law?
//!
//! Modules:
//! - [`distributions`]: source models and codeword laws (finite, Gaussian,
//!   exponential-family), with validated constructors and seeded samplers.
//! - [`distortion`]: single-letter distortion measures and their extremes.
//! - [`ratefn`]: the tilted-channel rate function, its Gaussian closed form,
//!   the constrained mutual-information lower bound, and asymptotic helpers.
//! - [`codec`]: codebook scanning, match-index coding, and the empirical
//!   estimators for match statistics.
//! - [`oracle`]: slow, independent reference solvers used to validate the
//!   fast paths in tests.
//!
//! Everything numeric is generic over [`Scalar`]; the `Real` alias pins the
//! default `f64` precision that the documented tolerances assume.


pub mod distortion;
pub mod distributions;
pub mod error;
pub mod numeric;
pub mod oracle;
pub mod ratefn;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type; all documented tolerances assume this precision.
pub type Real = f64;
