//! Extended-precision spectra of zonal integral operators on the m-dimensional unit sphere.
//!
//! The crate computes condensed Legendre expansions of zonal positive definite kernels,
//! the eigenvalue/singular-value sequences of the integral operators they generate, and
//! numerical witnesses for their super-exponential decay: bound envelopes, weighted series
//! convergence verdicts, an exact-product singular-value chain, and an independent Nystrom
//! cross-check on S^2.

pub mod decay;
pub mod error;
pub mod harmonics;
pub mod kernels;
pub mod oracle;
pub mod real;
pub mod spectra;

pub use error::{Error, Result};
pub use real::{Decimal, Real, DEFAULT_PRECISION, MIN_PRECISION};
