//! Covariance-assisted learning under instance-dependent label noise.
//!
//! The crate has two halves that check each other:
//!
//! * an exact [`oracle`] over finite discrete worlds, used to verify the
//!   peer-loss decoupling identities and worst-case bounds to floating-point
//!   precision, and
//! * a small training stack — [`noise`] synthesis, [`data`] generation,
//!   the [`loss`] family with analytic gradients, an [`model`] MLP with
//!   manual backprop, the sample [`sieve`], and the two-stage [`pipeline`] —
//!   whose estimators are tested against the oracle.

// Index loops over parallel arrays are the clearest form for the matrix
// and probability code here.
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod sieve;

pub use error::{CalError, Result};
pub use matrix::Matrix;
