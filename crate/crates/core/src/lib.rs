//! Discrete Bayesian-network inference: exact variable elimination,
//! likelihood-weighting sampling, and an amortized posterior approximator
//! built from a dense relu network with a per-variable softmax head.
//!
//! The crate is `no_std` and only needs `alloc`. File IO, timing and the
//! command-line front end live in the `bnsurrogate` crate.

#![no_std]
// NaN-rejecting checks are written as `!(x >= 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bif;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exact;
pub mod network;
pub mod nn;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use network::{Evidence, Network, PosteriorSet};
