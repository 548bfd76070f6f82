//! Dynamic sum-product networks over sequences of discrete variables.
//!
//! The crate is `no_std` and only needs `alloc`. It covers:
//!
//! * [`spn`]: static sum-product networks, scope analysis, validity checks,
//!   log-space evaluation and differentiation.
//! * [`dspn`]: bottom/template/top networks, the template invariance check,
//!   verification of the stacking validity premises, unrolling, rolling
//!   evaluation over sequences of any length, and ancestral sampling.
//! * [`partition`]: restricted-growth-string enumeration of set partitions and
//!   independence-driven scope splitting.
//! * [`learn`]: EM / gradient parameter learning with parameter tying and the
//!   anytime search-and-score structure learner.
//! * [`hmm`]: a discrete HMM used as data generator and exactness oracle.
//!
//! File formats, discretization, the benchmark harness and the command line
//! live in the std companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod dspn;
mod error;
pub mod hmm;
pub mod learn;
pub mod logspace;
pub mod partition;
pub mod spn;

pub use error::{Error, Result};
