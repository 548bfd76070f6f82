//! File formats, discretization, the benchmark harness and the command line
//! for dynamic sum-product networks. The models and algorithms live in
//! `dspn-core`.

pub mod bench;
pub mod cli;
pub mod discretize;
pub mod format;
pub mod seqs;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: sequence {sequence}, slice {slice}, variable {var}: value {value} out of range")]
    Arity { line: usize, sequence: usize, slice: usize, var: usize, value: i64 },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] dspn_core::Error),
}

/// Thread count for parallel work, from `DSPN_THREADS` (0 or unset: one per
/// core).
pub const THREADS_ENV: &str = "DSPN_THREADS";

pub fn configured_threads() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(0)
}
