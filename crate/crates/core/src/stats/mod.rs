//! Deterministic statistics: percentile bootstrap intervals, the chi-square
//! uniformity test with its own tail probability, and Fleiss' kappa.

mod bootstrap;
mod chi_square;
pub mod gamma;
mod kappa;

use thiserror::Error;

pub use bootstrap::{
    bootstrap_ci, nearest_rank, BootstrapResult, DEFAULT_BOOTSTRAP_SAMPLES, DEFAULT_LEVEL,
};
pub use chi_square::{chi_square_survival, chi_square_uniform, ChiSquareResult};
pub use kappa::{fleiss_kappa, interpret_kappa, KappaBand, KappaResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("bootstrap needs at least one resample")]
    NoResamples,
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    InvalidLevel(f64),
    #[error("need at least two categories, got {0}")]
    TooFewCategories(usize),
    #[error("observed counts sum to {observed}, expected {expected}")]
    CountMismatch { observed: u64, expected: u64 },
    #[error("need at least two raters, got {0}")]
    TooFewRaters(u64),
    #[error("row {row} has {len} categories, expected {expected}")]
    RaggedRow { row: usize, len: usize, expected: usize },
    #[error("row {row} sums to {sum}, expected {expected} raters")]
    RowSum { row: usize, sum: u64, expected: u64 },
    #[error("kappa {0} outside [-1, 1]")]
    KappaOutOfRange(f64),
}
