use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StatsError;

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Percentile bootstrap interval for the mean of 0/1 indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    /// Mean of the original sample.
    pub estimate: f64,
    pub b_samples: usize,
    pub seed: u64,
    pub level: f64,
}

/// Draws `b_samples` resamples with replacement, takes each resample's mean,
/// and returns the nearest-rank `(1-level)/2` and `1-(1-level)/2` percentiles.
pub fn bootstrap_ci(
    indicators: &[bool],
    b_samples: usize,
    seed: u64,
    level: f64,
) -> Result<BootstrapResult, StatsError> {
    let n = indicators.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if b_samples == 0 {
        return Err(StatsError::NoResamples);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel(level));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..b_samples)
        .map(|_| {
            let hits = (0..n).filter(|_| indicators[rng.gen_range(0..n)]).count();
            hits as f64 / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);

    let alpha = 1.0 - level;
    let lower = nearest_rank(&means, alpha / 2.0);
    let upper = nearest_rank(&means, 1.0 - alpha / 2.0);
    let estimate = indicators.iter().filter(|&&x| x).count() as f64 / n as f64;
    Ok(BootstrapResult {
        lower,
        upper,
        width: upper - lower,
        estimate,
        b_samples,
        seed,
        level,
    })
}

/// Nearest-rank percentile of sorted data: the value at rank `ceil(q * len)`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let len = sorted.len();
    // the epsilon absorbs representation error, e.g. 0.025 * 10000 = 250.00000000000003
    let rank = (q * len as f64 - 1e-9).ceil().clamp(1.0, len as f64) as usize;
    sorted[rank - 1]
}
