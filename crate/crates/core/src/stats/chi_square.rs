use serde::{Deserialize, Serialize};

use super::gamma::gamma_q;
use super::StatsError;

/// Goodness-of-fit of pooled answer-choice counts against uniform selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
}

/// Upper-tail probability of the chi-square distribution, `Q(df/2, x/2)`.
pub fn chi_square_survival(x: f64, df: u32) -> f64 {
    assert!(df > 0, "chi-square needs at least one degree of freedom");
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(f64::from(df) / 2.0, x / 2.0)
}

/// Tests `observed` (one count per label) against the uniform expectation
/// `n_questions * n_answerers / K` with `K - 1` degrees of freedom.
pub fn chi_square_uniform(
    observed: &[u64],
    n_questions: u64,
    n_answerers: u64,
) -> Result<ChiSquareResult, StatsError> {
    let k = observed.len();
    if k < 2 {
        return Err(StatsError::TooFewCategories(k));
    }
    let total: u64 = observed.iter().sum();
    let expected_total = n_questions * n_answerers;
    if total != expected_total {
        return Err(StatsError::CountMismatch { observed: total, expected: expected_total });
    }
    if expected_total == 0 {
        return Err(StatsError::Empty);
    }
    let e = expected_total as f64 / k as f64;
    let statistic: f64 = observed
        .iter()
        .map(|&o| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let df = (k - 1) as u32;
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: chi_square_survival(statistic, df),
        observed: observed.to_vec(),
        expected: vec![e; k],
    })
}
