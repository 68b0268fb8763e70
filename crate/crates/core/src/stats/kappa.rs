use std::fmt;

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Landis-Koch agreement band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KappaBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl KappaBand {
    /// Bare band name, e.g. `Substantial`.
    pub fn name(self) -> &'static str {
        match self {
            KappaBand::Poor => "Poor",
            KappaBand::Slight => "Slight",
            KappaBand::Fair => "Fair",
            KappaBand::Moderate => "Moderate",
            KappaBand::Substantial => "Substantial",
            KappaBand::AlmostPerfect => "Almost perfect",
        }
    }

    /// Table text, e.g. `Substantial agreement`.
    pub fn label(self) -> &'static str {
        match self {
            KappaBand::Poor => "Poor agreement",
            KappaBand::Slight => "Slight agreement",
            KappaBand::Fair => "Fair agreement",
            KappaBand::Moderate => "Moderate agreement",
            KappaBand::Substantial => "Substantial agreement",
            KappaBand::AlmostPerfect => "Almost perfect agreement",
        }
    }
}

impl fmt::Display for KappaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Maps kappa onto the Landis-Koch scale; upper band edges are inclusive.
pub fn interpret_kappa(kappa: f64) -> Result<KappaBand, StatsError> {
    if !(-1.0..=1.0).contains(&kappa) {
        return Err(StatsError::KappaOutOfRange(kappa));
    }
    Ok(match kappa {
        k if k <= 0.0 => KappaBand::Poor,
        k if k <= 0.20 => KappaBand::Slight,
        k if k <= 0.40 => KappaBand::Fair,
        k if k <= 0.60 => KappaBand::Moderate,
        k if k <= 0.80 => KappaBand::Substantial,
        _ => KappaBand::AlmostPerfect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    /// Mean observed per-subject agreement.
    pub p_bar: f64,
    /// Chance agreement from the marginal category proportions.
    pub pe_bar: f64,
    pub interpretation: KappaBand,
    /// Chance agreement was 1 and kappa was set to 1 by convention.
    pub degenerate: bool,
}

/// Fleiss' kappa for an `N x K` table of per-subject category counts where
/// every row sums to `n_raters`.
pub fn fleiss_kappa<R: AsRef<[u64]>>(ratings: &[R], n_raters: u64) -> Result<KappaResult, StatsError> {
    if n_raters < 2 {
        return Err(StatsError::TooFewRaters(n_raters));
    }
    if ratings.is_empty() {
        return Err(StatsError::Empty);
    }
    let k = ratings[0].as_ref().len();
    if k == 0 {
        return Err(StatsError::TooFewCategories(0));
    }
    let n = n_raters as f64;
    let subjects = ratings.len() as f64;
    let mut column_totals = vec![0u64; k];
    let mut p_sum = 0.0;
    for (row_index, row) in ratings.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != k {
            return Err(StatsError::RaggedRow { row: row_index, len: row.len(), expected: k });
        }
        let sum: u64 = row.iter().sum();
        if sum != n_raters {
            return Err(StatsError::RowSum { row: row_index, sum, expected: n_raters });
        }
        let squares: u64 = row.iter().map(|c| c * c).sum();
        p_sum += (squares - n_raters) as f64 / (n * (n - 1.0));
        for (total, c) in column_totals.iter_mut().zip(row) {
            *total += c;
        }
    }
    let p_bar = p_sum / subjects;
    let pe_bar: f64 = column_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (subjects * n);
            p * p
        })
        .sum();

    let degenerate = pe_bar >= 1.0;
    let kappa = if degenerate { 1.0 } else { (p_bar - pe_bar) / (1.0 - pe_bar) };
    let interpretation = interpret_kappa(kappa.clamp(-1.0, 1.0))?;
    Ok(KappaResult { kappa, p_bar, pe_bar, interpretation, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_derived_negative_kappa() {
        let r = fleiss_kappa(&[[3, 0], [2, 1]], 3).unwrap();
        assert!((r.p_bar - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.pe_bar - 13.0 / 18.0).abs() < 1e-15);
        assert!((r.kappa + 0.2).abs() < 1e-9);
        assert_eq!(r.interpretation, KappaBand::Poor);
    }

    #[test]
    fn unanimous_rows_give_one() {
        let r = fleiss_kappa(&[[3, 0, 0, 0], [3, 0, 0, 0], [0, 3, 0, 0], [0, 3, 0, 0]], 3).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert!(!r.degenerate);
        assert_eq!(r.interpretation, KappaBand::AlmostPerfect);
    }

    #[test]
    fn single_category_is_degenerate() {
        let r = fleiss_kappa(&[[3, 0], [3, 0]], 3).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert!(r.degenerate);
    }

    #[test]
    fn row_sum_violation() {
        assert_eq!(
            fleiss_kappa(&[[3, 0], [1, 1]], 3),
            Err(StatsError::RowSum { row: 1, sum: 2, expected: 3 })
        );
        assert!(fleiss_kappa(&[[1, 0]], 1).is_err());
        assert!(fleiss_kappa::<[u64; 2]>(&[], 3).is_err());
    }

    #[test]
    fn interpretation_bands() {
        let cases = [
            (0.622, "Substantial agreement"),
            (0.520, "Moderate agreement"),
            (0.387, "Fair agreement"),
            (0.279, "Fair agreement"),
            (0.41, "Moderate agreement"),
            (0.40, "Fair agreement"),
            (0.0, "Poor agreement"),
            (-0.2, "Poor agreement"),
            (0.05, "Slight agreement"),
            (0.81, "Almost perfect agreement"),
            (1.0, "Almost perfect agreement"),
        ];
        for (k, label) in cases {
            assert_eq!(interpret_kappa(k).unwrap().label(), label, "kappa {k}");
        }
        assert!(interpret_kappa(1.5).is_err());
        assert!(interpret_kappa(f64::NAN).is_err());
    }
}
