//! Independent reference computations used to check the library.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gamma(df/2), exact for integer and half-integer arguments.
pub fn half_integer_gamma(df: u32) -> f64 {
    if df.is_multiple_of(2) {
        // (m-1)!
        (1..df / 2).map(f64::from).product()
    } else {
        // Gamma(m + 1/2) = sqrt(pi) * prod_{j=1..m} (j - 1/2)
        let m = (df - 1) / 2;
        PI.sqrt() * (1..=m).map(|j| f64::from(j) - 0.5).product::<f64>()
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Upper tail of the chi-square distribution by direct integration of the density.
///
/// Substituting t = u^2 removes the singularity at 0 for df = 1:
/// the integrand becomes 2 u^(df-1) exp(-u^2/2) / (2^(df/2) Gamma(df/2)).
pub fn chi_square_tail_oracle(x: f64, df: u32) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let norm = 2f64.powf(f64::from(df) / 2.0) * half_integer_gamma(df);
    let density = move |u: f64| 2.0 * u.powi(df as i32 - 1) * (-u * u / 2.0).exp() / norm;
    let lo = x.sqrt();
    let hi = lo + 40.0;
    // split the range so the adaptive scheme sees the peak
    let mid = lo.max((f64::from(df) - 1.0).max(0.0).sqrt()) + 5.0;
    let tail = |tol: f64| integrate(&density, lo, mid, tol) + integrate(&density, mid, hi, tol);
    // second pass with a tolerance relative to the first estimate
    let rough = tail(1e-12);
    tail((rough * 1e-11).max(1e-300))
}

/// Fleiss' kappa by enumerating every ordered pair of distinct raters.
pub fn brute_force_kappa(rows: &[Vec<u64>]) -> Option<f64> {
    let k = rows[0].len();
    let mut agreement = 0.0;
    let mut totals = vec![0u64; k];
    let mut all = 0u64;
    for row in rows {
        let raters: Vec<usize> = row.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n as usize)).collect();
        let mut same = 0u64;
        let mut pairs = 0u64;
        for i in 0..raters.len() {
            for j in 0..raters.len() {
                if i != j {
                    pairs += 1;
                    same += u64::from(raters[i] == raters[j]);
                }
            }
        }
        agreement += same as f64 / pairs as f64;
        for &c in &raters {
            totals[c] += 1;
            all += 1;
        }
    }
    let p_bar = agreement / rows.len() as f64;
    let pe: f64 = totals.iter().map(|&t| (t as f64 / all as f64).powi(2)).sum();
    if pe >= 1.0 {
        return None;
    }
    Some((p_bar - pe) / (1.0 - pe))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|j| ((n - k + j) as f64).ln() - (j as f64).ln()).sum()
}

/// Exact quantile of `Binomial(n, p) / n`: the smallest k/n with CDF >= q.
///
/// The bootstrap distribution of a 0/1 sample mean is exactly this law with
/// p equal to the sample mean, so percentile intervals should approach it.
pub fn binomial_mean_quantile(n: u64, p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mut cdf = 0.0;
    for k in 0..=n {
        cdf += (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp();
        if cdf >= q {
            return k as f64 / n as f64;
        }
    }
    1.0
}

/// Agreement category of a triple by counting distinct values.
pub fn distinct_category(triple: [usize; 3]) -> &'static str {
    let mut v = triple.to_vec();
    v.sort_unstable();
    v.dedup();
    match v.len() {
        1 => "full",
        2 => "partial",
        _ => "none",
    }
}

/// Plurality winner of a triple when one value occurs at least twice.
pub fn plurality(triple: [usize; 3]) -> Option<usize> {
    (0..4).find(|c| triple.iter().filter(|&&x| x == *c).count() >= 2)
}

use std::collections::BTreeMap;
use std::path::Path;

use mcq_consensus::agents::scripted::scripted_declared;
use mcq_consensus::agents::ScriptedBehavior;
use mcq_consensus::orchestrator::{BackendSpec, Study};
use mcq_consensus::{ChoiceLabel, StudyConfig};

/// Four scripted agents writing into `dir`, with a small bootstrap for speed.
pub fn scripted_config(dir: &Path, seed: u64, questions: usize) -> StudyConfig {
    let mut c = StudyConfig::scripted_default(seed, questions);
    c.records_dir = dir.join("records");
    c.report_path = dir.join("report.md");
    c
}

/// A study in which the gemini block of 100 questions has exactly 74 full,
/// 22 partial and 4 no-agreement outcomes, every consensus matching the key.
pub fn gemini_shaped_config(dir: &Path, seed: u64) -> StudyConfig {
    let mut c = scripted_config(dir, seed, 100);
    let gemini_seed = match &c.models[0].backend {
        BackendSpec::Scripted { seed, .. } => *seed,
        BackendSpec::Http(_) => unreachable!(),
    };
    assert_eq!(c.models[0].id.as_str(), "gemini");
    let mut tables: Vec<BTreeMap<String, ChoiceLabel>> = vec![BTreeMap::new(); 3];
    for i in 0..100 {
        let id = Study::question_id(&c.models[0].id, i);
        let declared = scripted_declared(gemini_seed, &id);
        let others: Vec<ChoiceLabel> = ChoiceLabel::ALL.into_iter().filter(|l| *l != declared).collect();
        let triple = match i {
            0..=73 => [declared, declared, declared],
            // rotate which answerer dissents
            74..=95 => {
                let mut t = [declared; 3];
                t[i % 3] = others[i % 3];
                t
            }
            _ => [others[0], others[1], others[2]],
        };
        for (table, label) in tables.iter_mut().zip(triple) {
            table.insert(id.clone(), label);
        }
    }
    for (spec, answers) in c.models[1..].iter_mut().zip(tables) {
        let p = match &spec.backend {
            BackendSpec::Scripted { behavior: ScriptedBehavior::Stochastic { p_declared }, .. } => *p_declared,
            _ => unreachable!(),
        };
        if let BackendSpec::Scripted { behavior, .. } = &mut spec.backend {
            *behavior = ScriptedBehavior::Table { answers, fallback_p_declared: Some(p) };
        }
    }
    c
}
