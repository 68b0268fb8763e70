//! Statistics over stored records and the five report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{majority_vote, reliability, summarize, summarize_pooled, ConsensusError, ConsensusSummary};
use crate::model::{AgreementCategory, ChoiceLabel, ModelId, QuestionRecord, ANSWERS_PER_QUESTION};
use crate::stats::{
    bootstrap_ci, chi_square_uniform, fleiss_kappa, BootstrapResult, ChiSquareResult, KappaResult, StatsError,
};

/// p-values below this are reported as significant.
pub const SIGNIFICANCE_THRESHOLD: f64 = 0.01;

/// Row label of the pooled row covering every generator.
pub const POOLED_ROW: &str = "All generators";

pub const RELIABILITY_NOTE: &str = "Reliability compares the majority-vote consensus with the generating model's declared answer; the reported rate conditions on a consensus existing, and the unconditional rate counts no-consensus questions as misses.";
pub const CHI_SQUARE_NOTE: &str = "Chi-square is a goodness-of-fit test of the pooled answer choices (questions x answerers) against uniform selection over the four options, with 3 degrees of freedom.";
pub const KAPPA_NOTE: &str = "Kappa bands follow Landis and Koch: <= 0 poor, (0, 0.20] slight, (0.20, 0.40] fair, (0.40, 0.60] moderate, (0.60, 0.80] substantial, (0.80, 1] almost perfect.";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to analyze")]
    NoRecords,
    #[error("record {0} does not carry exactly three answers")]
    AnswerCount(String),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub seed: u64,
    pub bootstrap_samples: usize,
    pub level: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            bootstrap_samples: crate::stats::DEFAULT_BOOTSTRAP_SAMPLES,
            level: crate::stats::DEFAULT_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub bootstrap_samples: usize,
    pub level: f64,
    pub models: Vec<ModelId>,
    pub total_questions: usize,
    /// Exact number of analyzed questions per generator.
    pub questions_per_generator: Vec<(ModelId, usize)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorStats {
    pub generator: ModelId,
    pub summary: ConsensusSummary,
    pub bootstrap: BootstrapResult,
    pub chi_square: ChiSquareResult,
    pub kappa: KappaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub metadata: ReportMetadata,
    /// One row per generator, in order of first appearance, then the pooled row.
    pub rows: Vec<GeneratorStats>,
}

fn row_stats(
    generator: ModelId,
    summary: ConsensusSummary,
    records: &[&QuestionRecord],
    options: &AnalyzeOptions,
) -> Result<GeneratorStats, ReportError> {
    let full: Vec<bool> = records
        .iter()
        .map(|r| r.agreement().map(|a| a == AgreementCategory::Full))
        .collect::<Result<_, _>>()
        .map_err(ConsensusError::from)?;
    let bootstrap = bootstrap_ci(&full, options.bootstrap_samples, options.seed, options.level)?;

    let mut pooled = [0u64; ChoiceLabel::COUNT];
    let mut ratings = Vec::with_capacity(records.len());
    for r in records {
        let mut row = [0u64; ChoiceLabel::COUNT];
        for c in r.choices() {
            row[c.index()] += 1;
            pooled[c.index()] += 1;
        }
        ratings.push(row);
    }
    let chi_square = chi_square_uniform(&pooled, records.len() as u64, ANSWERS_PER_QUESTION as u64)?;
    let kappa = fleiss_kappa(&ratings, ANSWERS_PER_QUESTION as u64)?;
    Ok(GeneratorStats { generator, summary, bootstrap, chi_square, kappa })
}

/// Consensus summaries and statistics per generator plus a pooled row.
///
/// A pure function of `records` and `options`.
pub fn analyze(records: &[QuestionRecord], options: &AnalyzeOptions) -> Result<StatsReport, ReportError> {
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    if let Some(r) = records.iter().find(|r| r.answers.len() != ANSWERS_PER_QUESTION) {
        return Err(ReportError::AnswerCount(r.question.id.clone()));
    }
    let mut order: Vec<ModelId> = Vec::new();
    let mut groups: BTreeMap<&ModelId, Vec<&QuestionRecord>> = BTreeMap::new();
    let mut models: Vec<ModelId> = Vec::new();
    for r in records {
        let g = &r.question.generator;
        if !groups.contains_key(g) {
            order.push(g.clone());
        }
        groups.entry(g).or_default().push(r);
        for m in std::iter::once(g).chain(r.answers.iter().map(|a| &a.answerer)) {
            if !models.contains(m) {
                models.push(m.clone());
            }
        }
    }

    let mut rows = Vec::with_capacity(order.len() + 1);
    for g in &order {
        let group = &groups[g];
        let owned: Vec<QuestionRecord> = group.iter().map(|r| (*r).clone()).collect();
        let summary = summarize(&owned, g)?;
        rows.push(row_stats(g.clone(), summary, group, options)?);
    }
    let pooled_id = ModelId::new(POOLED_ROW).expect("non-empty");
    let all: Vec<&QuestionRecord> = records.iter().collect();
    let summary = summarize_pooled(records, &pooled_id)?;
    rows.push(row_stats(pooled_id, summary, &all, options)?);

    Ok(StatsReport {
        metadata: ReportMetadata {
            seed: options.seed,
            bootstrap_samples: options.bootstrap_samples,
            level: options.level,
            models,
            total_questions: records.len(),
            questions_per_generator: order.iter().map(|g| (g.clone(), groups[g].len())).collect(),
            notes: vec![RELIABILITY_NOTE.into(), CHI_SQUARE_NOTE.into(), KAPPA_NOTE.into()],
        },
        rows,
    })
}

/// Formats `num / den` as a percentage with one decimal, rounding half up.
pub fn format_percent(num: usize, den: usize) -> String {
    if den == 0 {
        return "n/a".into();
    }
    let (num, den) = (num as u128, den as u128);
    let tenths = (2000 * num + den) / (2 * den);
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// Fixed-point formatting with half-up rounding (away from zero on ties).
pub fn format_fixed(x: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    // the small offset absorbs binary representation error at exact ties
    let rounded = (x.abs() * scale + 0.5 + 1e-9).floor() / scale;
    let signed = if x < 0.0 && rounded != 0.0 { -rounded } else { rounded };
    format!("{signed:.decimals$}")
}

/// Scientific notation with three significant digits, e.g. `2.65e-5`.
pub fn format_p_value(p: f64) -> String {
    format!("{p:.2e}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub title: String,
    pub caption: Option<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footnotes: Vec<String>,
}

impl Table {
    fn new(title: &str, headers: &[&str]) -> Self {
        Self {
            title: title.into(),
            caption: None,
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            footnotes: Vec::new(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("## {}\n\n", self.title);
        if let Some(c) = &self.caption {
            out.push_str(c);
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "| {} |", self.headers.join(" | "));
        let _ = writeln!(out, "|{}", self.headers.iter().map(|_| "---|").collect::<String>());
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| markdown_cell(c)).collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        for f in &self.footnotes {
            let _ = write!(out, "\n{f}\n");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# {}\n", self.title);
        if let Some(c) = &self.caption {
            let _ = writeln!(out, "# {c}");
        }
        let line = |cells: &[String]| cells.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "{}", line(&self.headers));
        for row in &self.rows {
            let _ = writeln!(out, "{}", line(row));
        }
        for f in &self.footnotes {
            let _ = writeln!(out, "# {f}");
        }
        out
    }
}

fn markdown_cell(s: &str) -> String {
    s.replace('|', "\\|").replace(['\r', '\n'], " ")
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn build_consensus_table(summaries: &[ConsensusSummary]) -> Table {
    let mut t = Table::new(
        "Table 1. Consensus rates by question-generating model",
        &["Model", "N", "Full (%)", "Partial (%)", "None (%)"],
    );
    for s in summaries {
        t.rows.push(vec![
            s.generator.to_string(),
            s.n_questions.to_string(),
            format_percent(s.n_full, s.n_questions),
            format_percent(s.n_partial, s.n_questions),
            format_percent(s.n_none, s.n_questions),
        ]);
    }
    t
}

pub fn build_reliability_table(summaries: &[ConsensusSummary]) -> Table {
    let mut t = Table::new(
        "Table 2. Majority-vote consistency and alignment with the generating model",
        &["Model", "Majority Vote (%)", "Reliability (%)", "Reliability, all questions (%)"],
    );
    t.caption = Some(RELIABILITY_NOTE.into());
    for s in summaries {
        t.rows.push(vec![
            s.generator.to_string(),
            format_percent(s.n_consensus, s.n_questions),
            format_percent(s.n_reliable, s.n_consensus),
            format_percent(s.n_reliable, s.n_questions),
        ]);
    }
    // full + partial = majority holds by construction; rounding is the only way the
    // rendered values can disagree, so anything beyond 0.1 is a real inconsistency
    let mismatched: Vec<String> = summaries
        .iter()
        .filter(|s| {
            let parse = |n, d| format_percent(n, d).parse::<f64>().unwrap_or(f64::NAN);
            let lhs = parse(s.n_full, s.n_questions) + parse(s.n_partial, s.n_questions);
            let rhs = parse(s.n_consensus, s.n_questions);
            s.n_full + s.n_partial != s.n_consensus || (lhs - rhs).abs() > 0.1 + 1e-9
        })
        .map(|s| s.generator.to_string())
        .collect();
    t.footnotes.push(if mismatched.is_empty() {
        "Consistency check: Full + Partial equals Majority Vote for every row.".into()
    } else {
        format!("Consistency check FAILED for: {}", mismatched.join(", "))
    });
    t
}

pub fn build_ci_table(rows: &[(ModelId, BootstrapResult)]) -> Table {
    let level = rows.first().map(|(_, b)| b.level).unwrap_or(crate::stats::DEFAULT_LEVEL);
    let mut t = Table::new(
        &format!(
            "Table 3. Bootstrap {}% confidence intervals for full-agreement rates",
            format_fixed(level * 100.0, 0)
        ),
        &["Model", "Lower", "Upper", "Width"],
    );
    if let Some((_, b)) = rows.first() {
        t.caption = Some(format!(
            "Percentile bootstrap, {} resamples, seed {}, nearest-rank percentiles.",
            b.b_samples, b.seed
        ));
    }
    for (m, b) in rows {
        let lower = format_fixed(b.lower, 2);
        let upper = format_fixed(b.upper, 2);
        t.rows.push(vec![m.to_string(), lower, upper, format_fixed(b.width, 2)]);
    }
    t
}

pub fn build_chi_table(rows: &[(ModelId, ChiSquareResult)]) -> Table {
    let mut t = Table::new(
        &format!("Table 4. Chi-square test p-values (significance threshold: {SIGNIFICANCE_THRESHOLD})"),
        &["Model", "Chi-square", "df", "p-value", "Significant"],
    );
    t.caption = Some(CHI_SQUARE_NOTE.into());
    for (m, c) in rows {
        t.rows.push(vec![
            m.to_string(),
            format_fixed(c.statistic, 3),
            c.df.to_string(),
            format_p_value(c.p_value),
            if c.p_value < SIGNIFICANCE_THRESHOLD { "yes" } else { "no" }.into(),
        ]);
    }
    t
}

pub fn build_kappa_table(rows: &[(ModelId, KappaResult)]) -> Table {
    let mut t = Table::new(
        "Table 5. Fleiss' kappa values and agreement interpretations",
        &["Model", "Kappa", "Interpretation"],
    );
    for (m, k) in rows {
        t.rows.push(vec![m.to_string(), format_fixed(k.kappa, 3), k.interpretation.to_string()]);
    }
    let degenerate: Vec<String> = rows.iter().filter(|(_, k)| k.degenerate).map(|(m, _)| m.to_string()).collect();
    if !degenerate.is_empty() {
        t.footnotes.push(format!(
            "Chance agreement is 1 for {} (every answer used one option); kappa set to 1.",
            degenerate.join(", ")
        ));
    }
    t.footnotes.push(KAPPA_NOTE.into());
    t
}

/// One row per question for manual review: the key, every answer, and the outcome.
pub fn build_review_table(records: &[QuestionRecord]) -> Result<Table, ReportError> {
    let mut t = Table::new(
        "Question review",
        &["Question", "Generator", "Topic", "Subtopic", "Stem", "Declared", "Answers", "Agreement", "Consensus", "Matches key", "Explanation"],
    );
    for r in records {
        let outcome = majority_vote(&r.labelled_choices())?;
        let agreement = r.agreement().map_err(ConsensusError::from)?;
        let answers: Vec<String> = r.answers.iter().map(|a| format!("{}={}", a.answerer, a.choice)).collect();
        t.rows.push(vec![
            r.question.id.clone(),
            r.question.generator.to_string(),
            r.question.topic.clone(),
            r.question.subtopic.clone(),
            r.question.stem.clone(),
            r.question.declared_correct.to_string(),
            answers.join(" "),
            agreement.to_string(),
            outcome.consensus.map_or("-".to_string(), |c| c.to_string()),
            if reliability(&outcome, r.question.declared_correct) == 1 { "yes" } else { "no" }.into(),
            r.question.explanation.clone(),
        ]);
    }
    Ok(t)
}

impl StatsReport {
    pub fn tables(&self) -> [Table; 5] {
        let summaries: Vec<ConsensusSummary> = self.rows.iter().map(|r| r.summary.clone()).collect();
        let boot: Vec<_> = self.rows.iter().map(|r| (r.generator.clone(), r.bootstrap.clone())).collect();
        let chi: Vec<_> = self.rows.iter().map(|r| (r.generator.clone(), r.chi_square.clone())).collect();
        let kappa: Vec<_> = self.rows.iter().map(|r| (r.generator.clone(), r.kappa.clone())).collect();
        [
            build_consensus_table(&summaries),
            build_reliability_table(&summaries),
            build_ci_table(&boot),
            build_chi_table(&chi),
            build_kappa_table(&kappa),
        ]
    }

    fn metadata_pairs(&self) -> Vec<(&'static str, String)> {
        let m = &self.metadata;
        vec![
            ("seed", m.seed.to_string()),
            ("bootstrap_samples", m.bootstrap_samples.to_string()),
            ("level", m.level.to_string()),
            ("models", m.models.iter().map(ModelId::to_string).collect::<Vec<_>>().join(" ")),
            ("total_questions", m.total_questions.to_string()),
            (
                "questions_per_generator",
                m.questions_per_generator
                    .iter()
                    .map(|(g, n)| format!("{g}={n}"))
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
            (
                "rerun",
                format!(
                    "mcq-consensus analyze --records <DIR> --seed {} --bootstrap {} --level {}",
                    m.seed, m.bootstrap_samples, m.level
                ),
            ),
        ]
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Consensus validation report\n\n## Study metadata\n\n");
        for (k, v) in self.metadata_pairs() {
            let _ = writeln!(out, "- {k}: {v}");
        }
        for note in &self.metadata.notes {
            let _ = writeln!(out, "- {note}");
        }
        for t in self.tables() {
            out.push('\n');
            out.push_str(&t.to_markdown());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.metadata_pairs() {
            let _ = writeln!(out, "# {k}: {v}");
        }
        for note in &self.metadata.notes {
            let _ = writeln!(out, "# {note}");
        }
        for t in self.tables() {
            out.push('\n');
            out.push_str(&t.to_csv());
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Markdown => self.to_markdown(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Markdown,
    Csv,
}
