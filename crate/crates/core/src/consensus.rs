//! Majority and weighted voting over answer triples, the reliability indicator,
//! and per-generator consensus summaries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgreementCategory, ChoiceLabel, ModelError, ModelId, QuestionRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("answerer {0} voted more than once")]
    DuplicateAnswerer(ModelId),
    #[error("no answers to vote on")]
    NoAnswers,
    #[error("no weight configured for answerer {0}")]
    MissingWeight(ModelId),
    #[error("invalid weight {weight} for {model}: weights must be finite and non-negative")]
    InvalidWeight { model: ModelId, weight: f64 },
    #[error("every answerer has zero weight")]
    AllWeightsZero,
    #[error("cannot summarize an empty record list")]
    EmptyRecords,
    #[error("record {question_id} was generated by {found}, expected {expected}")]
    MixedGenerators { question_id: String, expected: ModelId, found: ModelId },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of a vote: the winning label, if any, plus raw per-label counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    pub consensus: Option<ChoiceLabel>,
    pub vote_counts: BTreeMap<ChoiceLabel, usize>,
}

impl ConsensusOutcome {
    pub fn has_consensus(&self) -> bool {
        self.consensus.is_some()
    }
}

fn tally(answers: &[(ModelId, ChoiceLabel)]) -> Result<BTreeMap<ChoiceLabel, usize>, ConsensusError> {
    if answers.is_empty() {
        return Err(ConsensusError::NoAnswers);
    }
    let mut seen = BTreeSet::new();
    let mut counts = BTreeMap::new();
    for (model, label) in answers {
        if !seen.insert(model) {
            return Err(ConsensusError::DuplicateAnswerer(model.clone()));
        }
        *counts.entry(*label).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Plurality vote: the label with a strictly maximal count of at least two wins.
pub fn majority_vote(answers: &[(ModelId, ChoiceLabel)]) -> Result<ConsensusOutcome, ConsensusError> {
    let vote_counts = tally(answers)?;
    let max = vote_counts.values().copied().max().unwrap_or(0);
    let mut leaders = vote_counts.iter().filter(|(_, &c)| c == max);
    let consensus = match (leaders.next(), leaders.next()) {
        (Some((&label, _)), None) if max >= 2 => Some(label),
        _ => None,
    };
    Ok(ConsensusOutcome { consensus, vote_counts })
}

/// Non-negative per-model vote weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VoteWeights(BTreeMap<ModelId, f64>);

impl VoteWeights {
    pub fn new(weights: BTreeMap<ModelId, f64>) -> Result<Self, ConsensusError> {
        for (model, &weight) in &weights {
            if !weight.is_finite() || weight < 0.0 {
                return Err(ConsensusError::InvalidWeight { model: model.clone(), weight });
            }
        }
        Ok(Self(weights))
    }

    pub fn uniform<'a>(models: impl IntoIterator<Item = &'a ModelId>) -> Self {
        Self(models.into_iter().map(|m| (m.clone(), 1.0)).collect())
    }

    pub fn get(&self, model: &ModelId) -> Option<f64> {
        self.0.get(model).copied()
    }
}

// Relative tolerance for deciding that two weight totals tie.
const WEIGHT_TIE_RTOL: f64 = 1e-12;

/// Weighted vote: the label with strictly maximal total weight wins; any tie at
/// the top yields no consensus.
pub fn weighted_vote(
    answers: &[(ModelId, ChoiceLabel)],
    weights: &VoteWeights,
) -> Result<ConsensusOutcome, ConsensusError> {
    let vote_counts = tally(answers)?;
    let mut totals: BTreeMap<ChoiceLabel, f64> = BTreeMap::new();
    let mut any_positive = false;
    for (model, label) in answers {
        let w = weights
            .get(model)
            .ok_or_else(|| ConsensusError::MissingWeight(model.clone()))?;
        any_positive |= w > 0.0;
        *totals.entry(*label).or_insert(0.0) += w;
    }
    if !any_positive {
        return Err(ConsensusError::AllWeightsZero);
    }
    let max = totals.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = WEIGHT_TIE_RTOL * max.abs();
    let mut leaders = totals.iter().filter(|(_, &w)| (max - w).abs() <= tol);
    let consensus = match (leaders.next(), leaders.next()) {
        (Some((&label, _)), None) => Some(label),
        _ => None,
    };
    Ok(ConsensusOutcome { consensus, vote_counts })
}

/// 1 when a consensus exists and equals the generator's declared answer, else 0.
pub fn reliability(outcome: &ConsensusOutcome, declared: ChoiceLabel) -> u8 {
    u8::from(outcome.consensus == Some(declared))
}

/// Aggregate consensus statistics for the questions of one generator.
///
/// Counts are kept alongside percentages so renderers can round exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSummary {
    pub generator: ModelId,
    pub n_questions: usize,
    pub n_full: usize,
    pub n_partial: usize,
    pub n_none: usize,
    /// Questions where a consensus formed.
    pub n_consensus: usize,
    /// Questions where the consensus equals the declared answer.
    pub n_reliable: usize,
    pub full_pct: f64,
    pub partial_pct: f64,
    pub none_pct: f64,
    pub majority_vote_pct: f64,
    /// Share of consensus answers that match the declared answer (questions
    /// without consensus are excluded from the denominator).
    pub reliability_pct: f64,
    /// Share of all questions whose consensus matches the declared answer.
    pub unconditional_reliability_pct: f64,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 * 100.0 / den as f64
    }
}

/// Summarizes records that all share `generator`.
pub fn summarize(
    records: &[QuestionRecord],
    generator: &ModelId,
) -> Result<ConsensusSummary, ConsensusError> {
    if records.is_empty() {
        return Err(ConsensusError::EmptyRecords);
    }
    let (mut full, mut partial, mut none, mut consensus, mut reliable) = (0, 0, 0, 0, 0);
    for record in records {
        if &record.question.generator != generator {
            return Err(ConsensusError::MixedGenerators {
                question_id: record.question.id.clone(),
                expected: generator.clone(),
                found: record.question.generator.clone(),
            });
        }
        match record.agreement()? {
            AgreementCategory::Full => full += 1,
            AgreementCategory::Partial => partial += 1,
            AgreementCategory::None => none += 1,
        }
        let outcome = majority_vote(&record.labelled_choices())?;
        if outcome.has_consensus() {
            consensus += 1;
        }
        reliable += usize::from(reliability(&outcome, record.question.declared_correct));
    }
    Ok(summary_from_counts(generator.clone(), full, partial, none, consensus, reliable))
}

/// Summarizes records regardless of generator (the pooled "all" row).
pub fn summarize_pooled(
    records: &[QuestionRecord],
    label: &ModelId,
) -> Result<ConsensusSummary, ConsensusError> {
    if records.is_empty() {
        return Err(ConsensusError::EmptyRecords);
    }
    let relabelled: Vec<QuestionRecord> = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.question.generator = label.clone();
            r
        })
        .collect();
    summarize(&relabelled, label)
}

fn summary_from_counts(
    generator: ModelId,
    full: usize,
    partial: usize,
    none: usize,
    consensus: usize,
    reliable: usize,
) -> ConsensusSummary {
    let n = full + partial + none;
    ConsensusSummary {
        generator,
        n_questions: n,
        n_full: full,
        n_partial: partial,
        n_none: none,
        n_consensus: consensus,
        n_reliable: reliable,
        full_pct: pct(full, n),
        partial_pct: pct(partial, n),
        none_pct: pct(none, n),
        majority_vote_pct: pct(consensus, n),
        reliability_pct: pct(reliable, consensus),
        unconditional_reliability_pct: pct(reliable, n),
    }
}
