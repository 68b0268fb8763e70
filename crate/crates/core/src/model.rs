//! Domain types shared across the pipeline: model identities, the topic map,
//! questions, answer submissions, assembled question records, and the
//! three-way agreement categories.
//!
//! Everything here is an immutable value type. Serialization lives in
//! [`crate::store`]; the types derive serde so the store can write them as-is.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Number of answers a [`QuestionRecord`] carries.
pub const ANSWERS_PER_QUESTION: usize = 3;

/// Unknown fields captured on read and written back unchanged.
pub type ExtraFields = BTreeMap<String, Value>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("model id must be non-empty")]
    EmptyModelId,
    #[error("invalid choice label {0:?}, expected one of A, B, C, D")]
    InvalidLabel(String),
    #[error("expected {expected} labels, got {actual}")]
    WrongArity { expected: usize, actual: usize },
    #[error("topic map: {0}")]
    TopicMap(String),
    #[error("topic not found: {0}")]
    TopicNotFound(String),
    #[error("subtopic {subtopic:?} not found under topic {topic:?}")]
    SubtopicNotFound { topic: String, subtopic: String },
}

/// Short identifier of a participating model, e.g. `gpt-4` or `claude`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelId(String);

impl ModelId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(ModelError::EmptyModelId);
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ModelId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ModelId> for String {
    fn from(id: ModelId) -> Self {
        id.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ModelId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// One of the four option labels.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum ChoiceLabel {
    A,
    B,
    C,
    D,
}

impl ChoiceLabel {
    pub const ALL: [ChoiceLabel; 4] = [ChoiceLabel::A, ChoiceLabel::B, ChoiceLabel::C, ChoiceLabel::D];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            ChoiceLabel::A => 'A',
            ChoiceLabel::B => 'B',
            ChoiceLabel::C => 'C',
            ChoiceLabel::D => 'D',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(ChoiceLabel::A),
            'B' => Some(ChoiceLabel::B),
            'C' => Some(ChoiceLabel::C),
            'D' => Some(ChoiceLabel::D),
            _ => None,
        }
    }
}

impl fmt::Display for ChoiceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for ChoiceLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let mut chars = trimmed.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_char(c).ok_or_else(|| ModelError::InvalidLabel(s.to_string())),
            _ => Err(ModelError::InvalidLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub subtopics: Vec<String>,
}

/// Concept map of topics and their subtopics that question generation samples from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicMap {
    pub topics: Vec<Topic>,
}

const DEFAULT_TOPICS: &str = include_str!("../data/topics.json");

impl TopicMap {
    pub fn new(topics: Vec<Topic>) -> Result<Self, ModelError> {
        let map = Self { topics };
        map.check()?;
        Ok(map)
    }

    /// The ten probability topics shipped with the crate.
    pub fn default_probability() -> Self {
        Self::from_json(DEFAULT_TOPICS).expect("bundled topic map is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let map: TopicMap =
            serde_json::from_str(text).map_err(|e| ModelError::TopicMap(e.to_string()))?;
        map.check()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::TopicMap(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.topics.is_empty() {
            return Err(ModelError::TopicMap("no topics".into()));
        }
        let mut seen = BTreeSet::new();
        for topic in &self.topics {
            if topic.name.trim().is_empty() {
                return Err(ModelError::TopicMap("empty topic name".into()));
            }
            if !seen.insert(topic.name.as_str()) {
                return Err(ModelError::TopicMap(format!("duplicate topic {:?}", topic.name)));
            }
            if topic.subtopics.is_empty() {
                return Err(ModelError::TopicMap(format!("topic {:?} has no subtopics", topic.name)));
            }
            if topic.subtopics.iter().any(|s| s.trim().is_empty()) {
                return Err(ModelError::TopicMap(format!(
                    "topic {:?} has an empty subtopic",
                    topic.name
                )));
            }
        }
        Ok(())
    }

    pub fn topic(&self, name: &str) -> Option<&Topic> {
        self.topics.iter().find(|t| t.name == name)
    }

    /// Checks that `(topic, subtopic)` is present in the map.
    pub fn require(&self, topic: &str, subtopic: &str) -> Result<(), ModelError> {
        let t = self
            .topic(topic)
            .ok_or_else(|| ModelError::TopicNotFound(topic.to_string()))?;
        if t.subtopics.iter().any(|s| s == subtopic) {
            Ok(())
        } else {
            Err(ModelError::SubtopicNotFound {
                topic: topic.to_string(),
                subtopic: subtopic.to_string(),
            })
        }
    }

    /// All `(topic, subtopic)` pairs in map order.
    pub fn pairs(&self) -> Vec<(&str, &str)> {
        self.topics
            .iter()
            .flat_map(|t| t.subtopics.iter().map(move |s| (t.name.as_str(), s.as_str())))
            .collect()
    }
}

impl Default for TopicMap {
    fn default() -> Self {
        Self::default_probability()
    }
}

/// A generated multiple-choice question.
///
/// `declared_correct` and `explanation` are generator-private: they are stored
/// for analysis but never rendered into answer-phase prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub generator: ModelId,
    pub topic: String,
    pub subtopic: String,
    pub stem: String,
    pub options: BTreeMap<ChoiceLabel, String>,
    pub declared_correct: ChoiceLabel,
    pub explanation: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    #[serde(flatten, default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: ExtraFields,
}

impl Question {
    pub fn option(&self, label: ChoiceLabel) -> Option<&str> {
        self.options.get(&label).map(String::as_str)
    }

    /// Invariant violations of the question on its own.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push(Violation::EmptyQuestionId);
        }
        if self.stem.trim().is_empty() {
            out.push(Violation::EmptyStem);
        }
        for label in ChoiceLabel::ALL {
            match self.options.get(&label) {
                None => out.push(Violation::MissingOption(label)),
                Some(text) if text.trim().is_empty() => out.push(Violation::EmptyOption(label)),
                Some(_) => {}
            }
        }
        out
    }
}

/// One answering model's choice and justification for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSubmission {
    pub question_id: String,
    pub answerer: ModelId,
    pub choice: ChoiceLabel,
    pub justification: String,
    pub latency_ms: u64,
    /// Verbatim model output.
    pub raw: String,
    #[serde(flatten, default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: ExtraFields,
}

/// A question bundled with the answers of the three answering models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question: Question,
    pub answers: Vec<AnswerSubmission>,
}

impl QuestionRecord {
    pub fn choices(&self) -> Vec<ChoiceLabel> {
        self.answers.iter().map(|a| a.choice).collect()
    }

    pub fn labelled_choices(&self) -> Vec<(ModelId, ChoiceLabel)> {
        self.answers.iter().map(|a| (a.answerer.clone(), a.choice)).collect()
    }

    pub fn agreement(&self) -> Result<AgreementCategory, ModelError> {
        categorize_agreement(&self.choices())
    }
}

/// Record-level invariant breach reported by [`validate_record`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyQuestionId,
    EmptyStem,
    MissingOption(ChoiceLabel),
    EmptyOption(ChoiceLabel),
    WrongAnswerCount(usize),
    GeneratorAnswered(ModelId),
    DuplicateAnswerer(ModelId),
    ForeignAnswer { answerer: ModelId, question_id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyQuestionId => write!(f, "empty question id"),
            Violation::EmptyStem => write!(f, "empty question stem"),
            Violation::MissingOption(l) => write!(f, "missing option {l}"),
            Violation::EmptyOption(l) => write!(f, "empty option {l}"),
            Violation::WrongAnswerCount(n) => {
                write!(f, "expected {ANSWERS_PER_QUESTION} answers, found {n}")
            }
            Violation::GeneratorAnswered(m) => write!(f, "generator answered own question ({m})"),
            Violation::DuplicateAnswerer(m) => write!(f, "duplicate answerer {m}"),
            Violation::ForeignAnswer { answerer, question_id } => {
                write!(f, "answer from {answerer} references question {question_id}")
            }
        }
    }
}

/// Returns every invariant violation in `record`; an empty list means the record is well-formed.
pub fn validate_record(record: &QuestionRecord) -> Vec<Violation> {
    let q = &record.question;
    let mut out = q.violations();
    if record.answers.len() != ANSWERS_PER_QUESTION {
        out.push(Violation::WrongAnswerCount(record.answers.len()));
    }
    let mut seen = BTreeSet::new();
    for answer in &record.answers {
        if answer.answerer == q.generator {
            out.push(Violation::GeneratorAnswered(answer.answerer.clone()));
        }
        if !seen.insert(&answer.answerer) {
            out.push(Violation::DuplicateAnswerer(answer.answerer.clone()));
        }
        if answer.question_id != q.id {
            out.push(Violation::ForeignAnswer {
                answerer: answer.answerer.clone(),
                question_id: answer.question_id.clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgreementCategory {
    Full,
    Partial,
    None,
}

impl fmt::Display for AgreementCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgreementCategory::Full => "full",
            AgreementCategory::Partial => "partial",
            AgreementCategory::None => "none",
        })
    }
}

/// Full when all three labels match, partial when exactly two do, none when all differ.
pub fn categorize_agreement(answers: &[ChoiceLabel]) -> Result<AgreementCategory, ModelError> {
    let [a, b, c] = answers else {
        return Err(ModelError::WrongArity {
            expected: ANSWERS_PER_QUESTION,
            actual: answers.len(),
        });
    };
    Ok(if a == b && b == c {
        AgreementCategory::Full
    } else if a == b || b == c || a == c {
        AgreementCategory::Partial
    } else {
        AgreementCategory::None
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn model(name: &str) -> ModelId {
        ModelId::new(name).unwrap()
    }

    pub fn question(id: &str, generator: &str, declared: ChoiceLabel) -> Question {
        Question {
            id: id.to_string(),
            generator: model(generator),
            topic: "Stochastic Processes".into(),
            subtopic: "Markov chains".into(),
            stem: format!("Stem of {id}?"),
            options: ChoiceLabel::ALL
                .iter()
                .map(|l| (*l, format!("option {l} of {id}")))
                .collect(),
            declared_correct: declared,
            explanation: format!("because {id}"),
            created_at: 0,
            extra: BTreeMap::new(),
        }
    }

    pub fn record(
        id: &str,
        generator: &str,
        declared: ChoiceLabel,
        answers: &[(&str, ChoiceLabel)],
    ) -> QuestionRecord {
        QuestionRecord {
            question: question(id, generator, declared),
            answers: answers
                .iter()
                .map(|(m, c)| AnswerSubmission {
                    question_id: id.to_string(),
                    answerer: model(m),
                    choice: *c,
                    justification: format!("{m} picks {c}"),
                    latency_ms: 0,
                    raw: format!("Answer: {c}"),
                    extra: BTreeMap::new(),
                })
                .collect(),
        }
    }
}
