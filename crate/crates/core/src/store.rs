//! Append-only, line-delimited JSON record store.
//!
//! A store is a directory holding one object per line in each of:
//!
//! * `questions.jsonl`: [`Question`]s, including generator-private fields
//! * `answers.jsonl`: [`AnswerSubmission`]s, keyed by question id + answerer
//! * `records.jsonl`: [`RecordEntry`]s tying a question to its three answers
//!
//! plus the orchestrator's `audit.jsonl` and `answer_requests.jsonl` logs.
//! Existing lines are never rewritten; appends skip keys already present, which
//! makes resumed runs idempotent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::majority_vote;
use crate::model::{
    validate_record, AgreementCategory, AnswerSubmission, ChoiceLabel, ExtraFields, ModelId, Question,
    QuestionRecord,
};

pub const QUESTIONS_FILE: &str = "questions.jsonl";
pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const REQUESTS_FILE: &str = "answer_requests.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed line: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("record store integrity check failed:\n{}", format_issues(.0))]
    Integrity(Vec<IntegrityIssue>),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn format_issues(issues: &[IntegrityIssue]) -> String {
    issues.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub question_id: String,
    pub generator: ModelId,
    pub answerers: Vec<ModelId>,
    pub choices: Vec<ChoiceLabel>,
    pub agreement: AgreementCategory,
    pub consensus: Option<ChoiceLabel>,
    #[serde(flatten, default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: ExtraFields,
}

impl RecordEntry {
    pub fn from_record(record: &QuestionRecord) -> Result<Self, crate::model::ModelError> {
        let agreement = record.agreement()?;
        let consensus = majority_vote(&record.labelled_choices()).ok().and_then(|o| o.consensus);
        Ok(Self {
            question_id: record.question.id.clone(),
            generator: record.question.generator.clone(),
            answerers: record.answers.iter().map(|a| a.answerer.clone()).collect(),
            choices: record.choices(),
            agreement,
            consensus,
            extra: BTreeMap::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntegrityIssue {
    DuplicateQuestion(String),
    OrphanAnswer { question_id: String, answerer: ModelId },
    DuplicateAnswer { question_id: String, answerer: ModelId },
    DuplicateRecord(String),
    RecordMissingQuestion(String),
    RecordMissingAnswer { question_id: String, answerer: ModelId },
    RecordMismatch { question_id: String, detail: String },
    InvalidRecord { question_id: String, violation: String },
}

impl fmt::Display for IntegrityIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegrityIssue::DuplicateQuestion(id) => write!(f, "duplicate question {id}"),
            IntegrityIssue::OrphanAnswer { question_id, answerer } => {
                write!(f, "orphan answer by {answerer} for unknown question {question_id}")
            }
            IntegrityIssue::DuplicateAnswer { question_id, answerer } => {
                write!(f, "duplicate answer by {answerer} for question {question_id}")
            }
            IntegrityIssue::DuplicateRecord(id) => write!(f, "duplicate record for question {id}"),
            IntegrityIssue::RecordMissingQuestion(id) => write!(f, "record references unknown question {id}"),
            IntegrityIssue::RecordMissingAnswer { question_id, answerer } => {
                write!(f, "record for {question_id} references missing answer by {answerer}")
            }
            IntegrityIssue::RecordMismatch { question_id, detail } => {
                write!(f, "record for {question_id} disagrees with stored data: {detail}")
            }
            IntegrityIssue::InvalidRecord { question_id, violation } => {
                write!(f, "record for {question_id}: {violation}")
            }
        }
    }
}

/// Reads every line of a JSONL file; a missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            path: path.to_path_buf(),
            line: index + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Appends objects to a JSONL file, one per line.
pub fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    if items.is_empty() {
        return Ok(());
    }
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}

/// Everything currently on disk in a store directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreContents {
    pub questions: Vec<Question>,
    pub answers: Vec<AnswerSubmission>,
    pub entries: Vec<RecordEntry>,
}

impl StoreContents {
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        Ok(Self {
            questions: read_jsonl(&dir.join(QUESTIONS_FILE))?,
            answers: read_jsonl(&dir.join(ANSWERS_FILE))?,
            entries: read_jsonl(&dir.join(RECORDS_FILE))?,
        })
    }

    /// Referential and record-level invariant violations.
    pub fn integrity(&self) -> Vec<IntegrityIssue> {
        let mut issues = Vec::new();
        let mut questions = BTreeMap::new();
        for q in &self.questions {
            if questions.insert(q.id.as_str(), q).is_some() {
                issues.push(IntegrityIssue::DuplicateQuestion(q.id.clone()));
            }
        }
        let mut answers = BTreeMap::new();
        for a in &self.answers {
            if !questions.contains_key(a.question_id.as_str()) {
                issues.push(IntegrityIssue::OrphanAnswer {
                    question_id: a.question_id.clone(),
                    answerer: a.answerer.clone(),
                });
            }
            if answers.insert((a.question_id.as_str(), &a.answerer), a).is_some() {
                issues.push(IntegrityIssue::DuplicateAnswer {
                    question_id: a.question_id.clone(),
                    answerer: a.answerer.clone(),
                });
            }
        }
        let mut seen_records = BTreeSet::new();
        for e in &self.entries {
            if !seen_records.insert(e.question_id.as_str()) {
                issues.push(IntegrityIssue::DuplicateRecord(e.question_id.clone()));
            }
            let Some(question) = questions.get(e.question_id.as_str()) else {
                issues.push(IntegrityIssue::RecordMissingQuestion(e.question_id.clone()));
                continue;
            };
            let mut record_answers = Vec::new();
            for m in &e.answerers {
                match answers.get(&(e.question_id.as_str(), m)) {
                    Some(a) => record_answers.push((*a).clone()),
                    None => issues.push(IntegrityIssue::RecordMissingAnswer {
                        question_id: e.question_id.clone(),
                        answerer: m.clone(),
                    }),
                }
            }
            if record_answers.len() != e.answerers.len() {
                continue;
            }
            let record = QuestionRecord { question: (*question).clone(), answers: record_answers };
            for v in validate_record(&record) {
                issues.push(IntegrityIssue::InvalidRecord {
                    question_id: e.question_id.clone(),
                    violation: v.to_string(),
                });
            }
            if let Some(detail) = entry_mismatch(e, &record) {
                issues.push(IntegrityIssue::RecordMismatch { question_id: e.question_id.clone(), detail });
            }
        }
        issues
    }

    /// Joins entries with their question and answers, in record-file order.
    /// Fails with every integrity issue if the store is inconsistent.
    pub fn records(&self) -> Result<Vec<QuestionRecord>, StoreError> {
        let issues = self.integrity();
        if !issues.is_empty() {
            return Err(StoreError::Integrity(issues));
        }
        let questions: BTreeMap<&str, &Question> = self.questions.iter().map(|q| (q.id.as_str(), q)).collect();
        let answers: BTreeMap<(&str, &ModelId), &AnswerSubmission> =
            self.answers.iter().map(|a| ((a.question_id.as_str(), &a.answerer), a)).collect();
        Ok(self
            .entries
            .iter()
            .map(|e| QuestionRecord {
                question: questions[e.question_id.as_str()].clone(),
                answers: e
                    .answerers
                    .iter()
                    .map(|m| answers[&(e.question_id.as_str(), m)].clone())
                    .collect(),
            })
            .collect())
    }
}

fn entry_mismatch(entry: &RecordEntry, record: &QuestionRecord) -> Option<String> {
    if entry.generator != record.question.generator {
        return Some(format!("generator {} vs {}", entry.generator, record.question.generator));
    }
    if entry.choices != record.choices() {
        return Some("choices differ from stored answers".into());
    }
    match record.agreement() {
        Ok(a) if a != entry.agreement => Some(format!("agreement {} vs {a}", entry.agreement)),
        _ => None,
    }
}

/// Reads and joins all records in `dir`.
pub fn read_records(dir: &Path) -> Result<Vec<QuestionRecord>, StoreError> {
    StoreContents::load(dir)?.records()
}

/// Appends `records` (questions, answers, and entries) to the store in `dir`.
pub fn write_records(dir: &Path, records: &[QuestionRecord]) -> Result<(), StoreError> {
    let mut store = RecordStore::open(dir)?;
    for r in records {
        store.append_question(&r.question)?;
        for a in &r.answers {
            store.append_answer(a)?;
        }
        store.append_record(r)?;
    }
    Ok(())
}

/// Single-writer handle on a store directory. Tracks keys already on disk so
/// appends are idempotent.
#[derive(Debug)]
pub struct RecordStore {
    dir: PathBuf,
    contents: StoreContents,
    question_ids: BTreeSet<String>,
    answer_keys: BTreeSet<(String, ModelId)>,
    record_ids: BTreeSet<String>,
}

impl RecordStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let contents = StoreContents::load(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            question_ids: contents.questions.iter().map(|q| q.id.clone()).collect(),
            answer_keys: contents
                .answers
                .iter()
                .map(|a| (a.question_id.clone(), a.answerer.clone()))
                .collect(),
            record_ids: contents.entries.iter().map(|e| e.question_id.clone()).collect(),
            contents,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn contents(&self) -> &StoreContents {
        &self.contents
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.contents.questions.iter().find(|q| q.id == id)
    }

    pub fn has_question(&self, id: &str) -> bool {
        self.question_ids.contains(id)
    }

    pub fn answer(&self, question_id: &str, answerer: &ModelId) -> Option<&AnswerSubmission> {
        self.contents
            .answers
            .iter()
            .find(|a| a.question_id == question_id && &a.answerer == answerer)
    }

    pub fn has_record(&self, question_id: &str) -> bool {
        self.record_ids.contains(question_id)
    }

    /// Returns `false` without writing when the question id is already stored.
    pub fn append_question(&mut self, q: &Question) -> Result<bool, StoreError> {
        if !self.question_ids.insert(q.id.clone()) {
            return Ok(false);
        }
        append_jsonl(&self.dir.join(QUESTIONS_FILE), std::slice::from_ref(q))?;
        self.contents.questions.push(q.clone());
        Ok(true)
    }

    /// Returns `false` without writing when (question id, answerer) is already stored.
    pub fn append_answer(&mut self, a: &AnswerSubmission) -> Result<bool, StoreError> {
        if !self.answer_keys.insert((a.question_id.clone(), a.answerer.clone())) {
            return Ok(false);
        }
        append_jsonl(&self.dir.join(ANSWERS_FILE), std::slice::from_ref(a))?;
        self.contents.answers.push(a.clone());
        Ok(true)
    }

    pub fn append_record(&mut self, r: &QuestionRecord) -> Result<bool, StoreError> {
        if self.record_ids.contains(&r.question.id) {
            return Ok(false);
        }
        let entry = RecordEntry::from_record(r).map_err(|e| {
            StoreError::Integrity(vec![IntegrityIssue::InvalidRecord {
                question_id: r.question.id.clone(),
                violation: e.to_string(),
            }])
        })?;
        append_jsonl(&self.dir.join(RECORDS_FILE), std::slice::from_ref(&entry))?;
        self.record_ids.insert(r.question.id.clone());
        self.contents.entries.push(entry);
        Ok(true)
    }

    pub fn append_log<T: Serialize>(&self, file: &str, items: &[T]) -> Result<(), StoreError> {
        append_jsonl(&self.dir.join(file), items)
    }
}
