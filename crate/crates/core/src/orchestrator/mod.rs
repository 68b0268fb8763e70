//! Study orchestration: role rotation, the generation and answering phases,
//! record assembly, and the final analysis.
//!
//! Worker tasks run on a bounded thread pool and only return values; the
//! orchestrator thread is the sole writer of the record store and appends
//! results in task order, so a scripted study with a frozen clock produces
//! byte-identical files on every run. Tasks whose output is already stored
//! are skipped, which makes an interrupted study resumable.

mod config;
mod schedule;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::agents::prompt::SYSTEM_PROMPT;
use crate::agents::{
    parse_answer, parse_generated_question, render_answer_prompt, render_generation_prompt, AgentBackend,
    AnswerRequest, BackendError, GenerationRequest, HttpAgent, ScriptBook, ScriptedAgent,
};
use crate::model::{
    validate_record, AnswerSubmission, ModelError, ModelId, Question, QuestionRecord, TopicMap,
    ANSWERS_PER_QUESTION,
};
use crate::report::{analyze, AnalyzeOptions, ReportError, ReportFormat, StatsReport};
use crate::seeding::task_rng;
use crate::store::{read_records, RecordStore, StoreError, AUDIT_FILE, REQUESTS_FILE};

pub use config::{strip_line_comments, BackendSpec, ClockSpec, ModelSpec, StudyConfig};
pub use schedule::{build_rotation_schedule, RotationBlock, RotationSchedule};

/// Generation attempts per question before the question is dropped.
pub const MAX_GENERATION_ATTEMPTS: u32 = 3;
/// Answer attempts per (question, answerer): the first ask plus two re-asks.
pub const MAX_ANSWER_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("backend {model} failed: {source}")]
    Backend { model: ModelId, source: BackendError },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no backend bound for model {0}")]
    UnboundModel(ModelId),
    #[error("block for {generator} has {found} answerers; records need exactly {ANSWERS_PER_QUESTION}")]
    AnswererCount { generator: ModelId, found: usize },
}

/// One line of `audit.jsonl`: the outcome of a single generation or answer task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub task_id: String,
    pub phase: Phase,
    pub model: ModelId,
    pub outcome: Outcome,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Generate,
    Answer,
    Assemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    /// Output never parsed within the attempt budget; the item is left out.
    Excluded,
    BackendFailure,
}

/// One line of `answer_requests.jsonl`: exactly what an answering model was sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequestLog {
    pub task_id: String,
    pub question_id: String,
    pub answerer: ModelId,
    pub attempt: u32,
    pub system: String,
    pub prompt: String,
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits), freed: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut p = self.permits.lock().unwrap();
            while *p == 0 {
                p = self.freed.wait(p).unwrap();
            }
            *p -= 1;
        }
        let out = f();
        *self.permits.lock().unwrap() += 1;
        self.freed.notify_one();
        out
    }
}

struct Bound {
    backend: Arc<dyn AgentBackend>,
    limit: Option<Semaphore>,
}

impl Bound {
    fn call<T>(&self, f: impl FnOnce(&dyn AgentBackend) -> T) -> T {
        match &self.limit {
            Some(s) => s.run(|| f(self.backend.as_ref())),
            None => f(self.backend.as_ref()),
        }
    }
}

enum TaskValue<T> {
    Done(T),
    /// Every attempt produced unparseable output.
    Excluded,
    Failed(BackendError),
}

struct TaskResult<T> {
    value: TaskValue<T>,
    attempts: u32,
    errors: Vec<String>,
    requests: Vec<AnswerRequestLog>,
}

/// Everything `run_full_study` produces.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub records: Vec<QuestionRecord>,
    pub report: StatsReport,
    pub exclusions: usize,
}

pub struct Study {
    config: StudyConfig,
    topics: TopicMap,
    schedule: RotationSchedule,
    backends: BTreeMap<ModelId, Bound>,
    pool: rayon::ThreadPool,
}

impl Study {
    /// Builds backends from the configuration (HTTP clients or scripted agents).
    pub fn from_config(config: StudyConfig) -> Result<Self, StudyError> {
        config.check()?;
        let profiles: Vec<_> = config.models.iter().filter_map(ModelSpec::scripted_profile).collect();
        let book = Arc::new(ScriptBook::new(&profiles));
        let mut backends: Vec<Arc<dyn AgentBackend>> = Vec::new();
        for spec in &config.models {
            backends.push(match &spec.backend {
                BackendSpec::Http(provider) => Arc::new(
                    HttpAgent::new(spec.id.clone(), provider.clone())
                        .map_err(|e| StudyError::Config(format!("model {}: {e}", spec.id)))?,
                ),
                BackendSpec::Scripted { .. } => {
                    Arc::new(ScriptedAgent::new(spec.scripted_profile().unwrap(), book.clone()))
                }
            });
        }
        Self::with_backends(config, backends)
    }

    /// Uses caller-supplied backends; every configured model must have one.
    pub fn with_backends(
        config: StudyConfig,
        backends: Vec<Arc<dyn AgentBackend>>,
    ) -> Result<Self, StudyError> {
        config.check()?;
        let topics = match &config.topic_map {
            Some(path) => TopicMap::load(path)?,
            None => TopicMap::default_probability(),
        };
        let schedule = build_rotation_schedule(&config.model_ids())?;
        let mut bound = BTreeMap::new();
        for backend in backends {
            let limit = backend.max_concurrency().map(Semaphore::new);
            bound.insert(backend.id().clone(), Bound { backend, limit });
        }
        for m in config.model_ids() {
            if !bound.contains_key(&m) {
                return Err(StudyError::UnboundModel(m));
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_in_flight)
            .build()
            .map_err(|e| StudyError::Config(format!("thread pool: {e}")))?;
        Ok(Self { config, topics, schedule, backends: bound, pool })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn schedule(&self) -> &RotationSchedule {
        &self.schedule
    }

    pub fn open_store(&self) -> Result<RecordStore, StudyError> {
        Ok(RecordStore::open(&self.config.records_dir)?)
    }

    fn backend(&self, model: &ModelId) -> Result<&Bound, StudyError> {
        self.backends.get(model).ok_or_else(|| StudyError::UnboundModel(model.clone()))
    }

    pub fn question_id(generator: &ModelId, index: usize) -> String {
        format!("{generator}-q{index:04}")
    }

    /// Topic pair for question `index` of `generator`, uniform over all pairs.
    fn sample_topic(&self, generator: &ModelId, index: usize) -> (String, String) {
        let pairs = self.topics.pairs();
        let mut rng = task_rng(self.config.seed, &["topic", generator.as_str(), &index.to_string()]);
        let (t, s) = pairs[rng.gen_range(0..pairs.len())];
        (t.to_string(), s.to_string())
    }

    fn generate_one(&self, bound: &Bound, generator: &ModelId, index: usize) -> TaskResult<Question> {
        let question_id = Self::question_id(generator, index);
        let (topic, subtopic) = self.sample_topic(generator, index);
        let mut errors = Vec::new();
        let prompt = match render_generation_prompt(&self.topics, &topic, &subtopic) {
            Ok(p) => p,
            Err(e) => {
                return TaskResult {
                    value: TaskValue::Failed(BackendError::Config(e.to_string())),
                    attempts: 0,
                    errors: vec![e.to_string()],
                    requests: Vec::new(),
                }
            }
        };
        let request = GenerationRequest { question_id: question_id.clone(), topic, subtopic, prompt };
        for attempt in 1..=MAX_GENERATION_ATTEMPTS {
            let raw = match bound.call(|b| b.generate(&request)) {
                Ok(raw) => raw,
                Err(e) => {
                    errors.push(e.to_string());
                    return TaskResult { value: TaskValue::Failed(e), attempts: attempt, errors, requests: Vec::new() };
                }
            };
            let created_at = self.config.clock.now_ms();
            match parse_generated_question(&raw, &question_id, &request.topic, &request.subtopic, generator, created_at) {
                Ok(q) if q.violations().is_empty() => {
                    return TaskResult { value: TaskValue::Done(q), attempts: attempt, errors, requests: Vec::new() }
                }
                Ok(q) => errors.push(
                    q.violations().iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
                ),
                Err(e) => errors.push(e.to_string()),
            }
        }
        TaskResult {
            value: TaskValue::Excluded,
            attempts: MAX_GENERATION_ATTEMPTS,
            errors,
            requests: Vec::new(),
        }
    }

    /// Generates the missing questions of `block` and appends them to the store.
    /// Returns every stored question of the block, in index order.
    pub fn run_generation_phase(
        &self,
        block: &RotationBlock,
        store: &mut RecordStore,
    ) -> Result<Vec<Question>, StudyError> {
        let generator = &block.generator;
        let bound = self.backend(generator)?;
        let n = self.config.questions_per_generator;
        let pending: Vec<usize> = (0..n).filter(|i| !store.has_question(&Self::question_id(generator, *i))).collect();
        info!(generator = %generator, pending = pending.len(), total = n, "generation phase");

        let results: Vec<TaskResult<Question>> =
            self.pool.install(|| pending.par_iter().map(|&i| self.generate_one(bound, generator, i)).collect());

        let mut audit = Vec::with_capacity(results.len());
        let mut failure = None;
        for (&index, result) in pending.iter().zip(results) {
            let task_id = format!("generate/{}", Self::question_id(generator, index));
            let outcome = match result.value {
                TaskValue::Done(q) => {
                    store.append_question(&q)?;
                    Outcome::Ok
                }
                TaskValue::Excluded => {
                    warn!(task = %task_id, "generation excluded after {} attempts", result.attempts);
                    Outcome::Excluded
                }
                TaskValue::Failed(e) => {
                    failure.get_or_insert(StudyError::Backend { model: generator.clone(), source: e });
                    Outcome::BackendFailure
                }
            };
            audit.push(AuditEvent {
                task_id,
                phase: Phase::Generate,
                model: generator.clone(),
                outcome,
                attempts: result.attempts,
                errors: result.errors,
            });
        }
        store.append_log(AUDIT_FILE, &audit)?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((0..n).filter_map(|i| store.question(&Self::question_id(generator, i)).cloned()).collect())
    }

    fn answer_one(&self, bound: &Bound, question: &Question, answerer: &ModelId) -> TaskResult<AnswerSubmission> {
        let prompt = render_answer_prompt(question);
        let request = AnswerRequest {
            question_id: question.id.clone(),
            generator: question.generator.clone(),
            prompt,
        };
        let task_id = format!("answer/{}/{answerer}", question.id);
        let mut errors = Vec::new();
        let mut requests = Vec::new();
        for attempt in 1..=MAX_ANSWER_ATTEMPTS {
            requests.push(AnswerRequestLog {
                task_id: task_id.clone(),
                question_id: question.id.clone(),
                answerer: answerer.clone(),
                attempt,
                system: SYSTEM_PROMPT.to_string(),
                prompt: request.prompt.clone(),
            });
            let start = Instant::now();
            let raw = match bound.call(|b| b.answer(&request)) {
                Ok(raw) => raw,
                Err(e) => {
                    errors.push(e.to_string());
                    return TaskResult { value: TaskValue::Failed(e), attempts: attempt, errors, requests };
                }
            };
            let latency_ms = self.config.clock.elapsed_ms(start);
            match parse_answer(&raw) {
                Ok((choice, justification)) => {
                    let submission = AnswerSubmission {
                        question_id: question.id.clone(),
                        answerer: answerer.clone(),
                        choice,
                        justification,
                        latency_ms,
                        raw,
                        extra: BTreeMap::new(),
                    };
                    return TaskResult { value: TaskValue::Done(submission), attempts: attempt, errors, requests };
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
        TaskResult {
            value: TaskValue::Excluded,
            attempts: MAX_ANSWER_ATTEMPTS,
            errors,
            requests,
        }
    }

    /// Collects the missing answers for `questions` from the block's answerers,
    /// then assembles and appends a record for every fully answered question.
    /// Returns the block's records (including ones stored by earlier runs).
    pub fn run_answer_phase(
        &self,
        block: &RotationBlock,
        questions: &[Question],
        store: &mut RecordStore,
    ) -> Result<Vec<QuestionRecord>, StudyError> {
        if block.answerers.len() != ANSWERS_PER_QUESTION {
            return Err(StudyError::AnswererCount {
                generator: block.generator.clone(),
                found: block.answerers.len(),
            });
        }
        let mut tasks = Vec::new();
        for q in questions {
            for a in &block.answerers {
                if store.answer(&q.id, a).is_none() {
                    tasks.push((q, a, self.backend(a)?));
                }
            }
        }
        info!(generator = %block.generator, pending = tasks.len(), "answer phase");

        let results: Vec<TaskResult<AnswerSubmission>> =
            self.pool.install(|| tasks.par_iter().map(|(q, a, b)| self.answer_one(b, q, a)).collect());

        let mut audit = Vec::with_capacity(results.len());
        let mut request_log = Vec::new();
        let mut failure = None;
        for ((q, answerer, _), result) in tasks.iter().zip(results) {
            request_log.extend(result.requests);
            let outcome = match result.value {
                TaskValue::Done(sub) => {
                    store.append_answer(&sub)?;
                    Outcome::Ok
                }
                TaskValue::Excluded => {
                    warn!(question = %q.id, answerer = %answerer, "answer excluded");
                    Outcome::Excluded
                }
                TaskValue::Failed(e) => {
                    failure.get_or_insert(StudyError::Backend { model: (*answerer).clone(), source: e });
                    Outcome::BackendFailure
                }
            };
            audit.push(AuditEvent {
                task_id: format!("answer/{}/{answerer}", q.id),
                phase: Phase::Answer,
                model: (*answerer).clone(),
                outcome,
                attempts: result.attempts,
                errors: result.errors,
            });
        }
        store.append_log(REQUESTS_FILE, &request_log)?;

        let mut records = Vec::new();
        for q in questions {
            let answers: Option<Vec<AnswerSubmission>> =
                block.answerers.iter().map(|a| store.answer(&q.id, a).cloned()).collect();
            let Some(answers) = answers else {
                continue;
            };
            let record = QuestionRecord { question: q.clone(), answers };
            let violations = validate_record(&record);
            if !violations.is_empty() {
                audit.push(AuditEvent {
                    task_id: format!("assemble/{}", q.id),
                    phase: Phase::Assemble,
                    model: block.generator.clone(),
                    outcome: Outcome::Excluded,
                    attempts: 1,
                    errors: violations.iter().map(ToString::to_string).collect(),
                });
                continue;
            }
            store.append_record(&record)?;
            records.push(record);
        }
        store.append_log(AUDIT_FILE, &audit)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(records),
        }
    }

    /// Generation for every block.
    pub fn run_generation(&self) -> Result<Vec<Question>, StudyError> {
        let mut store = self.open_store()?;
        let mut all = Vec::new();
        for block in &self.schedule.blocks {
            all.extend(self.run_generation_phase(block, &mut store)?);
        }
        Ok(all)
    }

    /// Answering for every block over the questions already in the store.
    pub fn run_answering(&self) -> Result<Vec<QuestionRecord>, StudyError> {
        let mut store = self.open_store()?;
        let mut all = Vec::new();
        for block in &self.schedule.blocks {
            let questions: Vec<Question> = store
                .contents()
                .questions
                .iter()
                .filter(|q| q.generator == block.generator)
                .cloned()
                .collect();
            all.extend(self.run_answer_phase(block, &questions, &mut store)?);
        }
        Ok(all)
    }

    pub fn analyze_options(&self) -> AnalyzeOptions {
        AnalyzeOptions {
            seed: self.config.seed,
            bootstrap_samples: self.config.bootstrap_samples,
            level: self.config.level,
        }
    }

    /// Runs every block, then analyzes the stored records and writes the report.
    pub fn run_full_study(&self, format: ReportFormat) -> Result<StudyOutcome, StudyError> {
        let mut store = self.open_store()?;
        for block in &self.schedule.blocks {
            let questions = self.run_generation_phase(block, &mut store)?;
            self.run_answer_phase(block, &questions, &mut store)?;
        }
        let records = read_records(&self.config.records_dir)?;
        let report = analyze(&records, &self.analyze_options())?;
        write_report(&self.config.report_path, &report, format)?;
        let exclusions = (self.schedule.blocks.len() * self.config.questions_per_generator).saturating_sub(records.len());
        info!(records = records.len(), exclusions, "study complete");
        Ok(StudyOutcome { records, report, exclusions })
    }
}

pub fn write_report(path: &Path, report: &StatsReport, format: ReportFormat) -> Result<(), StudyError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|source| StoreError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, report.render(format))
        .map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}
