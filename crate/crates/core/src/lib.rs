//! Multi-model multiple-choice question generation and answer validation
//! without ground truth.
//!
//! Models take turns generating questions while the others answer them in
//! isolation. Answers are validated through agreement among the answerers:
//! agreement categories, majority-vote consensus, a reliability rate against
//! the generator's declared answer, bootstrap confidence intervals, a
//! chi-square uniformity test, and Fleiss' kappa.

pub mod agents;
pub mod cli;
pub mod consensus;
pub mod model;
pub mod orchestrator;
pub mod report;
pub mod seeding;
pub mod stats;
pub mod store;

pub use consensus::{majority_vote, reliability, summarize, weighted_vote, ConsensusOutcome, ConsensusSummary, VoteWeights};
pub use model::{
    categorize_agreement, validate_record, AgreementCategory, AnswerSubmission, ChoiceLabel, ModelId, Question,
    QuestionRecord, TopicMap,
};
pub use orchestrator::{Study, StudyConfig};
pub use report::{analyze, AnalyzeOptions, StatsReport};
