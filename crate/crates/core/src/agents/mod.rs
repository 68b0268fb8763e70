//! Agent backends: the uniform generate/answer contract, prompt rendering,
//! output parsing, a live HTTP provider client, and scripted test doubles.

pub mod http;
pub mod parse;
pub mod prompt;
pub mod scripted;

use thiserror::Error;

use crate::model::ModelId;

pub use http::{HttpAgent, ProviderConfig, ProviderKind};
pub use parse::{format_answer, parse_answer, parse_generated_question, ParseError};
pub use prompt::{render_answer_prompt, render_generation_prompt};
pub use scripted::{scripted_answer, ScriptBook, ScriptedAgent, ScriptedBehavior, ScriptedProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("credential variable {0} is not set")]
    Credentials(String),
    #[error("malformed provider response: {0}")]
    Response(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("scripted agent: {0}")]
    Script(String),
}

impl BackendError {
    /// Rate limits, server errors, and transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { code, .. } => *code == 408 || *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRequest {
    /// Id the orchestrator will assign to the resulting question.
    pub question_id: String,
    pub topic: String,
    pub subtopic: String,
    pub prompt: String,
}

/// An answer-phase request. It carries no generator-private fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerRequest {
    pub question_id: String,
    pub generator: ModelId,
    pub prompt: String,
}

/// A question-generating and answering model.
///
/// Calls are independent: a backend keeps no conversation state between them.
pub trait AgentBackend: Send + Sync {
    fn id(&self) -> &ModelId;

    /// Maximum in-flight calls this backend accepts; `None` means unlimited.
    fn max_concurrency(&self) -> Option<usize> {
        None
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;

    fn answer(&self, request: &AnswerRequest) -> Result<String, BackendError>;
}
