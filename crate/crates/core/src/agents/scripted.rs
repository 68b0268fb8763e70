//! Deterministic scripted agents for offline studies and tests.
//!
//! A scripted generator derives each question's declared answer from its own
//! seed and the question id. A scripted answerer in stochastic mode picks that
//! declared answer with probability `p_declared`; it recomputes the key from the
//! generator's seed through a [`ScriptBook`] rather than reading it from the
//! prompt, so answer prompts stay free of private fields.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::parse::{format_answer, format_generated, GeneratedFields};
use super::{AgentBackend, AnswerRequest, BackendError, GenerationRequest};
use crate::model::{AnswerSubmission, ChoiceLabel, ModelId, Question};
use crate::seeding::task_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScriptedBehavior {
    /// Chooses the declared answer with probability `p_declared`, otherwise one
    /// of the remaining three labels uniformly.
    Stochastic { p_declared: f64 },
    /// Fixed choices keyed by question id, with an optional stochastic fallback
    /// for ids not in the table.
    Table {
        answers: BTreeMap<String, ChoiceLabel>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback_p_declared: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedProfile {
    pub model: ModelId,
    pub seed: u64,
    pub behavior: ScriptedBehavior,
    /// Emit generated questions as labelled plain text instead of JSON.
    #[serde(default)]
    pub plain_text: bool,
}

impl ScriptedProfile {
    pub fn stochastic(model: ModelId, seed: u64, p_declared: f64) -> Self {
        Self { model, seed, behavior: ScriptedBehavior::Stochastic { p_declared }, plain_text: false }
    }

    pub fn check(&self) -> Result<(), String> {
        let p = match &self.behavior {
            ScriptedBehavior::Stochastic { p_declared } => Some(*p_declared),
            ScriptedBehavior::Table { fallback_p_declared, .. } => *fallback_p_declared,
        };
        match p {
            Some(p) if !(0.0..=1.0).contains(&p) => {
                Err(format!("{}: probability {p} outside [0, 1]", self.model))
            }
            _ => Ok(()),
        }
    }
}

/// The declared answer a scripted generator with `seed` assigns to `question_id`.
pub fn scripted_declared(seed: u64, question_id: &str) -> ChoiceLabel {
    let mut rng = task_rng(seed, &["declared", question_id]);
    ChoiceLabel::ALL[rng.gen_range(0..ChoiceLabel::COUNT)]
}

fn stochastic_choice(seed: u64, question_id: &str, declared: ChoiceLabel, p: f64) -> ChoiceLabel {
    let mut rng = task_rng(seed, &["answer", question_id]);
    if rng.gen::<f64>() < p {
        declared
    } else {
        let others: Vec<ChoiceLabel> = ChoiceLabel::ALL.into_iter().filter(|l| *l != declared).collect();
        others[rng.gen_range(0..others.len())]
    }
}

fn choose(profile: &ScriptedProfile, question_id: &str, declared: Option<ChoiceLabel>) -> Result<ChoiceLabel, BackendError> {
    let need_declared = || {
        declared.ok_or_else(|| {
            BackendError::Script(format!(
                "{}: stochastic answer for {question_id} needs a scripted generator",
                profile.model
            ))
        })
    };
    match &profile.behavior {
        ScriptedBehavior::Stochastic { p_declared } => {
            Ok(stochastic_choice(profile.seed, question_id, need_declared()?, *p_declared))
        }
        ScriptedBehavior::Table { answers, fallback_p_declared } => match answers.get(question_id) {
            Some(label) => Ok(*label),
            None => match fallback_p_declared {
                Some(p) => Ok(stochastic_choice(profile.seed, question_id, need_declared()?, *p)),
                None => Err(BackendError::Script(format!(
                    "{}: no scripted answer for question {question_id}",
                    profile.model
                ))),
            },
        },
    }
}

fn justification(profile: &ScriptedProfile, question_id: &str, choice: ChoiceLabel) -> String {
    format!("Scripted reasoning by {} on {question_id}: option {choice} fits best.", profile.model)
}

/// Answer a scripted profile gives to `question`; deterministic in `(seed, question.id)`.
pub fn scripted_answer(profile: &ScriptedProfile, question: &Question) -> Result<AnswerSubmission, BackendError> {
    let choice = choose(profile, &question.id, Some(question.declared_correct))?;
    let justification = justification(profile, &question.id, choice);
    Ok(AnswerSubmission {
        question_id: question.id.clone(),
        answerer: profile.model.clone(),
        choice,
        raw: format_answer(choice, &justification),
        justification,
        latency_ms: 0,
        extra: BTreeMap::new(),
    })
}

/// Seeds of every scripted generator in a study, shared by scripted answerers.
#[derive(Debug, Clone, Default)]
pub struct ScriptBook {
    generator_seeds: BTreeMap<ModelId, u64>,
}

impl ScriptBook {
    pub fn new(profiles: &[ScriptedProfile]) -> Self {
        Self { generator_seeds: profiles.iter().map(|p| (p.model.clone(), p.seed)).collect() }
    }

    pub fn declared(&self, generator: &ModelId, question_id: &str) -> Option<ChoiceLabel> {
        self.generator_seeds.get(generator).map(|seed| scripted_declared(*seed, question_id))
    }
}

/// [`AgentBackend`] backed by a [`ScriptedProfile`].
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    profile: ScriptedProfile,
    book: Arc<ScriptBook>,
}

impl ScriptedAgent {
    pub fn new(profile: ScriptedProfile, book: Arc<ScriptBook>) -> Self {
        Self { profile, book }
    }

    pub fn profile(&self) -> &ScriptedProfile {
        &self.profile
    }

    fn generated_fields(&self, request: &GenerationRequest) -> GeneratedFields {
        let id = &request.question_id;
        let declared = scripted_declared(self.profile.seed, id);
        GeneratedFields {
            question: format!(
                "[{id}] Scripted question on {} within {}: which statement holds?",
                request.subtopic, request.topic
            ),
            options: ChoiceLabel::ALL
                .iter()
                .map(|l| (*l, format!("Statement {l} about {}", request.subtopic)))
                .collect(),
            correct_answer: declared,
            explanation: format!("Scripted key note {id}: statement {declared} is keyed by {}.", self.profile.model),
        }
    }
}

impl AgentBackend for ScriptedAgent {
    fn id(&self) -> &ModelId {
        &self.profile.model
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let fields = self.generated_fields(request);
        if !self.profile.plain_text {
            return Ok(format_generated(&fields));
        }
        let mut out = format!("Question: {}\n", fields.question);
        for (label, text) in &fields.options {
            out.push_str(&format!("{label}) {text}\n"));
        }
        out.push_str(&format!("Correct answer: {}\nExplanation: {}", fields.correct_answer, fields.explanation));
        Ok(out)
    }

    fn answer(&self, request: &AnswerRequest) -> Result<String, BackendError> {
        let declared = self.book.declared(&request.generator, &request.question_id);
        let choice = choose(&self.profile, &request.question_id, declared)?;
        Ok(format_answer(choice, &justification(&self.profile, &request.question_id, choice)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::parse::{parse_answer, parse_generated_fields};
    use crate::model::fixtures::{model, question};

    #[test]
    fn certain_and_never() {
        let always = ScriptedProfile::stochastic(model("claude"), 3, 1.0);
        let never = ScriptedProfile::stochastic(model("llama"), 3, 0.0);
        for i in 0..200 {
            let q = question(&format!("q{i}"), "gemini", ChoiceLabel::from_index(i % 4).unwrap());
            assert_eq!(scripted_answer(&always, &q).unwrap().choice, q.declared_correct);
            assert_ne!(scripted_answer(&never, &q).unwrap().choice, q.declared_correct);
        }
    }

    #[test]
    fn empirical_rate_matches_probability() {
        let profile = ScriptedProfile::stochastic(model("gpt-4"), 11, 0.7);
        let hits = (0..10_000)
            .filter(|i| {
                let q = question(&format!("q{i}"), "gemini", ChoiceLabel::B);
                scripted_answer(&profile, &q).unwrap().choice == ChoiceLabel::B
            })
            .count();
        let rate = hits as f64 / 10_000.0;
        assert!((rate - 0.7).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn deterministic_in_seed_and_id() {
        let profile = ScriptedProfile::stochastic(model("gpt-4"), 99, 0.4);
        let q = question("q-42", "gemini", ChoiceLabel::A);
        let a = scripted_answer(&profile, &q).unwrap();
        for _ in 0..5 {
            assert_eq!(scripted_answer(&profile, &q).unwrap(), a);
        }
    }

    #[test]
    fn table_mode() {
        let profile = ScriptedProfile {
            model: model("llama"),
            seed: 0,
            behavior: ScriptedBehavior::Table {
                answers: BTreeMap::from([("q1".to_string(), ChoiceLabel::D)]),
                fallback_p_declared: None,
            },
            plain_text: false,
        };
        assert_eq!(scripted_answer(&profile, &question("q1", "gemini", ChoiceLabel::A)).unwrap().choice, ChoiceLabel::D);
        assert!(scripted_answer(&profile, &question("q2", "gemini", ChoiceLabel::A)).is_err());
    }

    #[test]
    fn profile_rejects_bad_probability() {
        assert!(ScriptedProfile::stochastic(model("x"), 0, 1.5).check().is_err());
        assert!(ScriptedProfile::stochastic(model("x"), 0, 0.5).check().is_ok());
    }

    #[test]
    fn agent_outputs_parse_and_match_book() {
        let gen_profile = ScriptedProfile::stochastic(model("gemini"), 5, 1.0);
        let mut plain = ScriptedProfile::stochastic(model("claude"), 6, 1.0);
        plain.plain_text = true;
        let book = Arc::new(ScriptBook::new(&[gen_profile.clone(), plain.clone()]));
        let request = GenerationRequest {
            question_id: "gemini-q0001".into(),
            topic: "Limit Theorems".into(),
            subtopic: "Central limit theorem".into(),
            prompt: String::new(),
        };
        for profile in [gen_profile, plain] {
            let agent = ScriptedAgent::new(profile.clone(), book.clone());
            let fields = parse_generated_fields(&agent.generate(&request).unwrap()).unwrap();
            assert_eq!(fields.correct_answer, scripted_declared(profile.seed, "gemini-q0001"));
            let answer = agent
                .answer(&AnswerRequest {
                    question_id: "gemini-q0001".into(),
                    generator: profile.model.clone(),
                    prompt: String::new(),
                })
                .unwrap();
            assert_eq!(parse_answer(&answer).unwrap().0, fields.correct_answer);
        }
    }
}
