//! Prompt templates for question generation and answering.

use crate::model::{ChoiceLabel, ModelError, Question, TopicMap};

pub const SYSTEM_PROMPT: &str =
    "You are taking part in a study of probability questions. Follow the output format exactly.";

const GENERATION_TEMPLATE: &str = "Generate a challenging PhD-level multiple-choice question in the field of [Topic], focusing on [Specific Concept]. The question should have four answer options labeled A, B, C, and D, with only one correct answer. Ensure the question assesses deep understanding and critical thinking.";

pub const ANSWER_TEMPLATE: &str = "Please read the following PhD-level probabilistic question and select the most appropriate answer (A, B, C, or D). Provide a detailed justification for your selection, explaining your reasoning and any relevant statistical principles.";

pub const GENERATION_FORMAT: &str = "\n\nRespond with a single JSON object and nothing else, using exactly these fields:\n{\"question\": \"...\", \"options\": {\"A\": \"...\", \"B\": \"...\", \"C\": \"...\", \"D\": \"...\"}, \"correct_answer\": \"A|B|C|D\", \"explanation\": \"...\"}";

pub const ANSWER_FORMAT: &str = "\n\nRespond with a single JSON object and nothing else, using exactly these fields:\n{\"answer\": \"A|B|C|D\", \"justification\": \"...\"}";

/// Question-generation prompt for `(topic, subtopic)`; the pair must exist in `topics`.
pub fn render_generation_prompt(
    topics: &TopicMap,
    topic: &str,
    subtopic: &str,
) -> Result<String, ModelError> {
    topics.require(topic, subtopic)?;
    let body = GENERATION_TEMPLATE
        .replace("[Topic]", topic)
        .replace("[Specific Concept]", subtopic);
    Ok(body + GENERATION_FORMAT)
}

/// Answer prompt carrying only the stem and the four options.
pub fn render_answer_prompt(question: &Question) -> String {
    let mut out = String::with_capacity(
        ANSWER_TEMPLATE.len() + question.stem.len() + 256 + ANSWER_FORMAT.len(),
    );
    out.push_str(ANSWER_TEMPLATE);
    out.push_str("\n\nQuestion: ");
    out.push_str(&question.stem);
    out.push('\n');
    for label in ChoiceLabel::ALL {
        out.push('\n');
        out.push(label.as_char());
        out.push_str(") ");
        out.push_str(question.option(label).unwrap_or_default());
    }
    out.push_str(ANSWER_FORMAT);
    out
}
