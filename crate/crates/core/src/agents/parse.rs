//! Extraction of questions and answers from raw model output.
//!
//! The structured JSON object requested by the prompts is tried first. When a
//! model ignores the format instruction, labelled plain text such as
//! `A) ...` / `Correct answer: C` / `Answer: B` is accepted instead.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{ChoiceLabel, ModelId, Question};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty model output")]
    Empty,
    #[error("missing option {0}")]
    MissingOption(ChoiceLabel),
    #[error("missing correct answer label")]
    MissingCorrectLabel,
    #[error("missing question text")]
    MissingStem,
    #[error("no answer choice found")]
    NoChoiceFound,
    #[error("unparseable output: {0}")]
    Unparseable(String),
}

/// Generation fields as they appear in the structured output object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedFields {
    pub question: String,
    pub options: BTreeMap<ChoiceLabel, String>,
    pub correct_answer: ChoiceLabel,
    pub explanation: String,
}

/// Structured answering output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerFields {
    pub answer: ChoiceLabel,
    pub justification: String,
}

pub fn format_generated(fields: &GeneratedFields) -> String {
    serde_json::to_string(fields).expect("plain struct serializes")
}

pub fn format_answer(choice: ChoiceLabel, justification: &str) -> String {
    serde_json::to_string(&AnswerFields { answer: choice, justification: justification.to_string() })
        .expect("plain struct serializes")
}

/// Finds the outermost `{ ... }` span, tolerating code fences and chatter around it.
fn json_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end <= start {
        return None;
    }
    match serde_json::from_str::<Value>(&raw[start..=end]) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    }
}

fn json_label(v: &Value) -> Option<ChoiceLabel> {
    let s = v.as_str()?.trim().trim_matches(|c: char| c == '(' || c == ')' || c == '.');
    s.parse().ok()
}

fn json_text(map: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    map.get(key).and_then(Value::as_str).map(|s| s.trim().to_string())
}

static CORRECT_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\**\s*(?:correct\s+answer|correct\s+option|answer)\s*\**\s*(?:is)?\s*[:\-]\s*\**\s*\(?([A-D])\b")
        .unwrap()
});
static EXPLANATION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\**\s*explanation\s*\**\s*:\s*\**").unwrap());
static STEM_PREFIX_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\**\s*question\s*\d*\s*\**\s*[:.]\s*\**").unwrap());

/// Start/end byte offsets of the `label` option marker in `text`, at or after `from`.
fn option_marker(text: &str, label: ChoiceLabel, from: usize) -> Option<(usize, usize)> {
    let pattern = format!(r"(?:^|\s)\(?({})[\).:]\s+", label.as_char());
    let re = Regex::new(&pattern).expect("static pattern");
    re.captures_at(text, from).map(|c| {
        let whole = c.get(0).unwrap();
        let lbl = c.get(1).unwrap();
        (lbl.start().saturating_sub(usize::from(text[..lbl.start()].ends_with('('))), whole.end())
    })
}

/// Parses a generated question. Structured output is preferred; labelled plain
/// text is the fallback.
pub fn parse_generated_question(
    raw: &str,
    id: &str,
    topic: &str,
    subtopic: &str,
    generator: &ModelId,
    created_at: u64,
) -> Result<Question, ParseError> {
    let fields = parse_generated_fields(raw)?;
    Ok(Question {
        id: id.to_string(),
        generator: generator.clone(),
        topic: topic.to_string(),
        subtopic: subtopic.to_string(),
        stem: fields.question,
        options: fields.options,
        declared_correct: fields.correct_answer,
        explanation: fields.explanation,
        created_at,
        extra: BTreeMap::new(),
    })
}

pub fn parse_generated_fields(raw: &str) -> Result<GeneratedFields, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    if let Some(map) = json_object(raw) {
        if map.contains_key("question") || map.contains_key("options") {
            return structured_question(&map);
        }
    }
    plain_question(raw)
}

fn structured_question(map: &serde_json::Map<String, Value>) -> Result<GeneratedFields, ParseError> {
    let stem = json_text(map, "question").filter(|s| !s.is_empty()).ok_or(ParseError::MissingStem)?;
    let options_value = map.get("options");
    let mut options = BTreeMap::new();
    for label in ChoiceLabel::ALL {
        let key = label.as_char().to_string();
        let text = match options_value {
            Some(Value::Object(o)) => o.get(&key).or_else(|| o.get(&key.to_lowercase())),
            Some(Value::Array(a)) => a.get(label.index()),
            _ => None,
        }
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or(ParseError::MissingOption(label))?;
        options.insert(label, text.to_string());
    }
    let correct_answer = map
        .get("correct_answer")
        .or_else(|| map.get("answer"))
        .and_then(json_label)
        .ok_or(ParseError::MissingCorrectLabel)?;
    let explanation = json_text(map, "explanation").unwrap_or_default();
    Ok(GeneratedFields { question: stem, options, correct_answer, explanation })
}

fn plain_question(raw: &str) -> Result<GeneratedFields, ParseError> {
    let text = raw.replace("\r\n", "\n");
    let correct = CORRECT_RE.captures(&text);
    let explanation = EXPLANATION_RE.find(&text);
    // options live before the answer and explanation sections
    let options_end = [correct.as_ref().map(|c| c.get(0).unwrap().start()), explanation.map(|m| m.start())]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(text.len());
    let region = &text[..options_end];

    let mut markers = Vec::with_capacity(4);
    let mut cursor = 0;
    for label in ChoiceLabel::ALL {
        let (start, end) = option_marker(region, label, cursor).ok_or(ParseError::MissingOption(label))?;
        markers.push((label, start, end));
        cursor = end;
    }
    let mut options = BTreeMap::new();
    for (i, &(label, _, body_start)) in markers.iter().enumerate() {
        let body_end = markers.get(i + 1).map(|m| m.1).unwrap_or(region.len());
        let body = region[body_start..body_end].trim();
        if body.is_empty() {
            return Err(ParseError::MissingOption(label));
        }
        options.insert(label, body.to_string());
    }
    let stem = STEM_PREFIX_RE.replace(region[..markers[0].1].trim(), "").trim().to_string();
    if stem.is_empty() {
        return Err(ParseError::MissingStem);
    }
    let correct_answer = correct
        .and_then(|c| c.get(1))
        .and_then(|m| m.as_str().parse().ok())
        .ok_or(ParseError::MissingCorrectLabel)?;
    let explanation = explanation
        .map(|m| text[m.end()..].trim().to_string())
        .unwrap_or_default();
    Ok(GeneratedFields { question: stem, options, correct_answer, explanation })
}

static ANSWER_LINE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[\s*#>-]*(?:final\s+|selected\s+|correct\s+)?(?:answer|choice|option)\s*\**\s*(?:is)?\s*[:\-]\s*\**\s*\(?([A-D])\b")
        .unwrap()
});
static JUSTIFICATION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\**\s*(?:justification|reasoning|explanation)\s*\**\s*:\s*\**").unwrap());

/// Extracts the chosen label and justification from an answering model's output.
///
/// Output naming more than one distinct label in answer position is ambiguous
/// and yields [`ParseError::NoChoiceFound`].
pub fn parse_answer(raw: &str) -> Result<(ChoiceLabel, String), ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    if let Some(map) = json_object(raw) {
        if let Some(label) = map.get("answer").or_else(|| map.get("choice")).and_then(json_label) {
            let justification = json_text(&map, "justification").unwrap_or_default();
            return Ok((label, justification));
        }
    }
    let text = raw.replace("\r\n", "\n");
    let labels: BTreeSet<ChoiceLabel> = ANSWER_LINE_RE
        .captures_iter(&text)
        .filter_map(|c| c.get(1)?.as_str().parse().ok())
        .collect();
    if labels.len() != 1 {
        return Err(ParseError::NoChoiceFound);
    }
    let label = *labels.iter().next().unwrap();
    let justification = match JUSTIFICATION_RE.find(&text) {
        Some(m) => text[m.end()..].trim().to_string(),
        None => {
            let first = ANSWER_LINE_RE.find(&text).unwrap();
            let rest = text[first.end()..].trim_start_matches(['.', ')']);
            rest.trim().to_string()
        }
    };
    Ok((label, justification))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChoiceLabel::*;

    fn gen() -> ModelId {
        ModelId::new("gemini").unwrap()
    }

    #[test]
    fn structured_generation_round_trip() {
        let fields = GeneratedFields {
            question: "Which bound is tight?".into(),
            options: ChoiceLabel::ALL.iter().map(|l| (*l, format!("bound {l}"))).collect(),
            correct_answer: B,
            explanation: "Chebyshev is tight for three-point laws.".into(),
        };
        let raw = format!("```json\n{}\n```", format_generated(&fields));
        let q = parse_generated_question(&raw, "q1", "Probability Inequalities", "Chebyshev's inequality", &gen(), 5).unwrap();
        assert_eq!(q.stem, fields.question);
        assert_eq!(q.options, fields.options);
        assert_eq!(q.declared_correct, B);
        assert_eq!(q.explanation, fields.explanation);
        assert_eq!(q.created_at, 5);
        assert_eq!(parse_generated_fields(&raw).unwrap(), fields);
    }

    #[test]
    fn plain_text_generation_inline() {
        let raw = "Let X ~ Poisson(2). What is P(X = 0)? A) e^-2 B) 2e^-2 C) 1 - e^-2 D) 0.5 Correct answer: C. Explanation: deliberately wrong key for the fixture.";
        let f = parse_generated_fields(raw).unwrap();
        assert_eq!(f.correct_answer, C);
        assert_eq!(f.question, "Let X ~ Poisson(2). What is P(X = 0)?");
        assert_eq!(f.options[&A], "e^-2");
        assert_eq!(f.options[&C], "1 - e^-2");
        assert_eq!(f.options[&D], "0.5");
        assert_eq!(f.explanation, "deliberately wrong key for the fixture.");
    }

    #[test]
    fn plain_text_generation_multiline() {
        let raw = "**Question:** Which estimator is unbiased?\n\nA. The sample mean\nB. The MLE of variance\n(C) Half the range\nD) The sample maximum\n\n**Correct Answer:** A\n\n**Explanation:** Linearity of expectation.";
        let f = parse_generated_fields(raw).unwrap();
        assert_eq!(f.question, "Which estimator is unbiased?");
        assert_eq!(f.options[&B], "The MLE of variance");
        assert_eq!(f.options[&C], "Half the range");
        assert_eq!(f.correct_answer, A);
        assert_eq!(f.explanation, "Linearity of expectation.");
    }

    #[test]
    fn three_options_is_missing_d() {
        let raw = "What is 1+1?\nA) 1\nB) 2\nC) 3\nAnswer: B";
        assert_eq!(parse_generated_fields(raw), Err(ParseError::MissingOption(D)));
        let json = r#"{"question":"q?","options":{"A":"1","B":"2","C":"3"},"correct_answer":"B","explanation":""}"#;
        assert_eq!(parse_generated_fields(json), Err(ParseError::MissingOption(D)));
    }

    #[test]
    fn missing_correct_label() {
        let raw = "What is 1+1?\nA) 1\nB) 2\nC) 3\nD) 4";
        assert_eq!(parse_generated_fields(raw), Err(ParseError::MissingCorrectLabel));
        assert_eq!(parse_generated_fields("   "), Err(ParseError::Empty));
    }

    #[test]
    fn plain_answer() {
        let (l, j) = parse_answer("Answer: B\nJustification: by Chebyshev…").unwrap();
        assert_eq!(l, B);
        assert_eq!(j, "by Chebyshev…");
        let (l, _) = parse_answer("Some thinking first.\n**Final Answer:** (D)\nbecause").unwrap();
        assert_eq!(l, D);
    }

    #[test]
    fn structured_answer() {
        let (l, j) = parse_answer(r#"{"answer": "D", "justification": "tail bound"}"#).unwrap();
        assert_eq!((l, j.as_str()), (D, "tail bound"));
    }

    #[test]
    fn ambiguous_answer() {
        assert_eq!(parse_answer("the answer could be A or C"), Err(ParseError::NoChoiceFound));
        assert_eq!(parse_answer("Answer: A\nAnswer: C"), Err(ParseError::NoChoiceFound));
    }

    #[test]
    fn format_then_parse_is_identity() {
        for label in ChoiceLabel::ALL {
            let j = format!("reason \"{label}\"\nwith lines");
            assert_eq!(parse_answer(&format_answer(label, &j)).unwrap(), (label, j));
        }
    }
}
