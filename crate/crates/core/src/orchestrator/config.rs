use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::agents::{ProviderConfig, ScriptedBehavior, ScriptedProfile};
use crate::model::ModelId;
use crate::stats::{DEFAULT_BOOTSTRAP_SAMPLES, DEFAULT_LEVEL};

fn default_questions() -> usize {
    100
}
fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP_SAMPLES
}
fn default_level() -> f64 {
    DEFAULT_LEVEL
}
fn default_in_flight() -> usize {
    8
}
fn default_records_dir() -> PathBuf {
    PathBuf::from("records")
}
fn default_report_path() -> PathBuf {
    PathBuf::from("report.md")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_questions")]
    pub questions_per_generator: usize,
    /// Topic map file; the bundled probability map when absent.
    #[serde(default)]
    pub topic_map: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_samples: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Cap on concurrent backend calls across the whole study.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_records_dir")]
    pub records_dir: PathBuf,
    #[serde(default = "default_report_path")]
    pub report_path: PathBuf,
    #[serde(default)]
    pub clock: ClockSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: ModelId,
    pub backend: BackendSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Http(ProviderConfig),
    Scripted {
        seed: u64,
        behavior: ScriptedBehavior,
        #[serde(default)]
        plain_text: bool,
    },
}

impl ModelSpec {
    pub fn scripted_profile(&self) -> Option<ScriptedProfile> {
        match &self.backend {
            BackendSpec::Scripted { seed, behavior, plain_text } => Some(ScriptedProfile {
                model: self.id.clone(),
                seed: *seed,
                behavior: behavior.clone(),
                plain_text: *plain_text,
            }),
            BackendSpec::Http(_) => None,
        }
    }
}

/// Source of timestamps and latencies. `Frozen` makes records reproducible byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockSpec {
    #[default]
    System,
    /// Every timestamp reads this many ms since the epoch; latencies read 0.
    Frozen(u64),
}

impl ClockSpec {
    pub fn now_ms(self) -> u64 {
        match self {
            ClockSpec::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            ClockSpec::Frozen(t) => t,
        }
    }

    pub fn elapsed_ms(self, since: Instant) -> u64 {
        match self {
            ClockSpec::System => since.elapsed().as_millis() as u64,
            ClockSpec::Frozen(_) => 0,
        }
    }
}

/// Drops lines whose first non-blank characters are `//`, so configs can carry comments.
pub fn strip_line_comments(text: &str) -> String {
    text.lines()
        .map(|l| if l.trim_start().starts_with("//") { "" } else { l })
        .collect::<Vec<_>>()
        .join("\n")
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self, StudyError> {
        let config: StudyConfig = serde_json::from_str(&strip_line_comments(text))
            .map_err(|e| StudyError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StudyError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            StudyError::Config(msg) => StudyError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn check(&self) -> Result<(), StudyError> {
        let bad = |m: String| Err(StudyError::Config(m));
        if self.models.len() < 2 {
            return bad(format!("need at least 2 models, got {}", self.models.len()));
        }
        if self.questions_per_generator == 0 {
            return bad("questions_per_generator must be at least 1".into());
        }
        if self.bootstrap_samples == 0 {
            return bad("bootstrap_samples must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level {} must lie strictly between 0 and 1", self.level));
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1".into());
        }
        for spec in &self.models {
            let result = match &spec.backend {
                BackendSpec::Http(p) => p.check(),
                BackendSpec::Scripted { .. } => spec.scripted_profile().unwrap().check(),
            };
            if let Err(e) = result {
                return bad(format!("model {}: {e}", spec.id));
            }
        }
        Ok(())
    }

    pub fn model_ids(&self) -> Vec<ModelId> {
        self.models.iter().map(|m| m.id.clone()).collect()
    }

    /// Four stochastic scripted agents: gemini, claude, gpt-4 and llama.
    pub fn scripted_default(seed: u64, questions_per_generator: usize) -> Self {
        let profiles = [("gemini", 0.80), ("claude", 0.85), ("gpt-4", 0.75), ("llama", 0.60)];
        StudyConfig {
            models: profiles
                .iter()
                .enumerate()
                .map(|(i, (name, p))| ModelSpec {
                    id: ModelId::new(*name).expect("non-empty"),
                    backend: BackendSpec::Scripted {
                        seed: seed.wrapping_add(i as u64 + 1),
                        behavior: ScriptedBehavior::Stochastic { p_declared: *p },
                        plain_text: false,
                    },
                })
                .collect(),
            questions_per_generator,
            topic_map: None,
            seed,
            bootstrap_samples: DEFAULT_BOOTSTRAP_SAMPLES,
            level: DEFAULT_LEVEL,
            max_in_flight: default_in_flight(),
            records_dir: default_records_dir(),
            report_path: default_report_path(),
            clock: ClockSpec::Frozen(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        // four scripted agents
        "models": [
            {"id": "a", "backend": {"kind": "scripted", "seed": 1, "behavior": {"mode": "stochastic", "p_declared": 0.9}}},
            {"id": "b", "backend": {"kind": "http", "provider": "open_ai", "model": "gpt-4",
                "endpoint": "https://api.openai.com/v1/chat/completions", "api_key_env": "OPENAI_API_KEY"}}
        ],
        "clock": {"frozen": 5}
    }"#;

    #[test]
    fn parses_commented_config_with_defaults() {
        let c = StudyConfig::from_json(SAMPLE).unwrap();
        assert_eq!(c.questions_per_generator, 100);
        assert_eq!(c.bootstrap_samples, 10_000);
        assert_eq!(c.level, 0.95);
        assert_eq!(c.clock, ClockSpec::Frozen(5));
        assert!(c.models[0].scripted_profile().is_some());
        assert!(matches!(&c.models[1].backend, BackendSpec::Http(p) if p.max_retries == 4));
    }

    #[test]
    fn rejects_invalid_configs() {
        let one_model = r#"{"models": [{"id": "a", "backend": {"kind": "scripted", "seed": 1, "behavior": {"mode": "stochastic", "p_declared": 0.9}}}]}"#;
        assert!(StudyConfig::from_json(one_model).is_err());
        let bad_p = SAMPLE.replace("0.9", "1.9");
        assert!(StudyConfig::from_json(&bad_p).is_err());
        let unknown = SAMPLE.replace("\"clock\"", "\"clocks\"");
        assert!(StudyConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn frozen_clock_is_constant() {
        let c = ClockSpec::Frozen(42);
        assert_eq!(c.now_ms(), 42);
        assert_eq!(c.elapsed_ms(Instant::now()), 0);
    }
}
