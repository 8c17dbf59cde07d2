//! Generation backends: an HTTP client for OpenAI-compatible completion
//! endpoints plus deterministic oracle, replay and persistence backends.

mod http;
mod oracle;
mod replay;
mod slice;

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::codec::QuantRange;
use crate::error::{Error, Result};
use crate::grid_ic::{SpatialGrid, TimeGrid};
use crate::metrics::TokenDistribution;
use crate::solvers::{PdeSpec, Refinement};

pub use http::{HttpBackend, HttpConfig};
pub use oracle::{OracleBackend, OracleMode, RepeatLastBackend};
pub use replay::{request_hash, FixtureEntry, ReplayBackend};
pub use slice::{generate_slice, probe_tokenization, rollout, ProbeReport, ProbeStatus, SliceOutput, PROBE_PROMPT};

/// Default sampling temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.6;
/// Default number of alternatives recorded per position.
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_k_probs: usize,
    pub stop: Option<String>,
    #[serde(default)]
    pub echo: bool,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 && !self.echo {
            return Err(Error::invalid("max_tokens must be at least 1"));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::invalid(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.top_k_probs == 0 {
            return Err(Error::invalid("top_k_probs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub tokens: Vec<String>,
    /// One entry per token, aligned with `tokens`.
    pub distributions: Vec<TokenDistribution>,
}

impl GenerationResult {
    pub fn text(&self) -> String {
        self.tokens.concat()
    }
}

/// Sampling parameters shared by every request of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            top_k: DEFAULT_TOP_K,
        }
    }
}

/// Problem description available to backends that simulate the dynamics.
/// Transport backends ignore it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialContext {
    pub pde: PdeSpec,
    pub spatial: SpatialGrid,
    pub time: TimeGrid,
    pub range: QuantRange,
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerationRequest, context: &TrialContext) -> Result<GenerationResult>;

    fn name(&self) -> &str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Http(HttpConfig),
    Oracle {
        #[serde(default)]
        refinement: Refinement,
        #[serde(default)]
        mode: OracleMode,
    },
    /// Serves responses from a fixture; with `record` set, misses are
    /// forwarded to that backend and appended to the fixture.
    Replay {
        fixture: PathBuf,
        #[serde(default)]
        record: Option<Box<BackendConfig>>,
    },
    RepeatLast,
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn Generator>> {
        Ok(match self {
            Self::Http(c) => Arc::new(HttpBackend::new(c.clone())?),
            Self::Oracle { refinement, mode } => Arc::new(OracleBackend::new(*refinement).with_mode(*mode)),
            Self::Replay { fixture, record } => {
                let inner = record.as_ref().map(|c| c.build()).transpose()?;
                Arc::new(ReplayBackend::open(fixture, inner)?)
            }
            Self::RepeatLast => Arc::new(RepeatLastBackend),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Http(_) => "http",
            Self::Oracle { .. } => "oracle",
            Self::Replay { .. } => "replay",
            Self::RepeatLast => "repeat_last",
        }
    }
}

/// Returns queued results in order; for tests and demonstrations.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<Result<GenerationResult>>>,
    seen: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedBackend {
    pub fn new(script: impl IntoIterator<Item = Result<GenerationResult>>) -> Self {
        Self {
            queue: Mutex::new(script.into_iter().collect()),
            seen: Mutex::default(),
        }
    }

    /// Result whose tokens are the delimiters and groups of `text`, each
    /// with a one-hot distribution.
    pub fn one_hot(text: &str) -> GenerationResult {
        let tokens = split_tokens(text);
        let distributions = tokens.iter().map(|t| TokenDistribution::one_hot(t.clone())).collect();
        GenerationResult { tokens, distributions }
    }

    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl Generator for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest, _: &TrialContext) -> Result<GenerationResult> {
        self.seen.lock().unwrap().push(request.clone());
        self.queue
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(Error::Transport("script exhausted".into())))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Splits text into digit groups and single-character delimiters.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut group = String::new();
    for c in text.chars() {
        if c.is_ascii_digit() {
            group.push(c);
        } else {
            if !group.is_empty() {
                out.push(std::mem::take(&mut group));
            }
            out.push(c.to_string());
        }
    }
    if !group.is_empty() {
        out.push(group);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_tokens_groups_digits() {
        assert_eq!(split_tokens("150,500;8"), vec!["150", ",", "500", ";", "8"]);
        assert!(split_tokens("").is_empty());
    }

    #[test]
    fn config_serde_shapes() {
        let c: BackendConfig = toml::from_str("kind = \"oracle\"").unwrap();
        assert_eq!(
            c,
            BackendConfig::Oracle {
                refinement: Refinement::default(),
                mode: OracleMode::Trajectory
            }
        );
        let c: BackendConfig = toml::from_str(
            "kind = \"replay\"\nfixture = \"f.jsonl\"\n[record]\nkind = \"repeat_last\"",
        )
        .unwrap();
        assert!(matches!(c, BackendConfig::Replay { record: Some(_), .. }));
        assert!(toml::from_str::<BackendConfig>("kind = \"oracle\"\nbogus = 1").is_err());
    }

    #[test]
    fn request_validation() {
        let mut r = GenerationRequest {
            prompt: "150;".into(),
            max_tokens: 1,
            temperature: 0.6,
            top_k_probs: 5,
            stop: None,
            echo: false,
        };
        r.validate().unwrap();
        r.max_tokens = 0;
        assert!(r.validate().is_err());
        r.max_tokens = 1;
        r.temperature = -1.0;
        assert!(r.validate().is_err());
    }
}
