use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{GenerationRequest, GenerationResult, Generator, TrialContext};
use crate::error::{Error, Result};
use crate::metrics::TokenDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Completions URL, e.g. `http://localhost:8000/v1/completions`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

fn default_in_flight() -> usize {
    4
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            auth_env: None,
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
            max_in_flight: default_in_flight(),
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Blocking client for OpenAI-compatible `/v1/completions`.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    token: Option<String>,
    slots: Semaphore,
}

enum Attempt {
    Retry(Error),
    Fatal(Error),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        let token = match &config.auth_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| Error::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            slots: Semaphore {
                free: Mutex::new(config.max_in_flight),
                cv: Condvar::new(),
            },
            config,
            agent,
            token,
        })
    }

    fn body(&self, r: &GenerationRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "prompt": r.prompt,
            "max_tokens": r.max_tokens,
            "temperature": r.temperature,
            "logprobs": r.top_k_probs,
            "echo": r.echo,
        });
        if let Some(stop) = &r.stop {
            body["stop"] = json!([stop]);
        }
        body
    }

    fn attempt(&self, body: &Value) -> std::result::Result<Value, Attempt> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Attempt::Retry(Error::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(Error::Transport(e.to_string())))?;
        if !(200..300).contains(&status) {
            let err = Error::Protocol {
                status,
                body: text.chars().take(500).collect(),
            };
            return Err(if status == 429 || status >= 500 { Attempt::Retry(err) } else { Attempt::Fatal(err) });
        }
        serde_json::from_str(&text).map_err(|e| {
            Attempt::Fatal(Error::Protocol {
                status,
                body: format!("invalid JSON ({e}): {}", text.chars().take(200).collect::<String>()),
            })
        })
    }
}

/// Tokens and top-k distributions from a completions response.
pub(crate) fn parse_completion(v: &Value) -> Result<GenerationResult> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| Error::Protocol {
            status: 200,
            body: "response has no choices".into(),
        })?;
    let lp = choice
        .get("logprobs")
        .filter(|l| !l.is_null())
        .ok_or_else(|| Error::Capability("endpoint returned no logprobs".into()))?;
    let tokens: Vec<String> = lp
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Capability("logprobs lack a token list".into()))?
        .iter()
        .map(|t| t.as_str().unwrap_or_default().to_string())
        .collect();
    let top = lp
        .get("top_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Capability("logprobs lack top_logprobs".into()))?;
    let distributions = top
        .iter()
        .zip(&tokens)
        .map(|(entry, token)| match entry.as_object() {
            Some(map) => TokenDistribution::from_logprobs(
                map.iter().filter_map(|(t, lp)| lp.as_f64().map(|lp| (t.clone(), lp))),
            ),
            // echoed first token carries no alternatives
            None => TokenDistribution::one_hot(token.clone()),
        })
        .collect::<Vec<_>>();
    if distributions.len() != tokens.len() {
        return Err(Error::Capability(format!(
            "{} tokens but {} distributions",
            tokens.len(),
            distributions.len()
        )));
    }
    Ok(GenerationResult { tokens, distributions })
}

impl Generator for HttpBackend {
    fn generate(&self, request: &GenerationRequest, _: &TrialContext) -> Result<GenerationResult> {
        request.validate()?;
        let body = self.body(request);
        let _permit = self.slots.acquire();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(v) => return parse_completion(&v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= self.config.retries => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("request failed ({e}); retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}
