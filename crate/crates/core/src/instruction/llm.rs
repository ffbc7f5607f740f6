//! Chat-completion client used for instruction splitting and judge scoring.

use std::sync::LazyLock;
use std::thread;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ParsedInstruction;
use crate::error::{Error, Result};

/// Environment variable holding the bearer token for the endpoint.
pub const LLM_TOKEN_ENV: &str = "STYLIZE_LLM_TOKEN";

const DEFAULT_SYSTEM_PROMPT: &str = "You split image stylization instructions. Reply with a single JSON object only.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Retries after the first attempt, for transport failures only.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub system_prompt: String,
    #[serde(skip)]
    pub auth_token: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "llama-2-7b-chat".into(),
            temperature: 0.0,
            max_tokens: 256,
            retries: 3,
            backoff_ms: 500,
            timeout_secs: 60,
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
            auth_token: None,
        }
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            ..Self::default()
        }
    }

    /// Picks up the auth token from [`LLM_TOKEN_ENV`] when not already set.
    pub fn with_env_token(mut self) -> Self {
        if self.auth_token.is_none() {
            self.auth_token = std::env::var(LLM_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        }
        self
    }

    fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_owned()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

fn excerpt(body: &str) -> String {
    const LIMIT: usize = 200;
    match body.char_indices().nth(LIMIT) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_owned(),
    }
}

/// Sends one system+user chat request and returns the assistant text verbatim.
///
/// Transport failures are retried with exponential backoff; an HTTP error
/// status is returned immediately with the status code and a body excerpt.
pub fn query_llm(endpoint: &EndpointConfig, prompt: &str) -> Result<String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = json!({
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": endpoint.system_prompt},
            {"role": "user", "content": prompt},
        ],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
    });
    let url = endpoint.url();

    let mut attempt = 0;
    let mut response = loop {
        let mut req = agent.post(&url).header("Content-Type", "application/json");
        if let Some(token) = &endpoint.auth_token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(&body) {
            Ok(resp) => break resp,
            Err(err) if attempt < endpoint.retries => {
                let delay = endpoint.backoff_ms.saturating_mul(1 << attempt.min(16));
                log::warn!("chat request to {url} failed ({err}); retrying in {delay} ms");
                thread::sleep(Duration::from_millis(delay));
                attempt += 1;
            }
            Err(err) => {
                return Err(Error::Endpoint {
                    status: None,
                    message: format!("{url}: {err} (after {} attempts)", attempt + 1),
                })
            }
        }
    };

    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().map_err(|e| Error::Endpoint {
        status: Some(status),
        message: format!("reading response body: {e}"),
    })?;
    if !(200..300).contains(&status) {
        return Err(Error::Endpoint {
            status: Some(status),
            message: excerpt(&text),
        });
    }
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Endpoint {
        status: Some(status),
        message: format!("malformed completion JSON: {e}"),
    })?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| Error::Endpoint {
            status: Some(status),
            message: format!("no assistant message in {}", excerpt(&text)),
        })
}

static FIRST_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());

/// Asks a judge model to grade a predicted split against the reference on a
/// 0–10 scale. The rubric is ours; no particular score is expected.
pub fn judge_score(
    endpoint: &EndpointConfig,
    instruction: &str,
    gold: &ParsedInstruction,
    predicted: &ParsedInstruction,
) -> Result<f64> {
    let prompt = format!(
        "Instruction: \"{instruction}\"\n\
         Reference split: StylizedContent=\"{}\", StylizedObjects=\"{}\"\n\
         Candidate split: StylizedContent=\"{}\", StylizedObjects=\"{}\"\n\
         Rate from 0 to 10 how accurately and meaningfully the candidate separates the style \
         from the target object, compared with the reference. Answer with the number only.",
        gold.stylized_content, gold.stylized_objects, predicted.stylized_content, predicted.stylized_objects
    );
    let reply = query_llm(endpoint, &prompt)?;
    let score: f64 = FIRST_NUMBER
        .find(&reply)
        .and_then(|m| m.as_str().parse().ok())
        .ok_or_else(|| Error::Endpoint {
            status: None,
            message: format!("judge reply has no score: {}", excerpt(&reply)),
        })?;
    if !(0.0..=10.0).contains(&score) {
        return Err(Error::Endpoint {
            status: None,
            message: format!("judge score {score} outside 0..=10"),
        });
    }
    Ok(score)
}
