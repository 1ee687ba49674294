use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable holding the bearer credential for the live endpoint.
pub const API_KEY_ENV: &str = "SEMIFORGE_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("endpoint unreachable after {attempts} attempt(s): {last_error}")]
    EndpointUnreachable { attempts: u32, last_error: String },
    #[error("no replay fixture for prompt hash {0}")]
    ReplayMiss(String),
    #[error("credential env var {API_KEY_ENV} is not set")]
    AuthMissing,
    #[error("endpoint rejected request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("replay store i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl CompletionRequest {
    /// Data-construction defaults: temperature 0.7, top_p 0.95.
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.7,
            top_p: 0.95,
            max_tokens: 2048,
            model_id: model_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.temperature >= 0.0) {
            return Err(ClientError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ClientError::InvalidRequest(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: Option<String>,
    pub usage: Usage,
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ClientError>;
}

/// Hex sha256 of the prompt text; the replay store key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Serves completions from `<dir>/<sha256(prompt)>.txt`.
#[derive(Debug, Clone)]
pub struct ReplayClient {
    dir: PathBuf,
}

impl ReplayClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn fixture_path(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", prompt_hash(prompt)))
    }

    /// Stores `text` as the completion for `prompt`.
    pub fn record(&self, prompt: &str, text: &str) -> Result<PathBuf, ClientError> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.fixture_path(prompt);
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

impl CompletionClient for ReplayClient {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ClientError> {
        request.validate()?;
        let path = self.fixture_path(&request.prompt);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Completion {
                text,
                finish_reason: Some("replay".into()),
                usage: Usage::default(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(ClientError::ReplayMiss(prompt_hash(&request.prompt)))
            }
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32
            .checked_shl(attempt.saturating_sub(1))
            .unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// OpenAI-style chat-completion client over blocking HTTP.
pub struct LiveClient {
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

enum Attempt {
    Done(Completion),
    Retry {
        error: String,
        wait: Option<Duration>,
    },
    Fatal(ClientError),
}

impl LiveClient {
    /// Reads the credential from [`API_KEY_ENV`]; fails before any network traffic when unset.
    pub fn from_env(base_url: impl Into<String>, retry: RetryPolicy) -> Result<Self, ClientError> {
        let key = std::env::var(API_KEY_ENV).unwrap_or_default();
        Self::new(base_url, key, retry)
    }

    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        retry: RetryPolicy,
    ) -> Result<Self, ClientError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(ClientError::AuthMissing);
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ClientError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            retry,
            http,
        })
    }

    fn attempt(&self, request: &CompletionRequest) -> Attempt {
        let body = ChatRequest {
            model: &request.model_id,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            top_p: request.top_p,
            max_tokens: request.max_tokens,
        };
        let response = match self
            .http
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
        {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    error: e.to_string(),
                    wait: None,
                }
            }
        };
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            let wait = response
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|s| s.is_finite() && *s >= 0.0)
                .map(Duration::from_secs_f64);
            return Attempt::Retry {
                error: format!("HTTP {status}"),
                wait,
            };
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Attempt::Fatal(ClientError::Rejected {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: ChatResponse = match response.json() {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(ClientError::MalformedResponse(e.to_string())),
        };
        let Some(choice) = parsed.choices.into_iter().next() else {
            return Attempt::Fatal(ClientError::MalformedResponse("no choices".into()));
        };
        Attempt::Done(Completion {
            text: choice.message.content.unwrap_or_default(),
            finish_reason: choice.finish_reason,
            usage: parsed.usage.unwrap_or_default(),
        })
    }
}

impl CompletionClient for LiveClient {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ClientError> {
        request.validate()?;
        let attempts = self.retry.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { error, wait } => {
                    log::warn!("completion attempt {attempt}/{attempts} failed: {error}");
                    last_error = error;
                    if attempt < attempts {
                        let delay = wait
                            .map(|w| w.min(self.retry.max_delay))
                            .unwrap_or_else(|| self.retry.backoff(attempt));
                        thread::sleep(delay);
                    }
                }
            }
        }
        Err(ClientError::EndpointUnreachable {
            attempts,
            last_error,
        })
    }
}
