//! HTTP clients for the three external model kinds: chat-completion LLMs,
//! text-to-speech and speech recognition.
//!
//! Each kind speaks a minimal JSON contract:
//!
//! | kind | route | request | response |
//! |------|-------|---------|----------|
//! | llm  | `POST {base_url}/chat` | `{"model", "messages": [{"role", "content"}], "temperature"}` | `{"content"}` |
//! | tts  | `POST {base_url}/tts`  | `{"model", "text"}` | `{"audio_b64", "sample_rate"}` |
//! | asr  | `POST {base_url}/asr`  | `{"model", "audio_b64", "sample_rate"}` | `{"text"}` |
//!
//! Audio travels as base64-encoded raw little-endian 16-bit mono PCM. The
//! credential, when configured, is sent as `Authorization: Bearer <token>`.
//! A chat request's batch tag is forwarded in the `X-Batch-Tag` header.
//!
//! Transport failures, timeouts, 429 and 5xx responses are retried with
//! exponential backoff and jitter; other 4xx responses fail immediately.
//! The number of requests in flight per client never exceeds
//! `max_parallel`.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use base64::engine::general_purpose::STANDARD as B64;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::audio::Clip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    Llm,
    Tts,
    Asr,
}

impl fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EndpointKind::Llm => "llm",
            EndpointKind::Tts => "tts",
            EndpointKind::Asr => "asr",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backoff {
    #[serde(default = "default_backoff_base_ms")]
    pub base_ms: u64,
    #[serde(default = "default_backoff_cap_ms")]
    pub cap_ms: u64,
}

fn default_backoff_base_ms() -> u64 {
    1_000
}
fn default_backoff_cap_ms() -> u64 {
    30_000
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base_ms: default_backoff_base_ms(),
            cap_ms: default_backoff_cap_ms(),
        }
    }
}

impl Backoff {
    /// Delay before retry number `attempt` (0-based): half the capped
    /// exponential step plus a uniform jitter over the other half.
    pub fn delay(&self, attempt: u32) -> Duration {
        let step = self
            .base_ms
            .saturating_mul(1u64.checked_shl(attempt).unwrap_or(u64::MAX))
            .min(self.cap_ms);
        let half = step / 2;
        let jitter = if step > half {
            rand::rng().random_range(0..=step - half)
        } else {
            0
        };
        Duration::from_millis(half + jitter)
    }
}

/// Where and how to reach one model endpoint.
///
/// Only the *name* of the environment variable holding the credential is
/// part of the configuration, so serializing a config never leaks a token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub kind: EndpointKind,
    pub base_url: String,
    pub model_id: String,
    #[serde(default)]
    pub auth_token_env: String,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub backoff: Backoff,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_max_parallel() -> usize {
    4
}
fn default_max_retries() -> u32 {
    3
}

impl EndpointConfig {
    pub fn new(kind: EndpointKind, base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            kind,
            base_url: base_url.into(),
            model_id: model_id.into(),
            auth_token_env: String::new(),
            timeout: default_timeout(),
            max_parallel: default_max_parallel(),
            max_retries: default_max_retries(),
            backoff: Backoff::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_parallel < 1 {
            return Err(ClientError::InvalidConfig("max_parallel must be >= 1".into()));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(ClientError::InvalidConfig("timeout must be > 0".into()));
        }
        reqwest::Url::parse(&self.base_url)
            .map_err(|e| ClientError::InvalidConfig(format!("base_url: {e}")))?;
        Ok(())
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), route)
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("endpoint is {actual}, operation needs {expected}")]
    WrongKind {
        expected: EndpointKind,
        actual: EndpointKind,
    },
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetryExhausted { attempts: u32, last: String },
    #[error("provider rejected request with status {status}: {body}")]
    ProviderRejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
}

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    /// (user, assistant) exchanges placed before the final user turn.
    pub few_shot: Vec<(String, String)>,
    pub user_prompt: String,
    pub temperature: f64,
    pub batch_tag: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    content: String,
}

#[derive(Debug, Serialize)]
struct TtsBody<'a> {
    model: &'a str,
    text: &'a str,
}

#[derive(Debug, Deserialize)]
struct TtsReply {
    audio_b64: String,
    sample_rate: u32,
}

#[derive(Debug, Serialize)]
struct AsrBody<'a> {
    model: &'a str,
    audio_b64: String,
    sample_rate: u32,
}

#[derive(Debug, Deserialize)]
struct AsrReply {
    text: String,
}

impl ChatRequest {
    /// Flatten into the wire message list.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let msg = |role: &str, content: &str| ChatMessage {
            role: role.to_string(),
            content: content.to_string(),
        };
        let mut out = vec![msg("system", &self.system_prompt)];
        for (user, assistant) in &self.few_shot {
            out.push(msg("user", user));
            out.push(msg("assistant", assistant));
        }
        out.push(msg("user", &self.user_prompt));
        out
    }
}

enum Failure {
    Retryable(String),
    Fatal(ClientError),
}

/// A client bound to one endpoint. Cheap to clone; clones share the
/// parallelism limit.
#[derive(Clone)]
pub struct ModelClient {
    cfg: Arc<EndpointConfig>,
    http: reqwest::Client,
    token: Option<Arc<str>>,
    permits: Arc<Semaphore>,
}

impl fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelClient")
            .field("cfg", &self.cfg)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl ModelClient {
    /// Build a client, reading the credential from `cfg.auth_token_env` when
    /// that is non-empty.
    pub fn new(cfg: EndpointConfig) -> Result<Self, ClientError> {
        let token = if cfg.auth_token_env.is_empty() {
            None
        } else {
            Some(
                std::env::var(&cfg.auth_token_env)
                    .map_err(|_| ClientError::MissingCredential(cfg.auth_token_env.clone()))?,
            )
        };
        Self::with_token(cfg, token)
    }

    /// Build a client with an explicitly supplied credential.
    pub fn with_token(cfg: EndpointConfig, token: Option<String>) -> Result<Self, ClientError> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .build()
            .map_err(|e| ClientError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            permits: Arc::new(Semaphore::new(cfg.max_parallel)),
            cfg: Arc::new(cfg),
            http,
            token: token.map(Arc::from),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn require(&self, kind: EndpointKind) -> Result<(), ClientError> {
        if self.cfg.kind == kind {
            Ok(())
        } else {
            Err(ClientError::WrongKind {
                expected: kind,
                actual: self.cfg.kind,
            })
        }
    }

    /// Send a chat request and return the assistant message body verbatim.
    pub async fn complete_chat(&self, req: &ChatRequest) -> Result<String, ClientError> {
        self.require(EndpointKind::Llm)?;
        let body = ChatBody {
            model: &self.cfg.model_id,
            messages: req.messages(),
            temperature: req.temperature,
        };
        let reply: ChatReply = self.post("chat", &body, Some(&req.batch_tag)).await?;
        Ok(reply.content)
    }

    /// Synthesize `text` into mono audio.
    pub async fn synthesize_speech(&self, text: &str) -> Result<Clip, ClientError> {
        self.require(EndpointKind::Tts)?;
        if text.trim().is_empty() {
            return Err(ClientError::InvalidInput("empty text".into()));
        }
        let reply: TtsReply = self
            .post(
                "tts",
                &TtsBody {
                    model: &self.cfg.model_id,
                    text,
                },
                None,
            )
            .await?;
        let bytes = B64
            .decode(reply.audio_b64.as_bytes())
            .map_err(|e| ClientError::BadResponse(format!("audio_b64: {e}")))?;
        if reply.sample_rate == 0 {
            return Err(ClientError::BadResponse("sample_rate is 0".into()));
        }
        let clip = Clip::from_pcm16_le(&bytes, reply.sample_rate)
            .map_err(|e| ClientError::BadResponse(e.to_string()))?;
        if clip.samples.is_empty() {
            return Err(ClientError::BadResponse("empty audio".into()));
        }
        Ok(clip)
    }

    /// Transcribe a clip. An empty transcript is a valid result.
    pub async fn transcribe(&self, audio: &Clip) -> Result<String, ClientError> {
        self.require(EndpointKind::Asr)?;
        if audio.samples.is_empty() {
            return Err(ClientError::InvalidInput("zero-length audio".into()));
        }
        let reply: AsrReply = self
            .post(
                "asr",
                &AsrBody {
                    model: &self.cfg.model_id,
                    audio_b64: B64.encode(audio.to_pcm16_le()),
                    sample_rate: audio.sample_rate,
                },
                None,
            )
            .await?;
        Ok(reply.text)
    }

    async fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        route: &str,
        body: &B,
        batch_tag: Option<&str>,
    ) -> Result<R, ClientError> {
        let url = self.cfg.url(route);
        let mut attempt = 0u32;
        loop {
            let outcome = {
                let _permit = self
                    .permits
                    .acquire()
                    .await
                    .expect("semaphore is never closed");
                self.send_once(&url, body, batch_tag).await
            };
            match outcome {
                Ok(reply) => return Ok(reply),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(last)) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(ClientError::RetryExhausted {
                            attempts: attempt + 1,
                            last,
                        });
                    }
                    let delay = self.cfg.backoff.delay(attempt);
                    tracing::debug!(%url, attempt, ?delay, %last, "retrying");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
            }
        }
    }

    async fn send_once<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
        batch_tag: Option<&str>,
    ) -> Result<R, Failure> {
        let mut req = self.http.post(url).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        if let Some(tag) = batch_tag.filter(|t| !t.is_empty()) {
            req = req.header("X-Batch-Tag", tag);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| Failure::Retryable(format!("transport: {e}")))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retryable(format!("status {}", status.as_u16())));
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(Failure::Fatal(ClientError::ProviderRejected {
                status: status.as_u16(),
                body,
            }));
        }
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| Failure::Retryable(format!("transport: {e}")))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Failure::Fatal(ClientError::BadResponse(e.to_string())))
    }
}
