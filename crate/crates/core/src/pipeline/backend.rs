//! HTTP client for remote scoring and completion backends.
//!
//! Two endpoints, JSON in and out:
//!
//! * `POST /v1/score`    `{"model": .., "text": ..}`         → `{"score": 0.0..=1.0}`
//! * `POST /v1/complete` `{"prompt": .., "max_tokens": ..}`  → `{"text": ..}`
//!
//! Transient failures (timeouts, refused connections, 429 and 5xx) are
//! retried with exponential backoff.

use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cascade::{BinaryScorer, ScorerError};
use crate::spoiler::CompletionBackend;

pub const SCORE_PATH: &str = "/v1/score";
pub const COMPLETE_PATH: &str = "/v1/complete";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("{endpoint}: request timed out")]
    Timeout { endpoint: String },
    #[error("{endpoint}: connection refused")]
    ConnectionRefused { endpoint: String },
    #[error("{endpoint}: transport error: {detail}")]
    Transport { endpoint: String, detail: String },
    #[error("{endpoint}: HTTP status {status}")]
    Status { endpoint: String, status: u16 },
    #[error("{endpoint}: malformed response: {detail}")]
    Malformed { endpoint: String, detail: String },
    #[error("{endpoint}: score {score} outside [0, 1]")]
    ScoreOutOfRange { endpoint: String, score: f64 },
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout { .. } | BackendError::ConnectionRefused { .. } | BackendError::Transport { .. } => {
                true
            }
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSettings {
    pub base_url: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            base_url: "http://127.0.0.1:8080".into(),
            timeout_ms: 30_000,
            max_in_flight: 4,
            retries: 3,
            backoff_ms: 200,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    model: &'a str,
    text: &'a str,
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

/// Blocking client shared by remote scorers and completion calls.
pub struct BackendClient {
    settings: BackendSettings,
    agent: ureq::Agent,
    limiter: Limiter,
    retries_used: AtomicUsize,
    requests: AtomicUsize,
}

impl std::fmt::Debug for BackendClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendClient").field("settings", &self.settings).finish()
    }
}

fn classify_io(endpoint: &str, e: &io::Error) -> BackendError {
    match e.kind() {
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => BackendError::Timeout {
            endpoint: endpoint.into(),
        },
        io::ErrorKind::ConnectionRefused => BackendError::ConnectionRefused {
            endpoint: endpoint.into(),
        },
        _ => BackendError::Transport {
            endpoint: endpoint.into(),
            detail: e.to_string(),
        },
    }
}

fn classify(endpoint: &str, e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::StatusCode(status) => BackendError::Status {
            endpoint: endpoint.into(),
            status,
        },
        ureq::Error::Timeout(_) => BackendError::Timeout {
            endpoint: endpoint.into(),
        },
        ureq::Error::Io(io) => classify_io(endpoint, &io),
        ureq::Error::ConnectionFailed => BackendError::ConnectionRefused {
            endpoint: endpoint.into(),
        },
        other => BackendError::Transport {
            endpoint: endpoint.into(),
            detail: other.to_string(),
        },
    }
}

impl BackendClient {
    pub fn new(settings: BackendSettings) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .http_status_as_error(false)
            .build();
        BackendClient {
            limiter: Limiter::new(settings.max_in_flight),
            agent: config.into(),
            settings,
            retries_used: AtomicUsize::new(0),
            requests: AtomicUsize::new(0),
        }
    }

    pub fn settings(&self) -> &BackendSettings {
        &self.settings
    }

    /// Retries performed so far across all calls.
    pub fn retries_used(&self) -> usize {
        self.retries_used.load(Ordering::SeqCst)
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.settings.base_url.trim_end_matches('/'), path)
    }

    fn post_once<T: Serialize>(&self, path: &str, body: &T) -> Result<Value, BackendError> {
        let _permit = self.limiter.acquire();
        self.requests.fetch_add(1, Ordering::SeqCst);
        let mut resp = self.agent.post(&self.url(path)).send_json(body).map_err(|e| classify(path, e))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::Status {
                endpoint: path.into(),
                status,
            });
        }
        let text = resp.body_mut().read_to_string().map_err(|e| classify(path, e))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed {
            endpoint: path.into(),
            detail: e.to_string(),
        })
    }

    fn post<T: Serialize>(&self, path: &str, body: &T) -> Result<Value, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_transient() && attempt < self.settings.retries => {
                    let delay = Duration::from_millis(self.settings.backoff_ms.saturating_mul(1 << attempt.min(16)));
                    attempt += 1;
                    self.retries_used.fetch_add(1, Ordering::SeqCst);
                    tracing::warn!(endpoint = path, attempt, "retrying in {delay:?} after: {e}");
                    std::thread::sleep(delay);
                }
                Err(e) => return Err(e),
                Ok(v) => {
                    if attempt > 0 {
                        tracing::info!(endpoint = path, retries = attempt, "succeeded after retries");
                    }
                    return Ok(v);
                }
            }
        }
    }

    pub fn score(&self, model: &str, text: &str) -> Result<f64, BackendError> {
        let v = self.post(SCORE_PATH, &ScoreRequest { model, text })?;
        let score = v.get("score").and_then(Value::as_f64).ok_or_else(|| BackendError::Malformed {
            endpoint: SCORE_PATH.into(),
            detail: format!("expected {{\"score\": number}}, got {v}"),
        })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(BackendError::ScoreOutOfRange {
                endpoint: SCORE_PATH.into(),
                score,
            });
        }
        Ok(score)
    }

    pub fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError> {
        let v = self.post(COMPLETE_PATH, &CompleteRequest { prompt, max_tokens })?;
        v.get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed {
                endpoint: COMPLETE_PATH.into(),
                detail: format!("expected {{\"text\": string}}, got {v}"),
            })
    }
}

impl CompletionBackend for BackendClient {
    fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError> {
        BackendClient::complete(self, prompt, max_tokens)
    }
}

/// A [`BinaryScorer`] answered by the remote `/v1/score` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: Arc<BackendClient>,
    model: String,
}

impl RemoteScorer {
    pub fn new(client: Arc<BackendClient>, model: impl Into<String>) -> Self {
        RemoteScorer {
            client,
            model: model.into(),
        }
    }
}

impl BinaryScorer for RemoteScorer {
    fn score(&self, text: &str) -> Result<f64, ScorerError> {
        self.client
            .score(&self.model, text)
            .map_err(|e| ScorerError(e.to_string()))
    }
}
