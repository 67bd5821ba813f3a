//! JSON-over-HTTP client backend.
//!
//! Talks to an external inference server that computes ranks (and argmax
//! steps) server-side. Transferring ranks instead of logits keeps payloads
//! `O(s)` rather than `O(s·v)` and works with servers that refuse to expose
//! full logit vectors.
//!
//! ## Wire protocol (version 1)
//!
//! ```text
//! POST /v1/ranks    {"v":1, "model": str, "tokens": [int…], "context_len": int}
//!   →  200          {"v":1, "ranks": [int…], "vocab_size": int, "model": str}
//!
//! POST /v1/argmax   {"v":1, "model": str, "prefix": [int…]}
//!   →  200          {"v":1, "token": int, "vocab_size": int, "model": str}
//!
//! any error         {"v":1, "error": {"code": str, "message": str}}  (HTTP 4xx/5xx)
//! ```
//!
//! `ranks` carries one entry per position from `context_len` onward. The
//! `/v1/argmax` endpoint exists so greedy generation can run against remote
//! models; each generated token costs one call, preserving the
//! scoring-is-cheap cost asymmetry.
//!
//! The client validates every payload before returning it — a rank at or
//! above `vocab_size`, a length mismatch, a missing field, or a version skew
//! is reported as a protocol violation naming the offending field. Transport
//! failures and timeouts are retried up to [`MAX_RETRIES`] times with
//! exponential backoff starting at [`RETRY_BASE_MS`] before giving up with
//! "backend unavailable". Servers that answer with an error document are
//! never retried.

use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, ScoringModel};
use crate::score::RankVector;

/// Transport retries after the initial attempt.
pub const MAX_RETRIES: u32 = 3;
/// First retry delay; doubles per retry.
pub const RETRY_BASE_MS: u64 = 100;

/// Connection settings for a remote scoring server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    /// Model name sent in every request.
    pub model_name: String,
    /// Per-request timeout in milliseconds (> 0).
    pub timeout_ms: u64,
    /// Maximum in-flight requests through this handle (≥ 1).
    pub max_batch: usize,
    /// Optional bearer token attached as `authorization`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
}

impl RemoteBackendConfig {
    fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidParams(
                "remote timeout must be positive".to_string(),
            ));
        }
        if self.max_batch == 0 {
            return Err(BackendError::InvalidParams(
                "remote max_batch must be at least 1".to_string(),
            ));
        }
        if self.endpoint.is_empty() {
            return Err(BackendError::InvalidParams(
                "remote endpoint must be a URL".to_string(),
            ));
        }
        Ok(())
    }
}

/// Counting gate limiting concurrent in-flight requests to `max_batch`.
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

struct GatePass<'a>(&'a Gate);

impl Gate {
    fn new(permits: usize) -> Gate {
        Gate {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePass<'_> {
        let mut permits = self.permits.lock().expect("gate lock poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("gate lock poisoned");
        }
        *permits -= 1;
        GatePass(self)
    }
}

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("gate lock poisoned") += 1;
        self.0.available.notify_one();
    }
}

/// A remote model speaking the `/v1` wire protocol.
///
/// Cheap to clone conceptually but deliberately not `Clone`: the in-flight
/// gate is per-handle. Share it behind an `Arc` instead.
pub struct RemoteModel {
    config: RemoteBackendConfig,
    agent: ureq::Agent,
    gate: Gate,
    vocab_size: OnceLock<u32>,
}

impl RemoteModel {
    /// Build a handle and verify the server answers: a zero-token rank query
    /// doubles as the handshake that learns the vocabulary size.
    pub fn connect(config: RemoteBackendConfig) -> Result<RemoteModel, BackendError> {
        let model = RemoteModel::new(config)?;
        // The zero-token response carries vocab_size; ranks() caches it.
        model.ranks(&[], 0)?;
        Ok(model)
    }

    /// Build a handle without contacting the server. Rank queries work
    /// immediately; `vocab_size()` is only known after the first response.
    pub fn new(config: RemoteBackendConfig) -> Result<RemoteModel, BackendError> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(RemoteModel {
            gate: Gate::new(config.max_batch),
            config,
            agent,
            vocab_size: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &RemoteBackendConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.endpoint.trim_end_matches('/'))
    }

    /// POST with retries on transport failure; server-spoken errors are
    /// returned immediately.
    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, BackendError> {
        let _pass = self.gate.acquire();
        let url = self.url(path);
        let mut delay = Duration::from_millis(RETRY_BASE_MS);
        let mut last_failure = String::new();
        for attempt in 0..=MAX_RETRIES {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let mut request = self.agent.post(&url);
            if let Some(token) = &self.config.auth_token {
                request = request.set("authorization", &format!("Bearer {token}"));
            }
            match request.send_json(body) {
                Ok(response) => {
                    let text = response.into_string().map_err(|e| {
                        BackendError::ProtocolViolation(format!("unreadable response body: {e}"))
                    })?;
                    return serde_json::from_str(&text).map_err(|e| {
                        BackendError::ProtocolViolation(format!("response is not JSON: {e}"))
                    });
                }
                Err(ureq::Error::Status(code, response)) => {
                    return Err(error_from_status(code, response));
                }
                Err(ureq::Error::Transport(transport)) => {
                    last_failure = transport.to_string();
                    log::debug!("attempt {} against {url} failed: {last_failure}", attempt + 1);
                }
            }
        }
        Err(BackendError::Unavailable(format!(
            "{url} still failing after {MAX_RETRIES} retries: {last_failure}"
        )))
    }

    /// Rank query over the wire: ranks for `tokens[context_len..]`, each
    /// conditioned on the tokens before it.
    pub fn ranks(&self, tokens: &[u32], context_len: usize) -> Result<RankVector, BackendError> {
        if context_len > tokens.len() {
            return Err(BackendError::InvalidLength(format!(
                "context_len {} exceeds token count {}",
                context_len,
                tokens.len()
            )));
        }
        let body = json!({
            "v": 1,
            "model": self.config.model_name,
            "tokens": tokens,
            "context_len": context_len,
        });
        let response = self.post("/v1/ranks", &body)?;
        let rv = validate_ranks_response(&response, tokens.len() - context_len, &self.config.model_name)?;
        let _ = self.vocab_size.set(rv.vocab_size);
        Ok(rv)
    }
}

fn error_from_status(code: u16, response: ureq::Response) -> BackendError {
    #[derive(Deserialize)]
    struct ErrorBody {
        code: String,
        message: String,
    }
    #[derive(Deserialize)]
    struct ErrorDoc {
        v: u64,
        error: ErrorBody,
    }
    let text = response.into_string().unwrap_or_default();
    match serde_json::from_str::<ErrorDoc>(&text) {
        Ok(doc) if doc.v == 1 => BackendError::Server {
            code: doc.error.code,
            message: doc.error.message,
        },
        _ => BackendError::ProtocolViolation(format!(
            "HTTP {code} without a well-formed error document"
        )),
    }
}

fn require<'v>(
    object: &'v serde_json::Map<String, serde_json::Value>,
    field: &str,
) -> Result<&'v serde_json::Value, BackendError> {
    object.get(field).ok_or_else(|| {
        BackendError::ProtocolViolation(format!("response missing field {field:?}"))
    })
}

fn check_envelope(
    value: &serde_json::Value,
    expected_model: &str,
) -> Result<(serde_json::Map<String, serde_json::Value>, u32), BackendError> {
    let object = value
        .as_object()
        .ok_or_else(|| BackendError::ProtocolViolation("response is not a JSON object".to_string()))?
        .clone();
    let version = require(&object, "v")?.as_u64();
    if version != Some(1) {
        return Err(BackendError::ProtocolViolation(format!(
            "unsupported protocol version in field \"v\": {}",
            require(&object, "v")?
        )));
    }
    let model = require(&object, "model")?
        .as_str()
        .ok_or_else(|| BackendError::ProtocolViolation("field \"model\" is not a string".to_string()))?;
    if model != expected_model {
        return Err(BackendError::ProtocolViolation(format!(
            "response for model {model:?}, requested {expected_model:?}"
        )));
    }
    let vocab_size = require(&object, "vocab_size")?.as_u64().ok_or_else(|| {
        BackendError::ProtocolViolation("field \"vocab_size\" is not a non-negative integer".to_string())
    })?;
    if !(2..=u32::MAX as u64).contains(&vocab_size) {
        return Err(BackendError::ProtocolViolation(format!(
            "field \"vocab_size\" out of range: {vocab_size}"
        )));
    }
    Ok((object, vocab_size as u32))
}

fn validate_ranks_response(
    value: &serde_json::Value,
    expected_len: usize,
    expected_model: &str,
) -> Result<RankVector, BackendError> {
    let (object, vocab_size) = check_envelope(value, expected_model)?;
    let ranks_value = require(&object, "ranks")?;
    let ranks_array = ranks_value.as_array().ok_or_else(|| {
        BackendError::ProtocolViolation("field \"ranks\" is not an array".to_string())
    })?;
    if ranks_array.len() != expected_len {
        return Err(BackendError::ProtocolViolation(format!(
            "expected {expected_len} ranks, got {}",
            ranks_array.len()
        )));
    }
    let mut ranks = Vec::with_capacity(ranks_array.len());
    for (position, rank_value) in ranks_array.iter().enumerate() {
        let rank = rank_value.as_u64().ok_or_else(|| {
            BackendError::ProtocolViolation(format!(
                "rank at position {position} is not a non-negative integer: {rank_value}"
            ))
        })?;
        if rank >= vocab_size as u64 {
            return Err(BackendError::ProtocolViolation(format!(
                "rank {rank} at position {position} not below vocab size {vocab_size}"
            )));
        }
        ranks.push(rank as u32);
    }
    Ok(RankVector {
        ranks,
        vocab_size,
        model_id: expected_model.to_string(),
    })
}

fn validate_argmax_response(
    value: &serde_json::Value,
    expected_model: &str,
) -> Result<u32, BackendError> {
    let (object, vocab_size) = check_envelope(value, expected_model)?;
    let token = require(&object, "token")?.as_u64().ok_or_else(|| {
        BackendError::ProtocolViolation("field \"token\" is not a non-negative integer".to_string())
    })?;
    if token >= vocab_size as u64 {
        return Err(BackendError::ProtocolViolation(format!(
            "argmax token {token} not below vocab size {vocab_size}"
        )));
    }
    Ok(token as u32)
}

/// One-shot rank query against a remote server.
pub fn remote_ranks(
    config: &RemoteBackendConfig,
    tokens: &[u32],
    context_len: usize,
) -> Result<RankVector, BackendError> {
    RemoteModel::new(config.clone())?.ranks(tokens, context_len)
}

impl ScoringModel for RemoteModel {
    fn model_id(&self) -> &str {
        &self.config.model_name
    }

    /// Known after [`RemoteModel::connect`] or any successful rank query;
    /// handles built with [`RemoteModel::new`] report the minimum legal size
    /// until then.
    fn vocab_size(&self) -> u32 {
        self.vocab_size.get().copied().unwrap_or(2)
    }

    /// The server enforces its own window; the client submits sequences
    /// whole rather than second-guessing it.
    fn window(&self) -> usize {
        usize::MAX
    }

    fn rank_batch(&self, tokens: &[u32], first_scored: usize) -> Result<Vec<u32>, BackendError> {
        Ok(self.ranks(tokens, first_scored)?.ranks)
    }

    fn next_argmax(&self, prefix: &[u32]) -> Result<u32, BackendError> {
        let body = json!({
            "v": 1,
            "model": self.config.model_name,
            "prefix": prefix,
        });
        let response = self.post("/v1/argmax", &body)?;
        validate_argmax_response(&response, &self.config.model_name)
    }
}
