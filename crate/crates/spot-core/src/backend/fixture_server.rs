//! In-process HTTP server implementing the `/v1` wire protocol.
//!
//! Exists for two jobs: conformance testing the remote client (including its
//! failure paths) and giving other-language clients something real to talk
//! to during development. A conforming instance fronts an [`NgramModel`];
//! the malformed modes each break the protocol in exactly one way so client
//! validation can be exercised violation by violation.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use super::ngram::NgramModel;
use super::{ranks_for, ScoringModel};

/// What the server sends back.
#[derive(Clone)]
pub enum FixtureMode {
    /// Answer honestly from an n-gram model (full conformance).
    Model(Arc<NgramModel>),
    /// Fixed rank payload regardless of the request.
    Canned { ranks: Vec<u32>, vocab_size: u32 },
    /// Every rank equals `vocab_size` — breaches the rank < v invariant.
    RankOverflow { vocab_size: u32 },
    /// One rank too many.
    LengthMismatch,
    /// Omits `vocab_size` from an otherwise valid response.
    MissingField,
    /// A well-formed error document with this HTTP status.
    ErrorDocument {
        status: u16,
        code: String,
        message: String,
    },
    /// Hold every request longer than the client's timeout, then answer.
    Stall { hold: Duration },
}

/// A loopback fixture server; stops and joins on drop.
pub struct FixtureServer {
    endpoint: String,
    requests: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    /// Bind an ephemeral loopback port and serve `mode`.
    pub fn spawn(mode: FixtureMode) -> FixtureServer {
        FixtureServer::spawn_at("127.0.0.1:0", mode)
    }

    /// Bind a specific address and serve `mode`.
    pub fn spawn_at(addr: &str, mode: FixtureMode) -> FixtureServer {
        let server = tiny_http::Server::http(addr).expect("bind fixture server");
        let bound = server
            .server_addr()
            .to_ip()
            .expect("fixture server listens on tcp");
        let requests = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let requests = Arc::clone(&requests);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv_timeout(Duration::from_millis(25)) {
                        Ok(Some(request)) => {
                            requests.fetch_add(1, Ordering::SeqCst);
                            handle_request(request, &mode);
                        }
                        Ok(None) => continue,
                        Err(_) => break,
                    }
                }
            })
        };
        FixtureServer {
            endpoint: format!("http://{bound}"),
            requests,
            stop,
            handle: Some(handle),
        }
    }

    /// Base URL clients should use as `RemoteBackendConfig::endpoint`.
    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Requests received so far (retries included).
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn respond_json(request: tiny_http::Request, status: u16, body: &Value) {
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header is valid");
    let response = tiny_http::Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

fn error_doc(status: u16, code: &str, message: &str) -> (u16, Value) {
    (
        status,
        json!({"v": 1, "error": {"code": code, "message": message}}),
    )
}

/// Pull a `u32` array field out of the request document.
fn token_field(doc: &Value, field: &str) -> Result<Vec<u32>, String> {
    doc.get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| format!("request missing array field {field:?}"))?
        .iter()
        .map(|v| {
            v.as_u64()
                .filter(|&t| t <= u32::MAX as u64)
                .map(|t| t as u32)
                .ok_or_else(|| format!("non-token value in {field:?}: {v}"))
        })
        .collect()
}

fn handle_request(mut request: tiny_http::Request, mode: &FixtureMode) {
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        let (status, doc) = error_doc(400, "bad_request", "unreadable body");
        return respond_json(request, status, &doc);
    }
    let doc: Value = match serde_json::from_str(&body) {
        Ok(doc) => doc,
        Err(e) => {
            let (status, doc) = error_doc(400, "bad_request", &format!("body is not JSON: {e}"));
            return respond_json(request, status, &doc);
        }
    };
    let url = request.url().to_string();
    let model_name = doc
        .get("model")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();

    // Per-endpoint request decoding happens first so malformed *requests*
    // fail honestly in every mode.
    enum Query {
        Ranks { tokens: Vec<u32>, context_len: usize },
        Argmax { prefix: Vec<u32> },
    }
    let query = match url.as_str() {
        "/v1/ranks" => {
            let tokens = match token_field(&doc, "tokens") {
                Ok(tokens) => tokens,
                Err(message) => {
                    let (status, doc) = error_doc(400, "bad_request", &message);
                    return respond_json(request, status, &doc);
                }
            };
            let context_len = match doc.get("context_len").and_then(Value::as_u64) {
                Some(c) if c as usize <= tokens.len() => c as usize,
                _ => {
                    let (status, doc) =
                        error_doc(400, "bad_request", "context_len missing or out of range");
                    return respond_json(request, status, &doc);
                }
            };
            Query::Ranks { tokens, context_len }
        }
        "/v1/argmax" => match token_field(&doc, "prefix") {
            Ok(prefix) => Query::Argmax { prefix },
            Err(message) => {
                let (status, doc) = error_doc(400, "bad_request", &message);
                return respond_json(request, status, &doc);
            }
        },
        _ => {
            let (status, doc) = error_doc(404, "not_found", &format!("no such endpoint: {url}"));
            return respond_json(request, status, &doc);
        }
    };

    let scored = match &query {
        Query::Ranks { tokens, context_len } => tokens.len() - context_len,
        Query::Argmax { .. } => 0,
    };

    match mode {
        FixtureMode::Model(model) => match query {
            Query::Ranks { tokens, context_len } => {
                match ranks_for(model.as_ref(), &tokens, context_len) {
                    Ok(rv) => respond_json(
                        request,
                        200,
                        &json!({
                            "v": 1,
                            "ranks": rv.ranks,
                            "vocab_size": rv.vocab_size,
                            "model": model_name,
                        }),
                    ),
                    Err(e) => {
                        let (status, doc) = error_doc(400, "bad_request", &e.to_string());
                        respond_json(request, status, &doc)
                    }
                }
            }
            Query::Argmax { prefix } => match model.next_argmax(&prefix) {
                Ok(token) => respond_json(
                    request,
                    200,
                    &json!({
                        "v": 1,
                        "token": token,
                        "vocab_size": model.vocab_size(),
                        "model": model_name,
                    }),
                ),
                Err(e) => {
                    let (status, doc) = error_doc(400, "bad_request", &e.to_string());
                    respond_json(request, status, &doc)
                }
            },
        },
        FixtureMode::Canned { ranks, vocab_size } => respond_json(
            request,
            200,
            &json!({"v": 1, "ranks": ranks, "vocab_size": vocab_size, "model": model_name}),
        ),
        FixtureMode::RankOverflow { vocab_size } => respond_json(
            request,
            200,
            &json!({
                "v": 1,
                "ranks": vec![*vocab_size; scored.max(1)],
                "vocab_size": vocab_size,
                "model": model_name,
            }),
        ),
        FixtureMode::LengthMismatch => respond_json(
            request,
            200,
            &json!({
                "v": 1,
                "ranks": vec![0u32; scored + 1],
                "vocab_size": 8,
                "model": model_name,
            }),
        ),
        FixtureMode::MissingField => respond_json(
            request,
            200,
            &json!({"v": 1, "ranks": vec![0u32; scored], "model": model_name}),
        ),
        FixtureMode::ErrorDocument {
            status,
            code,
            message,
        } => {
            let (status, doc) = error_doc(*status, code, message);
            respond_json(request, status, &doc)
        }
        FixtureMode::Stall { hold } => {
            std::thread::sleep(*hold);
            // By now the client has timed out; answer anyway for hygiene.
            respond_json(
                request,
                200,
                &json!({"v": 1, "ranks": vec![0u32; scored], "vocab_size": 8, "model": model_name}),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ngram::{train_ngram, NgramParams};
    use crate::backend::remote::{remote_ranks, RemoteBackendConfig, RemoteModel};
    use crate::backend::{greedy_generate, BackendError};

    fn test_model() -> Arc<NgramModel> {
        Arc::new(
            train_ngram(
                &[
                    "the cat sat on the mat while the dog slept by the door",
                    "a cat and a dog shared the mat by the open door",
                ],
                &NgramParams::default(),
                "served",
            )
            .unwrap(),
        )
    }

    fn config_for(server: &FixtureServer, timeout_ms: u64) -> RemoteBackendConfig {
        RemoteBackendConfig {
            endpoint: server.endpoint().to_string(),
            model_name: "served".to_string(),
            timeout_ms,
            max_batch: 2,
            auth_token: None,
        }
    }

    #[test]
    fn conforming_server_round_trips_ranks_and_greedy() {
        let model = test_model();
        let server = FixtureServer::spawn(FixtureMode::Model(Arc::clone(&model)));
        let remote = RemoteModel::connect(config_for(&server, 2000)).unwrap();
        assert_eq!(remote.vocab_size(), model.vocab_size());

        let tokens: Vec<u32> = vec![1, 2, 3, 4, 5, 1, 2];
        let local = ranks_for(model.as_ref(), &tokens, 2).unwrap();
        let wire = ranks_for(&remote, &tokens, 2).unwrap();
        assert_eq!(wire.ranks, local.ranks);
        assert_eq!(wire.vocab_size, local.vocab_size);

        let local_gen = greedy_generate(model.as_ref(), &[1, 2], 6).unwrap();
        let wire_gen = greedy_generate(&remote, &[1, 2], 6).unwrap();
        assert_eq!(wire_gen, local_gen);
    }

    #[test]
    fn self_greedy_zero_holds_across_the_wire() {
        let model = test_model();
        let server = FixtureServer::spawn(FixtureMode::Model(Arc::clone(&model)));
        let remote = RemoteModel::connect(config_for(&server, 2000)).unwrap();

        let context = vec![1u32, 2];
        let completion = greedy_generate(&remote, &context, 10).unwrap();
        let mut tokens = context.clone();
        tokens.extend_from_slice(&completion);
        let rv = ranks_for(&remote, &tokens, context.len()).unwrap();
        assert!(rv.ranks.iter().all(|&r| r == 0), "{:?}", rv.ranks);
    }

    #[test]
    fn canned_payloads_pass_through_verbatim() {
        let server = FixtureServer::spawn(FixtureMode::Canned {
            ranks: vec![0, 3],
            vocab_size: 8,
        });
        let mut config = config_for(&server, 2000);
        config.model_name = "m".to_string();
        let rv = remote_ranks(&config, &[5, 6], 0).unwrap();
        assert_eq!(rv.ranks, vec![0, 3]);
        assert_eq!(rv.vocab_size, 8);
    }

    #[test]
    fn each_malformed_mode_raises_a_protocol_violation() {
        let cases: Vec<(FixtureMode, &str)> = vec![
            (FixtureMode::RankOverflow { vocab_size: 8 }, "rank 8"),
            (FixtureMode::LengthMismatch, "expected 1 ranks, got 2"),
            (FixtureMode::MissingField, "vocab_size"),
        ];
        for (mode, needle) in cases {
            let server = FixtureServer::spawn(mode);
            let config = config_for(&server, 2000);
            let err = remote_ranks(&config, &[1], 0).unwrap_err();
            let text = err.to_string();
            assert!(
                text.starts_with("protocol violation") && text.contains(needle),
                "wanted {needle:?} in {text:?}"
            );
        }
    }

    #[test]
    fn server_error_documents_surface_with_their_code() {
        let server = FixtureServer::spawn(FixtureMode::ErrorDocument {
            status: 503,
            code: "overloaded".to_string(),
            message: "try later".to_string(),
        });
        let err = remote_ranks(&config_for(&server, 2000), &[1], 0).unwrap_err();
        match err {
            BackendError::Server { code, message } => {
                assert_eq!(code, "overloaded");
                assert_eq!(message, "try later");
            }
            other => panic!("expected server error, got {other}"),
        }
        // Error documents are authoritative: exactly one request, no retries.
        assert_eq!(server.request_count(), 1);
    }

    #[test]
    fn timeouts_retry_three_times_then_fail_unavailable() {
        let server = FixtureServer::spawn(FixtureMode::Stall {
            hold: Duration::from_millis(250),
        });
        let err = remote_ranks(&config_for(&server, 100), &[1], 0).unwrap_err();
        assert!(
            err.to_string().starts_with("backend unavailable"),
            "{err}"
        );
        // Initial attempt + 3 retries, every one received by the server.
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        while server.request_count() < 4 && std::time::Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(20));
        }
        assert_eq!(server.request_count(), 4);
    }

    #[test]
    fn refused_connections_fail_unavailable_after_retries() {
        // Bind-then-drop to find a port nothing listens on.
        let port = {
            let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap().port()
        };
        let config = RemoteBackendConfig {
            endpoint: format!("http://127.0.0.1:{port}"),
            model_name: "m".to_string(),
            timeout_ms: 100,
            max_batch: 1,
            auth_token: None,
        };
        let err = remote_ranks(&config, &[1], 0).unwrap_err();
        assert!(err.to_string().starts_with("backend unavailable"), "{err}");
    }

    #[test]
    fn unknown_endpoints_return_error_documents() {
        let server = FixtureServer::spawn(FixtureMode::Model(test_model()));
        let response = ureq::post(&format!("{}/v2/other", server.endpoint()))
            .send_json(serde_json::json!({"v": 1}));
        match response {
            Err(ureq::Error::Status(404, resp)) => {
                let doc: Value = serde_json::from_str(&resp.into_string().unwrap()).unwrap();
                assert_eq!(doc["error"]["code"], "not_found");
            }
            other => panic!("expected 404 error document, got {other:?}"),
        }
    }
}
