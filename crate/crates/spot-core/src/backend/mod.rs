//! Scoring-model backends.
//!
//! A backend is anything that can answer *rank queries*: given an observed
//! token and the tokens before it, how many vocabulary entries does the model
//! score strictly higher? Rank 0 means the observed token was the model's top
//! prediction. The same primitive drives greedy generation (repeatedly emit a
//! rank-0 token).
//!
//! | item | purpose |
//! |------|---------|
//! | [`ScoringModel`] | the rank-query + argmax capability every backend implements |
//! | [`ranks_for`] | teacher-forced scoring driver (handles window chunking) |
//! | [`greedy_generate`] | argmax decoding loop |
//! | [`ngram`] | self-contained interpolated n-gram model with persistence |
//! | [`remote`] | JSON-over-HTTP client for external inference servers |
//! | [`Instrumented`] | call-counting wrapper for cost-contract assertions |

pub mod fixture_server;
pub mod ngram;
pub mod remote;
pub mod stub;
pub mod tokenizer;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::score::RankVector;

/// Errors produced by backends and the generation/scoring drivers.
#[derive(Debug, Error)]
pub enum BackendError {
    /// A token id at or above the backend's vocabulary size was supplied.
    #[error("token out of range: id {token} at position {position} is not below vocab size {vocab_size}")]
    TokenOutOfRange {
        token: u32,
        position: usize,
        vocab_size: u32,
    },
    /// A length argument (completion length, context split) was unusable.
    #[error("invalid length: {0}")]
    InvalidLength(String),
    /// Training was attempted on a corpus with no tokens.
    #[error("empty training corpus")]
    EmptyTrainingCorpus,
    /// Model hyperparameters failed validation.
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    /// The remote endpoint could not be reached after exhausting retries.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// The remote endpoint answered, but the payload broke the wire contract.
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    /// The remote endpoint returned a well-formed error document.
    #[error("backend error {code}: {message}")]
    Server { code: String, message: String },
    /// A persisted model file failed to parse.
    #[error("model file corrupt: {0}")]
    ModelFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Wrapper adding the token position at which a nested error surfaced.
    #[error("{source} (at token position {position})")]
    AtPosition {
        position: usize,
        #[source]
        source: Box<BackendError>,
    },
}

impl BackendError {
    /// Wrap `self` with the token position the failure was observed at.
    pub fn at_position(self, position: usize) -> BackendError {
        BackendError::AtPosition {
            position,
            source: Box::new(self),
        }
    }
}

/// A deterministic scoring model: rank queries over token sequences plus a
/// single-step argmax for greedy decoding.
///
/// Implementations must be pure — identical inputs give identical outputs —
/// and safe for concurrent readers. Everything downstream (exact self-greedy
/// zeros, byte-identical evaluation matrices) leans on that determinism.
pub trait ScoringModel: Send + Sync {
    /// Stable identifier recorded in reports and profiles.
    fn model_id(&self) -> &str;

    /// Vocabulary size `v` (≥ 2). Every valid token id is `< v`.
    fn vocab_size(&self) -> u32;

    /// Maximum number of tokens one evaluation call may cover (≥ 2).
    fn window(&self) -> usize;

    /// Batched evaluation entry point.
    ///
    /// Returns the rank of `tokens[i]` for every `i` in
    /// `first_scored..tokens.len()`, each conditioned on `tokens[..i]`
    /// (teacher forcing). Callers guarantee `tokens.len() <= window` and
    /// every id `< vocab_size`; one invocation is one evaluation call for
    /// cost-accounting purposes, regardless of how many positions it scores.
    ///
    /// The rank convention is fixed across backends: the number of
    /// vocabulary entries scored *strictly* higher than the observed token,
    /// so equal-scored tokens share the minimal rank.
    fn rank_batch(&self, tokens: &[u32], first_scored: usize) -> Result<Vec<u32>, BackendError>;

    /// One generation step: the token the model scores highest after
    /// `prefix`, with the lowest token id winning ties. Callers guarantee
    /// `prefix.len() <= window - 1`.
    fn next_argmax(&self, prefix: &[u32]) -> Result<u32, BackendError>;
}

/// Text ↔ token-id conversion for backends that own a tokenizer.
///
/// Kept separate from [`ScoringModel`] because remote backends tokenize
/// server-side and only ever see token ids.
pub trait TokenCodec {
    fn encode(&self, text: &str) -> Vec<u32>;
    fn decode(&self, tokens: &[u32]) -> String;
}

/// A backend usable by the corpus harness and evaluation matrix: it can both
/// score token sequences and move between text and its own token space. The
/// harness relies on the codec to carry completions across backends whose
/// vocabularies disagree.
pub trait HarnessBackend: ScoringModel + TokenCodec {}

impl<T: ScoringModel + TokenCodec> HarnessBackend for T {}

/// Rank of `token` within a dense score vector: the count of entries with a
/// strictly greater score. Equal scores share the minimal rank, which is what
/// makes greedy output score exactly zero under its own generator.
pub fn strict_rank(scores: &[f64], token: usize) -> u32 {
    let target = scores[token];
    scores.iter().filter(|&&s| s > target).count() as u32
}

/// Index of the maximal score; the lowest index wins ties.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_tokens(tokens: &[u32], vocab_size: u32) -> Result<(), BackendError> {
    for (position, &token) in tokens.iter().enumerate() {
        if token >= vocab_size {
            return Err(BackendError::TokenOutOfRange {
                token,
                position,
                vocab_size,
            });
        }
    }
    Ok(())
}

/// Teacher-forced scoring: one rank per completion position of `tokens`,
/// conditioned on the observed prefix.
///
/// Sequences that fit the model window cost exactly one evaluation call.
/// Longer sequences are split into consecutive window-sized chunks —
/// `ceil(len / window)` calls — and positions at a chunk start condition only
/// on tokens within their own chunk (the leftmost tokens fall away, as in any
/// fixed-window decoder).
pub fn ranks_for<M: ScoringModel + ?Sized>(
    model: &M,
    tokens: &[u32],
    context_len: usize,
) -> Result<RankVector, BackendError> {
    if context_len > tokens.len() {
        return Err(BackendError::InvalidLength(format!(
            "context_len {} exceeds token count {}",
            context_len,
            tokens.len()
        )));
    }
    let vocab_size = model.vocab_size();
    check_tokens(tokens, vocab_size)?;

    if tokens.is_empty() {
        return Ok(RankVector {
            ranks: Vec::new(),
            vocab_size,
            model_id: model.model_id().to_string(),
        });
    }

    let window = model.window().max(1);
    let mut ranks = Vec::with_capacity(tokens.len() - context_len);
    let mut start = 0;
    loop {
        let end = (start + window).min(tokens.len());
        let first_scored = context_len.saturating_sub(start).min(end - start);
        let chunk = model
            .rank_batch(&tokens[start..end], first_scored)
            .map_err(|e| e.at_position(start + first_scored))?;
        ranks.extend(chunk);
        if end == tokens.len() {
            break;
        }
        start = end;
    }

    Ok(RankVector {
        ranks,
        vocab_size,
        model_id: model.model_id().to_string(),
    })
}

/// Greedy decoding: emit `s` tokens, each an argmax of the model's
/// distribution conditioned on the context plus everything generated so far
/// (the lowest token id breaks argmax ties). Each emitted token costs one
/// evaluation call, so generation is `s`× the cost of scoring the same
/// sequence.
///
/// Once the running sequence outgrows the model window, each step conditions
/// on the most recent `window - 1` tokens.
pub fn greedy_generate<M: ScoringModel + ?Sized>(
    model: &M,
    context: &[u32],
    s: usize,
) -> Result<Vec<u32>, BackendError> {
    if s < 1 {
        return Err(BackendError::InvalidLength(
            "completion length must be at least 1".to_string(),
        ));
    }
    check_tokens(context, model.vocab_size())?;

    let keep = model.window().saturating_sub(1).max(1);
    let mut seq = context.to_vec();
    let mut out = Vec::with_capacity(s);
    for _ in 0..s {
        let lo = seq.len().saturating_sub(keep);
        let next = model.next_argmax(&seq[lo..])?;
        seq.push(next);
        out.push(next);
    }
    Ok(out)
}

/// Call-counting wrapper around any backend, used to assert the cost
/// contract: scoring an in-window sequence is 1 evaluation call, generating
/// `s` tokens is `s` calls.
pub struct Instrumented<M> {
    inner: M,
    rank_batches: AtomicU64,
    argmax_calls: AtomicU64,
}

impl<M> Instrumented<M> {
    pub fn new(inner: M) -> Self {
        Instrumented {
            inner,
            rank_batches: AtomicU64::new(0),
            argmax_calls: AtomicU64::new(0),
        }
    }

    /// Number of batched evaluation calls observed so far.
    pub fn rank_batches(&self) -> u64 {
        self.rank_batches.load(Ordering::Relaxed)
    }

    /// Number of single-step argmax calls observed so far.
    pub fn argmax_calls(&self) -> u64 {
        self.argmax_calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.rank_batches.store(0, Ordering::Relaxed);
        self.argmax_calls.store(0, Ordering::Relaxed);
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: ScoringModel> ScoringModel for Instrumented<M> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn vocab_size(&self) -> u32 {
        self.inner.vocab_size()
    }

    fn window(&self) -> usize {
        self.inner.window()
    }

    fn rank_batch(&self, tokens: &[u32], first_scored: usize) -> Result<Vec<u32>, BackendError> {
        self.rank_batches.fetch_add(1, Ordering::Relaxed);
        self.inner.rank_batch(tokens, first_scored)
    }

    fn next_argmax(&self, prefix: &[u32]) -> Result<u32, BackendError> {
        self.argmax_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.next_argmax(prefix)
    }
}
