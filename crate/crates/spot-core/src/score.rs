//! Originality scores and verdicts.
//!
//! A completion token that a scoring model ranks at position `r` out of a
//! `v`-entry vocabulary contributes a per-token score of `r / v`; the
//! sequence score is the per-token mean scaled by 10, so it lives in
//! `[0, 10)`. Text a model would have produced itself scores near zero
//! (exactly zero for its own greedy output), human text noticeably higher,
//! and [`classify`] turns that gap into a verdict against a calibrated
//! threshold.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{self, BackendError, ScoringModel};

/// Errors from score construction and classification.
#[derive(Debug, Error)]
pub enum ScoreError {
    /// The sequence has no completion positions to score.
    #[error("empty completion")]
    EmptyCompletion,
    /// A rank was at or above the vocabulary size it came with.
    #[error("rank out of range: rank {rank} with vocab size {vocab_size}")]
    RankOutOfRange { rank: u32, vocab_size: u32 },
    /// A score value was outside its documented domain.
    #[error("invalid score: {0}")]
    InvalidScore(String),
    /// A token id does not exist in the scoring model's vocabulary.
    #[error(
        "token out of vocabulary range: id {token} at position {position}, vocab size {vocab_size}"
    )]
    TokenOutOfVocab {
        token: u32,
        position: usize,
        vocab_size: u32,
    },
    /// The context/completion split does not fit the token list.
    #[error("invalid context split: {0}")]
    InvalidSplit(String),
    /// The backend failed while producing ranks.
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Where a text came from, when known. Carried through evaluation pipelines
/// so scores can be grouped by origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLabel {
    Human,
    Model(String),
    Unknown,
}

/// A tokenized text with an explicit context/completion split. The leading
/// `context_len` tokens condition the model and are never scored; the rest is
/// the completion under test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<u32>,
    context_len: usize,
    source: Option<SourceLabel>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, context_len: usize) -> Result<Self, ScoreError> {
        if context_len > tokens.len() {
            return Err(ScoreError::InvalidSplit(format!(
                "context_len {} exceeds token count {}",
                context_len,
                tokens.len()
            )));
        }
        Ok(TokenSequence {
            tokens,
            context_len,
            source: None,
        })
    }

    pub fn with_source(mut self, source: SourceLabel) -> Self {
        self.source = Some(source);
        self
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn context(&self) -> &[u32] {
        &self.tokens[..self.context_len]
    }

    pub fn completion(&self) -> &[u32] {
        &self.tokens[self.context_len..]
    }

    /// Completion length `s`; scoring requires `s >= 1`.
    pub fn completion_len(&self) -> usize {
        self.tokens.len() - self.context_len
    }

    pub fn source(&self) -> Option<&SourceLabel> {
        self.source.as_ref()
    }
}

/// Per-completion-position ranks of observed tokens under one scoring model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankVector {
    /// One rank per completion position, each in `0..vocab_size`.
    pub ranks: Vec<u32>,
    /// Vocabulary size `v` of the model that produced the ranks.
    pub vocab_size: u32,
    /// Identifier of the scoring model.
    pub model_id: String,
}

impl RankVector {
    /// Check the structural invariants: a positive vocabulary size and every
    /// rank strictly below it.
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.vocab_size == 0 {
            return Err(ScoreError::InvalidScore(
                "vocab_size must be positive".to_string(),
            ));
        }
        for &rank in &self.ranks {
            if rank >= self.vocab_size {
                return Err(ScoreError::RankOutOfRange {
                    rank,
                    vocab_size: self.vocab_size,
                });
            }
        }
        Ok(())
    }
}

/// Per-token and aggregate originality scores for one scored sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalityReport {
    /// `rank / v` per completion position, each in `[0, (v-1)/v]`.
    pub per_token: Vec<f64>,
    /// `(10 / s) * Σ per_token`, in `[0, 10 * (v-1)/v]`.
    pub aggregate: f64,
    pub vocab_size: u32,
    /// Identifier of the evaluating model.
    pub model_id: String,
    /// Opaque hash of the scored (completion) tokens, for audit trails.
    pub sequence_digest: String,
}

/// How a threshold was calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMethod {
    Sweep,
    Percentile,
}

/// Sample sizes a profile was calibrated on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub human: usize,
    pub llm: usize,
}

/// A calibrated decision threshold for one evaluator. The threshold belongs
/// to the scoring model, not to any particular text source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    /// Evaluator the profile was calibrated for.
    #[serde(rename = "evaluator")]
    pub model_id: String,
    /// Decision threshold: scores strictly above are ruled human.
    pub rho: f64,
    pub method: CalibrationMethod,
    /// Percentile parameter, present for percentile-calibrated profiles.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<f64>,
    /// Sample sizes the calibration saw.
    pub counts: SampleCounts,
    /// RFC 3339 creation stamp (provenance only; no behavior depends on it).
    pub created_at: String,
}

impl ThresholdProfile {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(ScoreError::InvalidScore(format!(
                "threshold rho must be finite and non-negative, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Classification outcome for one scored sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: VerdictLabel,
    pub score: f64,
    pub rho: f64,
    /// `score - rho`; positive margins are human calls.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictLabel {
    Human,
    Llm,
}

impl std::fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerdictLabel::Human => write!(f, "human"),
            VerdictLabel::Llm => write!(f, "llm"),
        }
    }
}

/// Compensated (Kahan) summation, so aggregates are reproducible to the last
/// bit and stay within one rounding step of the exact mean even for long
/// completions.
fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for &x in values {
        let y = x - compensation;
        let t = sum + y;
        compensation = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Normalize a rank vector into per-token scores `rank / v`.
pub fn per_token_scores(ranks: &RankVector) -> Result<Vec<f64>, ScoreError> {
    ranks.validate()?;
    if ranks.ranks.is_empty() {
        return Err(ScoreError::EmptyCompletion);
    }
    let v = ranks.vocab_size as f64;
    Ok(ranks.ranks.iter().map(|&r| r as f64 / v).collect())
}

/// Scale per-token scores to the sequence score `(10 / s) * Σ`.
pub fn aggregate_score(per_token: &[f64]) -> Result<f64, ScoreError> {
    if per_token.is_empty() {
        return Err(ScoreError::EmptyCompletion);
    }
    for &x in per_token {
        if !(0.0..1.0).contains(&x) {
            return Err(ScoreError::InvalidScore(format!(
                "per-token score {x} outside [0, 1)"
            )));
        }
    }
    Ok(kahan_sum(per_token) * 10.0 / per_token.len() as f64)
}

/// Decide human vs. llm: human iff `score > rho`, ties and everything below
/// going to llm.
pub fn classify(score: f64, profile: &ThresholdProfile) -> Result<Verdict, ScoreError> {
    profile.validate()?;
    if score.is_nan() || score < 0.0 {
        return Err(ScoreError::InvalidScore(format!(
            "score must be non-negative, got {score}"
        )));
    }
    let label = if score > profile.rho {
        VerdictLabel::Human
    } else {
        VerdictLabel::Llm
    };
    Ok(Verdict {
        label,
        score,
        rho: profile.rho,
        margin: score - profile.rho,
    })
}

fn completion_digest(completion: &[u32]) -> String {
    let mut hasher = Sha256::new();
    for &token in completion {
        hasher.update(token.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Score a sequence end to end: fetch teacher-forced ranks from the model,
/// normalize, aggregate.
///
/// The observed tokens are the conditioning sequence — nothing is
/// regenerated — and an in-window sequence costs exactly one backend
/// evaluation call.
pub fn score_sequence(
    seq: &TokenSequence,
    model: &dyn ScoringModel,
) -> Result<OriginalityReport, ScoreError> {
    if seq.completion_len() == 0 {
        return Err(ScoreError::EmptyCompletion);
    }
    let vocab_size = model.vocab_size();
    for (position, &token) in seq.tokens().iter().enumerate() {
        if token >= vocab_size {
            return Err(ScoreError::TokenOutOfVocab {
                token,
                position,
                vocab_size,
            });
        }
    }
    let ranks = backend::ranks_for(model, seq.tokens(), seq.context_len())?;
    let per_token = per_token_scores(&ranks)?;
    let aggregate = aggregate_score(&per_token)?;
    Ok(OriginalityReport {
        per_token,
        aggregate,
        vocab_size,
        model_id: ranks.model_id,
        sequence_digest: completion_digest(seq.completion()),
    })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_ranks() -> impl Strategy<Value = (Vec<u32>, u32)> {
        (2u32..500).prop_flat_map(|v| {
            (proptest::collection::vec(0..v, 1..80), Just(v))
        })
    }

    proptest! {
        #[test]
        fn per_token_and_aggregate_stay_in_range((ranks, v) in arb_ranks()) {
            let rv = RankVector { ranks, vocab_size: v, model_id: "m".to_string() };
            let per_token = per_token_scores(&rv).unwrap();
            let hi = (v - 1) as f64 / v as f64;
            for &x in &per_token {
                prop_assert!((0.0..=hi).contains(&x));
            }
            let agg = aggregate_score(&per_token).unwrap();
            prop_assert!((0.0..10.0).contains(&agg));
            prop_assert!(agg <= 10.0 * hi + 1e-9);
        }

        #[test]
        fn lowering_one_rank_never_raises_the_aggregate(
            (ranks, v) in arb_ranks(),
            idx in any::<prop::sample::Index>(),
        ) {
            let i = idx.index(ranks.len());
            if ranks[i] == 0 {
                return Ok(());
            }
            let mut lowered = ranks.clone();
            lowered[i] -= 1;

            let base = aggregate_score(&per_token_scores(&RankVector {
                ranks, vocab_size: v, model_id: "m".to_string(),
            }).unwrap()).unwrap();
            let less = aggregate_score(&per_token_scores(&RankVector {
                ranks: lowered, vocab_size: v, model_id: "m".to_string(),
            }).unwrap()).unwrap();
            prop_assert!(less <= base);
        }

        #[test]
        fn aggregate_is_within_one_rounding_step_of_naive(
            (ranks, v) in arb_ranks(),
        ) {
            let rv = RankVector { ranks, vocab_size: v, model_id: "m".to_string() };
            let per_token = per_token_scores(&rv).unwrap();
            let agg = aggregate_score(&per_token).unwrap();
            let naive: f64 = per_token.iter().sum::<f64>() * 10.0 / per_token.len() as f64;
            // Compensated vs. naive summation may differ by rounding noise only.
            let tol = naive.abs().max(1.0) * f64::EPSILON * per_token.len() as f64;
            prop_assert!((agg - naive).abs() <= tol);
        }
    }
}
