//! Corpus ingestion and evaluation-pair construction.
//!
//! Reads text corpora from disk (plain-text files or JSONL), deduplicates
//! and filters them deterministically, and cuts each surviving document into
//! one (context, human-completion) pair, attaching a greedy model completion
//! from every registered backend for the same context.
//!
//! Determinism is the organizing constraint: documents always arrive in
//! lexicographic path order (then line order within a file), duplicate
//! content is dropped by hash, and all subsampling is seeded, so a given
//! (spec, seed, backends) triple always produces the same pair archive —
//! which is what lets downstream evaluation matrices be byte-identical
//! across runs.
//!
//! ## Cross-tokenizer policy
//!
//! Pairs are built in the token space of a designated *pivot* backend:
//! `context` and `human` hold pivot token ids. Each model completion is
//! stored in its own generator's token space, because that is the space the
//! generator's greedy walk lives in — re-encoding it would destroy the exact
//! self-greedy zero. To let other evaluators score a completion, the pair
//! also carries the detokenized text of the context, the human completion,
//! and every model completion; evaluators re-tokenize from text when spaces
//! disagree.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{greedy_generate, BackendError, HarnessBackend};
use crate::backend::tokenizer;

/// Errors from ingestion and pair construction.
#[derive(Debug, Error)]
pub enum CorpusError {
    /// The corpus path does not exist or cannot be read.
    #[error("corpus not found: {0}")]
    NotFound(String),
    /// A referenced backend id has no registered handle.
    #[error("backend not registered: {0}")]
    BackendMissing(String),
    /// Context/completion lengths that cannot produce a pair.
    #[error("invalid pair geometry: {0}")]
    InvalidGeometry(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// A pair archive failed to parse.
    #[error("pair archive corrupt: {0}")]
    Archive(String),
}

/// How to read a corpus from disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusFormat {
    /// Every file is one document.
    PlainText,
    /// Every line is a JSON object; the document is its `field` string.
    Jsonl { field: String },
}

/// A corpus on disk plus the deterministic filters applied while reading it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// File or directory to read.
    pub path: PathBuf,
    pub format: CorpusFormat,
    /// Drop documents with fewer tokens than this (0 disables). Should be at
    /// least `context_len + completion_len` of the experiment it feeds.
    pub min_tokens: usize,
    /// Stop after this many kept documents.
    pub limit: Option<usize>,
    /// Seed for the subsampling/splitting helpers.
    pub seed: u64,
}

impl CorpusSpec {
    pub fn plain_text(path: impl Into<PathBuf>) -> CorpusSpec {
        CorpusSpec {
            path: path.into(),
            format: CorpusFormat::PlainText,
            min_tokens: 0,
            limit: None,
            seed: 0,
        }
    }

    pub fn jsonl(path: impl Into<PathBuf>, field: &str) -> CorpusSpec {
        CorpusSpec {
            path: path.into(),
            format: CorpusFormat::Jsonl {
                field: field.to_string(),
            },
            min_tokens: 0,
            limit: None,
            seed: 0,
        }
    }
}

/// One ingested document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// `path` for plain text, `path:line` for JSONL rows.
    pub id: String,
    pub text: String,
}

/// Bookkeeping from one ingestion run. `kept + skipped_short +
/// skipped_duplicate` equals the number of well-formed documents seen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files: usize,
    pub kept: usize,
    pub skipped_short: usize,
    pub skipped_duplicate: usize,
    /// JSONL lines that failed to parse or lacked the text field, plus
    /// non-UTF-8 plain-text files.
    pub malformed: usize,
    /// True when `limit` cut the scan short.
    pub truncated: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Read a corpus from disk.
///
/// Documents are visited in lexicographic path order (then line order inside
/// a JSONL file), deduplicated by content hash, filtered by `min_tokens`,
/// and truncated to the first `limit` keepers. Malformed JSONL lines are
/// skipped and counted, never fatal.
pub fn ingest(spec: &CorpusSpec) -> Result<(Vec<Document>, IngestReport), CorpusError> {
    if !spec.path.exists() {
        return Err(CorpusError::NotFound(spec.path.display().to_string()));
    }
    let mut files: Vec<PathBuf> = if spec.path.is_dir() {
        walkdir::WalkDir::new(&spec.path)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .collect()
    } else {
        vec![spec.path.clone()]
    };
    files.sort();

    let mut docs = Vec::new();
    let mut report = IngestReport {
        files: files.len(),
        ..IngestReport::default()
    };
    let mut seen = HashSet::new();

    'scan: for file in &files {
        let raw = match std::fs::read_to_string(file) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                log::warn!("skipping non-UTF-8 file {}", file.display());
                report.malformed += 1;
                continue;
            }
            Err(e) => return Err(CorpusError::Io(e)),
        };
        let candidates: Vec<(String, String)> = match &spec.format {
            CorpusFormat::PlainText => vec![(file.display().to_string(), raw)],
            CorpusFormat::Jsonl { field } => raw
                .lines()
                .enumerate()
                .filter(|(_, line)| !line.trim().is_empty())
                .filter_map(|(lineno, line)| {
                    let id = format!("{}:{}", file.display(), lineno + 1);
                    match serde_json::from_str::<serde_json::Value>(line) {
                        Ok(value) => match value.get(field).and_then(|f| f.as_str()) {
                            Some(text) => Some((id, text.to_string())),
                            None => {
                                log::warn!("{id}: no string field {field:?}");
                                report.malformed += 1;
                                None
                            }
                        },
                        Err(e) => {
                            log::warn!("{id}: unparseable JSONL line: {e}");
                            report.malformed += 1;
                            None
                        }
                    }
                })
                .collect(),
        };
        for (id, text) in candidates {
            if spec.limit.is_some_and(|limit| docs.len() >= limit) {
                report.truncated = true;
                break 'scan;
            }
            if !seen.insert(sha256_hex(text.as_bytes())) {
                report.skipped_duplicate += 1;
                continue;
            }
            if spec.min_tokens > 0 && tokenizer::tokenize(&text).len() < spec.min_tokens {
                report.skipped_short += 1;
                continue;
            }
            docs.push(Document { id, text });
        }
    }
    report.kept = docs.len();
    Ok((docs, report))
}

/// Keep a seeded random subset of `k` documents, in their original order.
pub fn subsample(docs: &[Document], k: usize, seed: u64) -> Vec<Document> {
    if k >= docs.len() {
        return docs.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..docs.len()).collect();
    indices.shuffle(&mut rng);
    let mut chosen: Vec<usize> = indices.into_iter().take(k).collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| docs[i].clone()).collect()
}

/// Seeded random split into two halves (first half gets the odd document
/// when the count is odd), each in original order.
pub fn split_docs(docs: &[Document], seed: u64) -> (Vec<Document>, Vec<Document>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..docs.len()).collect();
    indices.shuffle(&mut rng);
    let cut = docs.len().div_ceil(2);
    let (left, right) = indices.split_at(cut);
    let pick = |part: &[usize]| {
        let mut part: Vec<usize> = part.to_vec();
        part.sort_unstable();
        part.into_iter()
            .map(|i| docs[i].clone())
            .collect::<Vec<_>>()
    };
    (pick(left), pick(right))
}

/// Pair-level provenance and the text forms needed for cross-tokenizer
/// scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    /// Backend whose token space `context` and `human` live in.
    pub pivot: String,
    pub context_len: usize,
    pub completion_len: usize,
    pub doc_id: String,
    pub context_text: String,
    pub human_text: String,
    /// Detokenized form of each model completion.
    pub completion_texts: BTreeMap<String, String>,
}

/// One evaluation unit: a shared context, the document's own continuation,
/// and a greedy completion from every registered model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    /// First `context_len` pivot tokens of the document.
    pub context: Vec<u32>,
    /// The next `completion_len` pivot tokens — the human continuation.
    pub human: Vec<u32>,
    /// model id → greedy completion in *that model's* token space.
    pub completions: BTreeMap<String, Vec<u32>>,
    pub meta: PairMeta,
}

impl EvalPair {
    fn validate(&self) -> Result<(), CorpusError> {
        let s = self.meta.completion_len;
        if self.human.len() != s {
            return Err(CorpusError::InvalidGeometry(format!(
                "human completion has {} tokens, expected {s}",
                self.human.len()
            )));
        }
        if self.context.len() != self.meta.context_len {
            return Err(CorpusError::InvalidGeometry(format!(
                "context has {} tokens, expected {}",
                self.context.len(),
                self.meta.context_len
            )));
        }
        for (model, completion) in &self.completions {
            if completion.len() != s {
                return Err(CorpusError::InvalidGeometry(format!(
                    "completion from {model} has {} tokens, expected {s}",
                    completion.len()
                )));
            }
            if !self.meta.completion_texts.contains_key(model) {
                return Err(CorpusError::InvalidGeometry(format!(
                    "completion from {model} has no text form"
                )));
            }
        }
        Ok(())
    }
}

/// Bookkeeping from pair construction; `kept + skipped_short == total`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairReport {
    pub total: usize,
    pub kept: usize,
    /// Documents with fewer than `context_len + completion_len` pivot tokens.
    pub skipped_short: usize,
}

/// Cut documents into evaluation pairs.
///
/// For each document long enough in the pivot backend's token space, the
/// context is its first `context_len` tokens and the human completion the
/// next `completion_len`; every backend in `models` contributes
/// `greedy_generate` over the same context text. Models sharing the pivot's
/// token space are fed the pivot context ids directly; others re-encode the
/// context text (logged, since token boundaries may shift).
pub fn make_pairs(
    docs: &[Document],
    models: &BTreeMap<String, &dyn HarnessBackend>,
    pivot: &str,
    context_len: usize,
    completion_len: usize,
) -> Result<(Vec<EvalPair>, PairReport), CorpusError> {
    if context_len == 0 || completion_len == 0 {
        return Err(CorpusError::InvalidGeometry(format!(
            "context_len {context_len} and completion_len {completion_len} must both be ≥ 1"
        )));
    }
    let pivot_backend = *models
        .get(pivot)
        .ok_or_else(|| CorpusError::BackendMissing(pivot.to_string()))?;

    let mut pairs = Vec::new();
    let mut report = PairReport::default();
    for doc in docs {
        report.total += 1;
        let tokens = pivot_backend.encode(&doc.text);
        if tokens.len() < context_len + completion_len {
            report.skipped_short += 1;
            continue;
        }
        let context = tokens[..context_len].to_vec();
        let human = tokens[context_len..context_len + completion_len].to_vec();
        let context_text = pivot_backend.decode(&context);
        let human_text = pivot_backend.decode(&human);

        let mut completions = BTreeMap::new();
        let mut completion_texts = BTreeMap::new();
        for (model_id, backend) in models {
            let model_context = if model_id == pivot {
                context.clone()
            } else {
                log::debug!("re-encoding context for {model_id} (token space differs from pivot {pivot})");
                backend.encode(&context_text)
            };
            let completion = greedy_generate(*backend, &model_context, completion_len)?;
            completion_texts.insert(model_id.clone(), backend.decode(&completion));
            completions.insert(model_id.clone(), completion);
        }

        let pair = EvalPair {
            context,
            human,
            completions,
            meta: PairMeta {
                pivot: pivot.to_string(),
                context_len,
                completion_len,
                doc_id: doc.id.clone(),
                context_text,
                human_text,
                completion_texts,
            },
        };
        pair.validate()?;
        pairs.push(pair);
    }
    report.kept = pairs.len();
    Ok((pairs, report))
}

/// Serialize pairs as JSONL, one object per line.
pub fn pairs_to_jsonl(pairs: &[EvalPair]) -> String {
    let mut out = String::new();
    for pair in pairs {
        out.push_str(&serde_json::to_string(pair).expect("pair serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Parse a JSONL pair archive, validating every record.
pub fn pairs_from_jsonl(jsonl: &str) -> Result<Vec<EvalPair>, CorpusError> {
    let mut pairs = Vec::new();
    for (lineno, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: EvalPair = serde_json::from_str(line)
            .map_err(|e| CorpusError::Archive(format!("line {}: {e}", lineno + 1)))?;
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn save_pairs(pairs: &[EvalPair], path: &Path) -> Result<(), CorpusError> {
    Ok(std::fs::write(path, pairs_to_jsonl(pairs))?)
}

pub fn load_pairs(path: &Path) -> Result<Vec<EvalPair>, CorpusError> {
    pairs_from_jsonl(&std::fs::read_to_string(path)?)
}

/// Content digest of a pair collection — hex SHA-256 of its JSONL form.
/// Identical inputs and backends yield identical digests across runs.
pub fn pairs_digest(pairs: &[EvalPair]) -> String {
    sha256_hex(pairs_to_jsonl(pairs).as_bytes())
}
