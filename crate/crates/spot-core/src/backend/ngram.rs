//! Self-contained n-gram scoring backend.
//!
//! An interpolated add-k n-gram language model over word tokens. It exists so
//! the whole pipeline — scoring, generation, calibration, evaluation — runs
//! deterministically on a laptop with no external inference server: the
//! n-gram model stands in for the large neural scorers that normally sit
//! behind the [`remote`](super::remote) backend.
//!
//! The conditional distribution for a history `h` mixes all orders up to `n`:
//!
//! ```text
//! P(t | h) = Σ_o w'_o · (count_o(h_o, t) + k) / (total_o(h_o) + k·v)
//! ```
//!
//! where `h_o` is the last `o-1` tokens of `h`, `k` is the add-k smoothing
//! constant, and the configured weights are renormalized over the orders the
//! history is long enough to support. Every such distribution sums to 1, so
//! ranks and argmaxes are well defined for any history, seen or unseen.
//!
//! Rank and argmax queries use the sparse count tables plus a sorted unigram
//! index instead of materializing all `v` probabilities; the arithmetic is
//! kept bit-identical to the dense definition (same operations in the same
//! order), which the tests check against a dense oracle.
//!
//! # Persistence
//!
//! A model is stored as two files:
//!
//! * a binary count container (magic `SPOTNGM1`, all integers and float bits
//!   little-endian):
//!
//!   ```text
//!   magic            8 bytes  "SPOTNGM1"
//!   version          u32      container format, currently 1
//!   order            u32      n ≥ 2
//!   vocab_size       u32      v including the reserved UNK id 0
//!   window           u64      evaluation window in tokens
//!   smoothing_k      f64      add-k constant
//!   weights          n × f64  interpolation weight of order 1..n
//!   unigram_pairs    u64      count of nonzero unigram entries, then
//!                             (u32 token, u64 count) pairs sorted by token
//!   per order o = 2..n:
//!     histories      u64      distinct (o-1)-token histories, then per
//!                             history (sorted lexicographically):
//!       history      (o-1) × u32
//!       next_len     u32      distinct continuations, then per continuation
//!                             (sorted by token): (u32 token, u64 count)
//!   ```
//!
//! * a JSON vocabulary sidecar `{version, model_id, unk_id, tokens}` where
//!   token ids are positions in `tokens`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::tokenizer::{self, UNK_TOKEN};
use super::{BackendError, ScoringModel, TokenCodec};

/// Reserved id absorbing out-of-vocabulary strings.
pub const UNK_ID: u32 = 0;

const MAGIC: &[u8; 8] = b"SPOTNGM1";
const CONTAINER_VERSION: u32 = 1;

/// Hyperparameters of the n-gram backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramParams {
    /// Highest n-gram order `n` (≥ 2).
    pub order: usize,
    /// Keep at most this many token strings (most frequent first, ties
    /// lexicographic); everything else maps to UNK.
    pub vocab_cap: u32,
    /// Add-k smoothing constant (> 0).
    pub smoothing_k: f64,
    /// `weights[i]` is the interpolation weight of order `i + 1`; the
    /// weights must be positive and sum to 1.
    pub weights: Vec<f64>,
    /// Maximum tokens one evaluation call covers.
    pub window: usize,
}

impl Default for NgramParams {
    /// Trigram defaults: add-0.1 smoothing with weights 0.5/0.3/0.2 for
    /// orders 3/2/1, chosen to give a non-degenerate rank spread on small
    /// corpora.
    fn default() -> Self {
        NgramParams {
            order: 3,
            vocab_cap: 32_768,
            smoothing_k: 0.1,
            weights: vec![0.2, 0.3, 0.5],
            window: 4096,
        }
    }
}

impl NgramParams {
    /// Defaults for an arbitrary order: each order weighs twice the one
    /// below it, normalized. Order 3 keeps the canonical 0.5/0.3/0.2 split.
    pub fn for_order(order: usize) -> Self {
        let mut params = NgramParams::default();
        if order != 3 {
            let raw: Vec<f64> = (0..order).map(|i| (1u64 << i) as f64).collect();
            let sum: f64 = raw.iter().sum();
            params.weights = raw.iter().map(|w| w / sum).collect();
        }
        params.order = order;
        params
    }

    fn validate(&self) -> Result<(), BackendError> {
        if self.order < 2 {
            return Err(BackendError::InvalidParams(format!(
                "order must be at least 2, got {}",
                self.order
            )));
        }
        if self.vocab_cap < 2 {
            return Err(BackendError::InvalidParams(format!(
                "vocab_cap must be at least 2, got {}",
                self.vocab_cap
            )));
        }
        if !self.smoothing_k.is_finite() || self.smoothing_k <= 0.0 {
            return Err(BackendError::InvalidParams(format!(
                "smoothing_k must be a positive real, got {}",
                self.smoothing_k
            )));
        }
        if self.weights.len() != self.order {
            return Err(BackendError::InvalidParams(format!(
                "expected {} interpolation weights, got {}",
                self.order,
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(BackendError::InvalidParams(
                "interpolation weights must be positive reals".to_string(),
            ));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(BackendError::InvalidParams(format!(
                "interpolation weights must sum to 1, got {sum}"
            )));
        }
        if self.window < 2 {
            return Err(BackendError::InvalidParams(format!(
                "window must be at least 2, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Token-string ↔ id mapping with UNK reserved at id 0.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_kept(kept: Vec<String>) -> Self {
        let mut tokens = Vec::with_capacity(kept.len() + 1);
        tokens.push(UNK_TOKEN.to_string());
        tokens.extend(kept);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    /// Id for a token string; unknown strings collapse to [`UNK_ID`].
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Surface form of an id. Panics on ids outside the vocabulary, which
    /// callers exclude up front.
    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn size(&self) -> u32 {
        self.tokens.len() as u32
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Serialize, Deserialize)]
struct VocabSidecar {
    version: u32,
    model_id: String,
    unk_id: u32,
    tokens: Vec<String>,
}

/// Sparse continuation table for one stored history.
#[derive(Debug, Clone, PartialEq, Eq)]
struct NextTable {
    total: u64,
    /// `(token, count)` sorted by token id.
    next: Vec<(u32, u64)>,
}

impl NextTable {
    fn count(&self, token: u32) -> u64 {
        match self.next.binary_search_by_key(&token, |&(t, _)| t) {
            Ok(i) => self.next[i].1,
            Err(_) => 0,
        }
    }
}

/// Immutable trained n-gram model. Safe for unlimited concurrent readers.
#[derive(Debug, Clone)]
pub struct NgramModel {
    id: String,
    params: NgramParams,
    vocab: Vocab,
    /// Dense unigram counts, indexed by token id.
    unigram: Vec<u64>,
    unigram_total: u64,
    /// `tables[j]` holds order `j + 2`: history (of `j + 1` tokens) → counts.
    tables: Vec<HashMap<Box<[u32]>, NextTable>>,
    /// Token ids sorted by (unigram count desc, id asc) — argmax fallback.
    by_count: Vec<u32>,
    /// All unigram counts sorted ascending — rank fallback.
    sorted_counts: Vec<u64>,
}

/// One interpolation layer resolved for a concrete history.
struct Layer<'a> {
    weight: f64,
    denom: f64,
    table: Option<&'a NextTable>,
}

/// Everything needed to evaluate `P(· | history)` without touching the
/// count tables again.
struct HistLookup<'a> {
    /// Orders ≥ 2 the history supports, highest order first.
    upper: Vec<Layer<'a>>,
    w1: f64,
    d1: f64,
    /// Shared probability mass of tokens unseen in every upper layer,
    /// excluding their unigram term. Computed with the same fold as
    /// [`NgramModel::prob_in`] so unseen tokens compare bit-identically.
    baseline2: f64,
    k: f64,
}

/// The one canonical per-layer term; every probability in this module is a
/// sum of these, always folded highest order first, so equal inputs produce
/// bit-equal floats.
#[inline]
fn layer_term(weight: f64, denom: f64, count: u64, k: f64) -> f64 {
    weight * (count as f64 + k) / denom
}

impl NgramModel {
    pub fn params(&self) -> &NgramParams {
        &self.params
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn lookup(&self, history: &[u32]) -> HistLookup<'_> {
        let k = self.params.smoothing_k;
        let kv = k * self.vocab.size() as f64;
        // Orders the history can feed: o - 1 ≤ len(history).
        let max_order = self.params.order.min(history.len() + 1);
        let weight_sum: f64 = self.params.weights[..max_order].iter().sum();

        let mut upper = Vec::with_capacity(max_order.saturating_sub(1));
        for o in (2..=max_order).rev() {
            let weight = self.params.weights[o - 1] / weight_sum;
            let hist = &history[history.len() - (o - 1)..];
            let table = self.tables[o - 2].get(hist);
            let denom = table.map_or(0, |t| t.total) as f64 + kv;
            upper.push(Layer {
                weight,
                denom,
                table,
            });
        }
        let w1 = self.params.weights[0] / weight_sum;
        let d1 = self.unigram_total as f64 + kv;

        let mut baseline2 = 0.0;
        for layer in &upper {
            baseline2 += layer_term(layer.weight, layer.denom, 0, k);
        }
        HistLookup {
            upper,
            w1,
            d1,
            baseline2,
            k,
        }
    }

    /// Canonical probability of `token` under a resolved history.
    fn prob_in(&self, lk: &HistLookup<'_>, token: u32) -> f64 {
        let mut p = 0.0;
        for layer in &lk.upper {
            let count = layer.table.map_or(0, |t| t.count(token));
            p += layer_term(layer.weight, layer.denom, count, lk.k);
        }
        p + layer_term(lk.w1, lk.d1, self.unigram[token as usize], lk.k)
    }

    /// Probability of a token unseen in every upper layer, as a function of
    /// its unigram count. Bit-identical to [`Self::prob_in`] for such tokens.
    fn unseen_prob(&self, lk: &HistLookup<'_>, unigram_count: u64) -> f64 {
        lk.baseline2 + layer_term(lk.w1, lk.d1, unigram_count, lk.k)
    }

    /// Token ids appearing in at least one upper layer, sorted ascending.
    fn upper_union(&self, lk: &HistLookup<'_>) -> Vec<u32> {
        let mut union: Vec<u32> = lk
            .upper
            .iter()
            .filter_map(|l| l.table)
            .flat_map(|t| t.next.iter().map(|&(token, _)| token))
            .collect();
        union.sort_unstable();
        union.dedup();
        union
    }

    /// Rank of `token` given `history`: vocabulary entries with strictly
    /// greater probability. Sparse, but numerically identical to scanning
    /// all `v` tokens with [`Self::prob_in`].
    fn rank_of(&self, history: &[u32], token: u32) -> u32 {
        let lk = self.lookup(history);
        let union = self.upper_union(&lk);
        let p_obs = self.prob_in(&lk, token);

        let mut rank = 0u32;
        // Tokens with upper-layer evidence, counted directly…
        for &t in &union {
            if self.prob_in(&lk, t) > p_obs {
                rank += 1;
            }
        }
        // …plus unseen tokens, counted through the sorted unigram index:
        // their probability is monotone in the unigram count, so the
        // qualifying tokens form a suffix of `sorted_counts`.
        let cutoff = self
            .sorted_counts
            .partition_point(|&c| self.unseen_prob(&lk, c) <= p_obs);
        let mut above = (self.sorted_counts.len() - cutoff) as u32;
        // The index covers every token; remove the union members it counted.
        for &t in &union {
            if self.unseen_prob(&lk, self.unigram[t as usize]) > p_obs {
                above -= 1;
            }
        }
        rank + above
    }

    /// Argmax token given `history`; the lowest id wins probability ties.
    fn argmax(&self, history: &[u32]) -> u32 {
        let lk = self.lookup(history);
        let union = self.upper_union(&lk);

        let mut best: Option<(f64, u32)> = None;
        for &t in &union {
            let p = self.prob_in(&lk, t);
            // `union` ascends, so strict improvement keeps the lowest id.
            if best.is_none_or(|(bp, _)| p > bp) {
                best = Some((p, t));
            }
        }

        // Best token without upper-layer evidence: walk ids by descending
        // unigram count and keep the lowest id among probability ties.
        let mut outside = self
            .by_count
            .iter()
            .copied()
            .filter(|t| union.binary_search(t).is_err());
        if let Some(first) = outside.next() {
            let p_first = self.unseen_prob(&lk, self.unigram[first as usize]);
            let mut cand = first;
            for t in outside {
                if self.unseen_prob(&lk, self.unigram[t as usize]) < p_first {
                    break;
                }
                cand = cand.min(t);
            }
            let beats = match best {
                None => true,
                Some((bp, bt)) => p_first > bp || (p_first == bp && cand < bt),
            };
            if beats {
                best = Some((p_first, cand));
            }
        }
        best.expect("vocabulary is never empty").1
    }

    /// Dense conditional distribution — the reference implementation the
    /// sparse paths must match. Exposed for tests and diagnostics.
    pub fn dense_probs(&self, history: &[u32]) -> Vec<f64> {
        let lk = self.lookup(history);
        (0..self.vocab.size()).map(|t| self.prob_in(&lk, t)).collect()
    }

    /// Persist the model as a binary count container plus JSON vocabulary
    /// sidecar. Serialization is canonical: saving the same model twice
    /// produces byte-identical files.
    pub fn save(&self, model_path: &Path, vocab_path: &Path) -> Result<(), BackendError> {
        let sidecar = VocabSidecar {
            version: CONTAINER_VERSION,
            model_id: self.id.clone(),
            unk_id: UNK_ID,
            tokens: self.vocab.tokens.clone(),
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .expect("vocabulary sidecar serialization cannot fail");
        fs::write(vocab_path, json)?;

        let mut w = BufWriter::new(fs::File::create(model_path)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(CONTAINER_VERSION)?;
        w.write_u32::<LittleEndian>(self.params.order as u32)?;
        w.write_u32::<LittleEndian>(self.vocab.size())?;
        w.write_u64::<LittleEndian>(self.params.window as u64)?;
        w.write_f64::<LittleEndian>(self.params.smoothing_k)?;
        for &weight in &self.params.weights {
            w.write_f64::<LittleEndian>(weight)?;
        }

        let nonzero: Vec<(u32, u64)> = self
            .unigram
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(t, &c)| (t as u32, c))
            .collect();
        w.write_u64::<LittleEndian>(nonzero.len() as u64)?;
        for (token, count) in nonzero {
            w.write_u32::<LittleEndian>(token)?;
            w.write_u64::<LittleEndian>(count)?;
        }

        for table in &self.tables {
            let mut histories: Vec<&Box<[u32]>> = table.keys().collect();
            histories.sort();
            w.write_u64::<LittleEndian>(histories.len() as u64)?;
            for hist in histories {
                for &t in hist.iter() {
                    w.write_u32::<LittleEndian>(t)?;
                }
                let entry = &table[hist];
                w.write_u32::<LittleEndian>(entry.next.len() as u32)?;
                for &(token, count) in &entry.next {
                    w.write_u32::<LittleEndian>(token)?;
                    w.write_u64::<LittleEndian>(count)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Load a model persisted by [`Self::save`].
    pub fn load(model_path: &Path, vocab_path: &Path) -> Result<NgramModel, BackendError> {
        let sidecar: VocabSidecar = serde_json::from_str(&fs::read_to_string(vocab_path)?)
            .map_err(|e| BackendError::ModelFile(format!("vocabulary sidecar: {e}")))?;
        if sidecar.version != CONTAINER_VERSION {
            return Err(BackendError::ModelFile(format!(
                "unsupported vocabulary sidecar version {}",
                sidecar.version
            )));
        }
        if sidecar.unk_id != UNK_ID {
            return Err(BackendError::ModelFile(format!(
                "unexpected unk id {}",
                sidecar.unk_id
            )));
        }

        let mut r = BufReader::new(fs::File::open(model_path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(BackendError::ModelFile("bad magic bytes".to_string()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CONTAINER_VERSION {
            return Err(BackendError::ModelFile(format!(
                "unsupported container version {version}"
            )));
        }
        let order = r.read_u32::<LittleEndian>()? as usize;
        let vocab_size = r.read_u32::<LittleEndian>()?;
        if vocab_size as usize != sidecar.tokens.len() {
            return Err(BackendError::ModelFile(format!(
                "container vocab size {} does not match sidecar token count {}",
                vocab_size,
                sidecar.tokens.len()
            )));
        }
        let window = r.read_u64::<LittleEndian>()? as usize;
        let smoothing_k = r.read_f64::<LittleEndian>()?;
        let mut weights = Vec::with_capacity(order);
        for _ in 0..order {
            weights.push(r.read_f64::<LittleEndian>()?);
        }
        let params = NgramParams {
            order,
            // The cap only matters during training; record the trained size.
            vocab_cap: vocab_size.max(2),
            smoothing_k,
            weights,
            window,
        };
        params.validate()?;

        let mut unigram = vec![0u64; vocab_size as usize];
        let pairs = r.read_u64::<LittleEndian>()?;
        for _ in 0..pairs {
            let token = r.read_u32::<LittleEndian>()?;
            let count = r.read_u64::<LittleEndian>()?;
            if token >= vocab_size {
                return Err(BackendError::ModelFile(format!(
                    "unigram token {token} outside vocabulary"
                )));
            }
            unigram[token as usize] = count;
        }

        let mut tables = Vec::with_capacity(order - 1);
        for o in 2..=order {
            let histories = r.read_u64::<LittleEndian>()?;
            let mut table = HashMap::with_capacity(histories as usize);
            for _ in 0..histories {
                let mut hist = Vec::with_capacity(o - 1);
                for _ in 0..o - 1 {
                    let t = r.read_u32::<LittleEndian>()?;
                    if t >= vocab_size {
                        return Err(BackendError::ModelFile(format!(
                            "history token {t} outside vocabulary"
                        )));
                    }
                    hist.push(t);
                }
                let next_len = r.read_u32::<LittleEndian>()?;
                let mut next = Vec::with_capacity(next_len as usize);
                let mut total = 0u64;
                for _ in 0..next_len {
                    let token = r.read_u32::<LittleEndian>()?;
                    if token >= vocab_size {
                        return Err(BackendError::ModelFile(format!(
                            "continuation token {token} outside vocabulary"
                        )));
                    }
                    let count = r.read_u64::<LittleEndian>()?;
                    total += count;
                    next.push((token, count));
                }
                if next.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(BackendError::ModelFile(
                        "continuation tokens not strictly sorted".to_string(),
                    ));
                }
                table.insert(hist.into_boxed_slice(), NextTable { total, next });
            }
            tables.push(table);
        }
        let mut trailer = [0u8; 1];
        if r.read(&mut trailer)? != 0 {
            return Err(BackendError::ModelFile(
                "trailing bytes after count tables".to_string(),
            ));
        }

        Ok(Self::assemble(
            sidecar.model_id,
            params,
            Vocab {
                index: sidecar
                    .tokens
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (t.clone(), i as u32))
                    .collect(),
                tokens: sidecar.tokens,
            },
            unigram,
            tables,
        ))
    }

    fn assemble(
        id: String,
        params: NgramParams,
        vocab: Vocab,
        unigram: Vec<u64>,
        tables: Vec<HashMap<Box<[u32]>, NextTable>>,
    ) -> NgramModel {
        let unigram_total = unigram.iter().sum();
        let mut by_count: Vec<u32> = (0..vocab.size()).collect();
        by_count.sort_by(|&a, &b| {
            unigram[b as usize]
                .cmp(&unigram[a as usize])
                .then(a.cmp(&b))
        });
        let mut sorted_counts = unigram.clone();
        sorted_counts.sort_unstable();
        NgramModel {
            id,
            params,
            vocab,
            unigram,
            unigram_total,
            tables,
            by_count,
            sorted_counts,
        }
    }
}

/// Train an n-gram model on in-memory documents.
///
/// The vocabulary keeps the `vocab_cap` most frequent token strings (ties
/// broken lexicographically) plus UNK at id 0; ids are assigned in that
/// frequency order. Counts for order `o` are collected per document over
/// every in-document window of `o` tokens — documents never bleed into each
/// other.
/// Mutable counting table used only during training: history → successor
/// counts, before freezing into the sorted [`NextTable`] form.
type HistoryBuilder = HashMap<Box<[u32]>, HashMap<u32, u64>>;

pub fn train_ngram<S: AsRef<str>>(
    docs: &[S],
    params: &NgramParams,
    model_id: &str,
) -> Result<NgramModel, BackendError> {
    params.validate()?;

    let tokenized: Vec<Vec<String>> = docs
        .iter()
        .map(|d| tokenizer::tokenize(d.as_ref()))
        .collect();
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for doc in &tokenized {
        for token in doc {
            *freq.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    // The UNK surface form is reserved; occurrences in the corpus are
    // absorbed by the UNK id like any other unknown string.
    freq.remove(UNK_TOKEN);
    if tokenized.iter().all(|d| d.is_empty()) {
        return Err(BackendError::EmptyTrainingCorpus);
    }

    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(params.vocab_cap as usize);
    let vocab = Vocab::from_kept(ranked.into_iter().map(|(t, _)| t.to_string()).collect());

    let v = vocab.size() as usize;
    let mut unigram = vec![0u64; v];
    let mut builders: Vec<HistoryBuilder> =
        (0..params.order - 1).map(|_| HashMap::new()).collect();
    for doc in &tokenized {
        let ids: Vec<u32> = doc.iter().map(|t| vocab.id(t)).collect();
        for (i, &id) in ids.iter().enumerate() {
            unigram[id as usize] += 1;
            for o in 2..=params.order {
                if i + 1 >= o {
                    let hist = &ids[i + 1 - o..i];
                    *builders[o - 2]
                        .entry(hist.into())
                        .or_default()
                        .entry(id)
                        .or_insert(0) += 1;
                }
            }
        }
    }

    let tables = builders
        .into_iter()
        .map(|builder| {
            builder
                .into_iter()
                .map(|(hist, counts)| {
                    let mut next: Vec<(u32, u64)> = counts.into_iter().collect();
                    next.sort_unstable_by_key(|&(t, _)| t);
                    let total = next.iter().map(|&(_, c)| c).sum();
                    (hist, NextTable { total, next })
                })
                .collect()
        })
        .collect();

    Ok(NgramModel::assemble(
        model_id.to_string(),
        params.clone(),
        vocab,
        unigram,
        tables,
    ))
}

impl ScoringModel for NgramModel {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn vocab_size(&self) -> u32 {
        self.vocab.size()
    }

    fn window(&self) -> usize {
        self.params.window
    }

    fn rank_batch(&self, tokens: &[u32], first_scored: usize) -> Result<Vec<u32>, BackendError> {
        let v = self.vocab.size();
        tokens
            .iter()
            .enumerate()
            .skip(first_scored)
            .map(|(i, &token)| {
                if token >= v {
                    return Err(BackendError::TokenOutOfRange {
                        token,
                        position: i,
                        vocab_size: v,
                    });
                }
                Ok(self.rank_of(&tokens[..i], token))
            })
            .collect()
    }

    fn next_argmax(&self, prefix: &[u32]) -> Result<u32, BackendError> {
        if let Some(position) = prefix.iter().position(|&t| t >= self.vocab.size()) {
            return Err(BackendError::TokenOutOfRange {
                token: prefix[position],
                position,
                vocab_size: self.vocab.size(),
            });
        }
        Ok(self.argmax(prefix))
    }
}

impl TokenCodec for NgramModel {
    fn encode(&self, text: &str) -> Vec<u32> {
        tokenizer::tokenize(text)
            .iter()
            .map(|t| self.vocab.id(t))
            .collect()
    }

    fn decode(&self, tokens: &[u32]) -> String {
        let strings: Vec<String> = tokens
            .iter()
            .map(|&t| self.vocab.token(t).to_string())
            .collect();
        tokenizer::detokenize(&strings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{greedy_generate, ranks_for};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ab_model() -> NgramModel {
        train_ngram(&["a b a b a b"], &NgramParams::default(), "ab").unwrap()
    }

    /// Dense-scan oracles for rank and argmax, straight off `dense_probs`.
    fn oracle_rank(model: &NgramModel, history: &[u32], token: u32) -> u32 {
        let probs = model.dense_probs(history);
        crate::backend::strict_rank(&probs, token as usize)
    }

    fn oracle_argmax(model: &NgramModel, history: &[u32]) -> u32 {
        crate::backend::argmax_lowest(&model.dense_probs(history)) as u32
    }

    #[test]
    fn vocabulary_orders_by_frequency_then_lexicographic() {
        let model = ab_model();
        // "a" and "b" tie at 3 occurrences; lexicographic order gives a=1.
        assert_eq!(model.vocab().token(0), UNK_TOKEN);
        assert_eq!(model.vocab().token(1), "a");
        assert_eq!(model.vocab().token(2), "b");
        assert_eq!(model.vocab_size(), 3);
    }

    #[test]
    fn modal_continuations_rank_zero() {
        let model = ab_model();
        let a = model.vocab().id("a");
        let b = model.vocab().id("b");
        // "b after a" and "a after a b" are the modal continuations.
        let rv = ranks_for(&model, &[a, b, a], 1).unwrap();
        assert_eq!(rv.ranks, vec![0, 0]);
    }

    #[test]
    fn conditional_preferences_follow_counts() {
        let model = ab_model();
        let a = model.vocab().id("a") as usize;
        let b = model.vocab().id("b") as usize;
        let after_a = model.dense_probs(&[a as u32]);
        assert!(
            after_a[b] > after_a[a],
            "P(b|a)={} should beat P(a|a)={}",
            after_a[b],
            after_a[a]
        );
    }

    #[test]
    fn greedy_walks_the_modal_cycle() {
        let model = ab_model();
        let a = model.vocab().id("a");
        let b = model.vocab().id("b");
        assert_eq!(greedy_generate(&model, &[a], 4).unwrap(), vec![b, a, b, a]);
    }

    #[test]
    fn single_symbol_language_generates_itself() {
        let model = train_ngram(&["x x x"], &NgramParams::default(), "x").unwrap();
        let x = model.vocab().id("x");
        assert_eq!(greedy_generate(&model, &[x], 5).unwrap(), vec![x; 5]);
    }

    #[test]
    fn vocab_cap_keeps_top_strings_plus_unk() {
        let params = NgramParams {
            vocab_cap: 2,
            ..NgramParams::default()
        };
        let model = train_ngram(&["p q r s t p q p"], &params, "cap").unwrap();
        assert_eq!(model.vocab_size(), 3); // 2 kept + UNK
        assert_eq!(model.vocab().token(1), "p");
        assert_eq!(model.vocab().token(2), "q");
        // The dropped symbols all collapse onto UNK.
        assert_eq!(model.vocab().id("r"), UNK_ID);
        assert_eq!(model.vocab().id("t"), UNK_ID);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let err = train_ngram(&["", "   "], &NgramParams::default(), "empty").unwrap_err();
        assert_eq!(err.to_string(), "empty training corpus");
    }

    #[test]
    fn sub_bigram_orders_are_rejected() {
        let params = NgramParams {
            order: 1,
            weights: vec![1.0],
            ..NgramParams::default()
        };
        let err = train_ngram(&["a b"], &params, "bad").unwrap_err();
        assert!(err.to_string().contains("order must be at least 2"));
    }

    #[test]
    fn distributions_sum_to_one_for_arbitrary_histories() {
        let model = train_ngram(
            &["the cat sat on the mat", "the dog sat on the rug", "a cat and a dog"],
            &NgramParams::default(),
            "pets",
        )
        .unwrap();
        let v = model.vocab_size();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for len in 0..4 {
            for _ in 0..25 {
                let history: Vec<u32> = (0..len).map(|_| rng.gen_range(0..v)).collect();
                let total: f64 = model.dense_probs(&history).iter().sum();
                assert!(
                    (total - 1.0).abs() <= 1e-9,
                    "Σ P(.|{history:?}) = {total}"
                );
            }
        }
    }

    #[test]
    fn sparse_rank_and_argmax_match_the_dense_oracle() {
        let model = train_ngram(
            &[
                "the cat sat on the mat and the cat slept",
                "a dog ran over the hill while the cat watched",
                "every bird sang and every dog barked at the moon",
            ],
            &NgramParams::default(),
            "oracle",
        )
        .unwrap();
        let v = model.vocab_size();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let len = rng.gen_range(0..5);
            let history: Vec<u32> = (0..len).map(|_| rng.gen_range(0..v)).collect();
            let token = rng.gen_range(0..v);
            assert_eq!(
                model.rank_of(&history, token),
                oracle_rank(&model, &history, token),
                "rank mismatch for history {history:?}, token {token}"
            );
            assert_eq!(
                model.argmax(&history),
                oracle_argmax(&model, &history),
                "argmax mismatch for history {history:?}"
            );
        }
    }

    #[test]
    fn self_greedy_generation_scores_all_zero() {
        let model = train_ngram(
            &["one two three four five six seven eight nine ten"],
            &NgramParams::default(),
            "count",
        )
        .unwrap();
        let context = vec![model.vocab().id("one"), model.vocab().id("two")];
        let completion = greedy_generate(&model, &context, 24).unwrap();
        let mut tokens = context.clone();
        tokens.extend_from_slice(&completion);
        let rv = ranks_for(&model, &tokens, context.len()).unwrap();
        assert!(rv.ranks.iter().all(|&r| r == 0), "{:?}", rv.ranks);
    }

    #[test]
    fn codec_round_trips_in_vocabulary_text() {
        let model = ab_model();
        let ids = model.encode("a b a");
        assert_eq!(ids, vec![1, 2, 1]);
        assert_eq!(model.decode(&ids), "a b a");
        // Out-of-vocabulary words collapse to the UNK surface form and stay
        // stable over a second round trip.
        let ids2 = model.encode("a zebra b");
        assert_eq!(ids2, vec![1, UNK_ID, 2]);
        let text = model.decode(&ids2);
        assert_eq!(text, format!("a {UNK_TOKEN} b"));
        assert_eq!(model.encode(&text), ids2);
    }

    #[test]
    fn persistence_round_trips_and_is_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let model = train_ngram(
            &["the cat sat on the mat", "the dog sat on the rug"],
            &NgramParams::default(),
            "persist",
        )
        .unwrap();
        let model_path = dir.path().join("persist.spotngm");
        let vocab_path = dir.path().join("persist.vocab.json");
        model.save(&model_path, &vocab_path).unwrap();

        let loaded = NgramModel::load(&model_path, &vocab_path).unwrap();
        assert_eq!(loaded.model_id(), "persist");
        assert_eq!(loaded.vocab_size(), model.vocab_size());

        // Identical scoring behaviour…
        let tokens = model.encode("the dog sat on the mat");
        let before = ranks_for(&model, &tokens, 2).unwrap();
        let after = ranks_for(&loaded, &tokens, 2).unwrap();
        assert_eq!(before.ranks, after.ranks);

        // …and canonical bytes when re-saved.
        let model_path2 = dir.path().join("persist2.spotngm");
        let vocab_path2 = dir.path().join("persist2.vocab.json");
        loaded.save(&model_path2, &vocab_path2).unwrap();
        assert_eq!(
            std::fs::read(&model_path).unwrap(),
            std::fs::read(&model_path2).unwrap()
        );
        assert_eq!(
            std::fs::read(&vocab_path).unwrap(),
            std::fs::read(&vocab_path2).unwrap()
        );
    }

    #[test]
    fn load_rejects_foreign_magic() {
        let dir = tempfile::tempdir().unwrap();
        let model_path = dir.path().join("bogus.spotngm");
        let vocab_path = dir.path().join("bogus.vocab.json");
        std::fs::write(&model_path, b"NOTMAGIC________").unwrap();
        std::fs::write(
            &vocab_path,
            r#"{"version":1,"model_id":"x","unk_id":0,"tokens":["<unk>","a"]}"#,
        )
        .unwrap();
        let err = NgramModel::load(&model_path, &vocab_path).unwrap_err();
        assert!(err.to_string().contains("model file corrupt"));
    }
}
