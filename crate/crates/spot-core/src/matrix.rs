//! Cross-model evaluation matrices.
//!
//! Runs the full experiment grid: every registered evaluator scores every
//! source's completions over a shared pair archive. Rows are evaluators,
//! columns are text sources (`human` plus each generating model), and each
//! cell holds the mean and population standard deviation of the aggregate
//! originality scores across pairs.
//!
//! Two facts the matrix makes checkable end to end:
//!
//! * the diagonal (a model scoring its own greedy completions) is exactly
//!   zero — no tolerance;
//! * the `human` column should dominate every model column when the
//!   evaluator never saw the scored text, which [`ratios`] quantifies as
//!   `human mean / best model mean` per row.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::HarnessBackend;
use crate::corpus::{pairs_digest, EvalPair};
use crate::score::{score_sequence, ScoreError, TokenSequence};

/// Column name of the human-continuation source.
pub const HUMAN_SOURCE: &str = "human";

/// Mean/dispersion/count for one (evaluator, source) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    /// Population standard deviation (√(Σ(x−mean)²/n)).
    pub std: f64,
    pub n: usize,
}

impl CellStats {
    fn from_scores(scores: &[f64]) -> CellStats {
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        CellStats {
            mean,
            std: var.sqrt(),
            n,
        }
    }
}

/// Experiment geometry recorded alongside the cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub context_len: usize,
    pub completion_len: usize,
    /// Content digest of the pair archive the matrix was computed from.
    pub corpus_digest: String,
}

/// The full evaluators × sources score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    /// Row labels, sorted.
    pub evaluators: Vec<String>,
    /// Column labels: `human` first, then the model sources, sorted.
    pub sources: Vec<String>,
    /// `cells[row][col]` pairs with `evaluators[row]` × `sources[col]`.
    pub cells: Vec<Vec<CellStats>>,
    pub config: MatrixConfig,
}

impl EvalMatrix {
    /// Cell by labels.
    pub fn cell(&self, evaluator: &str, source: &str) -> Option<&CellStats> {
        let row = self.evaluators.iter().position(|e| e == evaluator)?;
        let col = self.sources.iter().position(|s| s == source)?;
        Some(&self.cells[row][col])
    }

    /// Human-readable CSV: rows = evaluators, columns = sources, cells
    /// formatted `mean±std(n)` at 4 decimal places. The JSON serialization
    /// is the full-precision record; this is for eyeballs and spreadsheets.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("evaluator");
        for source in &self.sources {
            write!(out, ",{source}").unwrap();
        }
        out.push('\n');
        for (row, evaluator) in self.evaluators.iter().enumerate() {
            out.push_str(evaluator);
            for cell in &self.cells[row] {
                write!(out, ",{:.4}±{:.4}({})", cell.mean, cell.std, cell.n).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// One completed cell, preserved when a later cell fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedCell {
    pub evaluator: String,
    pub source: String,
    pub stats: CellStats,
}

/// Errors from matrix construction.
#[derive(Debug, Error)]
pub enum MatrixError {
    /// The pair stream was empty.
    #[error("no pairs")]
    NoPairs,
    /// Pairs disagree on geometry or completion sources.
    #[error("inconsistent pair archive: {0}")]
    Inconsistent(String),
    /// A cell failed; everything computed before it survives in `completed`
    /// so large runs can resume instead of restarting.
    #[error("cell ({evaluator}, {source}) failed after {} completed cells: {cause}", completed.len())]
    Partial {
        evaluator: String,
        source: String,
        completed: Vec<CompletedCell>,
        #[source]
        cause: ScoreError,
    },
}

/// Score every source's completions under every evaluator.
///
/// For evaluator `e` and source `s`, each pair contributes one aggregate
/// score of the sequence `context ++ completion(s)` in `e`'s token space:
/// the context and any foreign-model completion are re-encoded from their
/// stored text, while `e`'s own completions use the stored token ids (they
/// are already in `e`'s space — that keeps the diagonal exactly zero).
pub fn run_matrix(
    pairs: &[EvalPair],
    evaluators: &BTreeMap<String, &dyn HarnessBackend>,
) -> Result<EvalMatrix, MatrixError> {
    if pairs.is_empty() {
        return Err(MatrixError::NoPairs);
    }
    let first = &pairs[0];
    let model_sources: Vec<String> = first.completions.keys().cloned().collect();
    for pair in pairs {
        if pair.completions.keys().cloned().collect::<Vec<_>>() != model_sources {
            return Err(MatrixError::Inconsistent(
                "pairs disagree on completion sources".to_string(),
            ));
        }
        if pair.meta.context_len != first.meta.context_len
            || pair.meta.completion_len != first.meta.completion_len
        {
            return Err(MatrixError::Inconsistent(
                "pairs disagree on context/completion lengths".to_string(),
            ));
        }
    }

    let mut sources = vec![HUMAN_SOURCE.to_string()];
    sources.extend(model_sources);
    let evaluator_ids: Vec<String> = evaluators.keys().cloned().collect();

    let mut completed: Vec<CompletedCell> = Vec::new();
    let mut cells: Vec<Vec<CellStats>> = Vec::new();
    for evaluator in &evaluator_ids {
        let backend = evaluators[evaluator];
        let mut row = Vec::with_capacity(sources.len());
        for source in &sources {
            let mut scores = Vec::with_capacity(pairs.len());
            for pair in pairs {
                match score_cell(backend, evaluator, source, pair) {
                    Ok(score) => scores.push(score),
                    Err(cause) => {
                        return Err(MatrixError::Partial {
                            evaluator: evaluator.clone(),
                            source: source.clone(),
                            completed,
                            cause,
                        })
                    }
                }
            }
            let stats = CellStats::from_scores(&scores);
            completed.push(CompletedCell {
                evaluator: evaluator.clone(),
                source: source.clone(),
                stats,
            });
            row.push(stats);
        }
        cells.push(row);
    }

    Ok(EvalMatrix {
        evaluators: evaluator_ids,
        sources,
        cells,
        config: MatrixConfig {
            context_len: first.meta.context_len,
            completion_len: first.meta.completion_len,
            corpus_digest: pairs_digest(pairs),
        },
    })
}

fn score_cell(
    backend: &dyn HarnessBackend,
    evaluator: &str,
    source: &str,
    pair: &EvalPair,
) -> Result<f64, ScoreError> {
    let mut tokens = backend.encode(&pair.meta.context_text);
    let context_len = tokens.len();
    if source == HUMAN_SOURCE {
        tokens.extend(backend.encode(&pair.meta.human_text));
    } else if source == evaluator {
        tokens.extend_from_slice(&pair.completions[source]);
    } else {
        tokens.extend(backend.encode(&pair.meta.completion_texts[source]));
    }
    let seq = TokenSequence::new(tokens, context_len)?;
    Ok(score_sequence(&seq, backend)?.aggregate)
}

/// Per-evaluator human-vs-best-model ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub evaluator: String,
    pub human_mean: f64,
    /// Largest mean among model sources in this row.
    pub max_model_mean: f64,
    /// `human_mean / max_model_mean`; absent when every model mean is 0.
    pub ratio: Option<f64>,
}

/// Row-wise separation ratios plus their global range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub rows: Vec<RatioEntry>,
    /// Smallest/largest defined ratio; absent when no row has one.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Errors from ratio computation.
#[derive(Debug, Error)]
pub enum RatioError {
    #[error("matrix has no human column")]
    NoHumanColumn,
    #[error("matrix has no model sources")]
    NoModelSources,
}

/// How many times the human mean exceeds the best model mean, per row.
pub fn ratios(matrix: &EvalMatrix) -> Result<RatioSummary, RatioError> {
    let human_col = matrix
        .sources
        .iter()
        .position(|s| s == HUMAN_SOURCE)
        .ok_or(RatioError::NoHumanColumn)?;
    if matrix.sources.len() < 2 {
        return Err(RatioError::NoModelSources);
    }

    let mut rows = Vec::with_capacity(matrix.evaluators.len());
    for (r, evaluator) in matrix.evaluators.iter().enumerate() {
        let human_mean = matrix.cells[r][human_col].mean;
        let max_model_mean = matrix.cells[r]
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != human_col)
            .map(|(_, cell)| cell.mean)
            .fold(f64::NEG_INFINITY, f64::max);
        let ratio = if max_model_mean > 0.0 {
            Some(human_mean / max_model_mean)
        } else {
            log::warn!(
                "ratio undefined for evaluator {evaluator}: all model means are zero"
            );
            None
        };
        rows.push(RatioEntry {
            evaluator: evaluator.clone(),
            human_mean,
            max_model_mean,
            ratio,
        });
    }
    let defined: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    Ok(RatioSummary {
        rows,
        min: defined.iter().copied().fold(None, |m, r| {
            Some(m.map_or(r, |m: f64| m.min(r)))
        }),
        max: defined.iter().copied().fold(None, |m, r| {
            Some(m.map_or(r, |m: f64| m.max(r)))
        }),
    })
}

/// The matrix plus its ratio block, as written to disk by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub matrix: EvalMatrix,
    pub ratios: RatioSummary,
}

impl MatrixDocument {
    pub fn new(matrix: EvalMatrix) -> Result<MatrixDocument, RatioError> {
        let ratios = ratios(&matrix)?;
        Ok(MatrixDocument { matrix, ratios })
    }

    /// Full-precision JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serialization cannot fail") + "\n"
    }
}
