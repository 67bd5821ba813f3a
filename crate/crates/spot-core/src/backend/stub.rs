//! Deterministic in-memory backends for tests and fixtures.

use super::{argmax_lowest, strict_rank, BackendError, ScoringModel};

/// A backend driven by a fixed table of per-position score vectors.
///
/// The distribution used at a position depends only on the position index
/// (for batched scoring, the in-call index; for generation, the prefix
/// length), cycling through `rows` when the sequence is longer than the
/// table. Handy for hand-built rank scenarios: uniform rows make every rank
/// zero, a single-peak row makes a constant generator.
pub struct TableModel {
    id: String,
    rows: Vec<Vec<f64>>,
    window: usize,
}

impl TableModel {
    /// Build a table model with an effectively unbounded window.
    ///
    /// Panics if `rows` is empty, any row has fewer than two entries, or the
    /// rows disagree on vocabulary size — these are programming errors in
    /// test setup, not runtime conditions.
    pub fn new(id: &str, rows: Vec<Vec<f64>>) -> Self {
        Self::with_window(id, rows, 1 << 20)
    }

    pub fn with_window(id: &str, rows: Vec<Vec<f64>>, window: usize) -> Self {
        assert!(!rows.is_empty(), "TableModel needs at least one score row");
        let v = rows[0].len();
        assert!(v >= 2, "TableModel vocabulary must have at least 2 entries");
        assert!(
            rows.iter().all(|r| r.len() == v),
            "TableModel rows must share one vocabulary size"
        );
        assert!(window >= 2, "TableModel window must be at least 2");
        TableModel {
            id: id.to_string(),
            rows,
            window,
        }
    }

    /// A model whose every distribution is uniform over `v` tokens.
    pub fn uniform(id: &str, v: usize) -> Self {
        Self::new(id, vec![vec![1.0 / v as f64; v]])
    }

    /// A model that always scores `top` highest over a `v`-token vocabulary.
    pub fn constant_top(id: &str, v: usize, top: usize) -> Self {
        assert!(top < v);
        let mut row = vec![0.0; v];
        row[top] = 1.0;
        Self::new(id, vec![row])
    }

    fn row(&self, position: usize) -> &[f64] {
        &self.rows[position % self.rows.len()]
    }
}

impl ScoringModel for TableModel {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn vocab_size(&self) -> u32 {
        self.rows[0].len() as u32
    }

    fn window(&self) -> usize {
        self.window
    }

    fn rank_batch(&self, tokens: &[u32], first_scored: usize) -> Result<Vec<u32>, BackendError> {
        let v = self.vocab_size();
        tokens[first_scored..]
            .iter()
            .enumerate()
            .map(|(offset, &token)| {
                let position = first_scored + offset;
                if token >= v {
                    return Err(BackendError::TokenOutOfRange {
                        token,
                        position,
                        vocab_size: v,
                    });
                }
                Ok(strict_rank(self.row(position), token as usize))
            })
            .collect()
    }

    fn next_argmax(&self, prefix: &[u32]) -> Result<u32, BackendError> {
        Ok(argmax_lowest(self.row(prefix.len())) as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scores_rank_zero_everywhere() {
        let m = TableModel::uniform("u", 5);
        assert_eq!(m.rank_batch(&[0, 4, 2], 0).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn constant_top_always_generates_its_peak() {
        let m = TableModel::constant_top("c", 10, 7);
        assert_eq!(m.next_argmax(&[1, 2, 3]).unwrap(), 7);
    }

    #[test]
    fn rows_cycle_beyond_the_table() {
        let m = TableModel::new("cyc", vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        // Positions 0,2 favour token 0; positions 1,3 favour token 1.
        assert_eq!(m.rank_batch(&[0, 1, 0, 1], 0).unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(m.rank_batch(&[1, 0, 1, 0], 0).unwrap(), vec![1, 1, 1, 1]);
    }
}
