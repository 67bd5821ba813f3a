//! Originality scoring for separating human-written text from language-model
//! output.
//!
//! The idea: a language model that is asked to continue a prompt almost always
//! ranks its *own* favourite continuation at the top, while a human writer
//! keeps picking tokens the model considers unlikely. For every completion
//! position we ask a scoring model for the **rank** of the observed token
//! (how many vocabulary entries the model scores strictly higher), normalize
//! by vocabulary size, and average over the completion scaled to `[0, 10)`.
//! Machine text scores near zero — greedy output scored by its own generator
//! is *exactly* zero — and human text lands well above, so a single calibrated
//! threshold separates the two.
//!
//! The crate is organized around that pipeline:
//!
//! * [`backend`] — the [`backend::ScoringModel`] trait (rank queries + greedy
//!   generation), a self-contained interpolated n-gram model, and an HTTP
//!   client for remote inference servers.
//! * [`score`] — per-token scores, sequence aggregation, and threshold
//!   verdicts.
//! * [`calibrate`] — threshold calibration (balanced-accuracy sweep and
//!   percentile), accuracy summaries, and Gaussian KDE score densities.
//! * [`corpus`] — corpus ingestion and (context, human, model) pair building.
//! * [`matrix`] — the cross-model evaluation matrix and ratio statistics.
//! * [`config`] — the on-disk run configuration shared by the `spot` CLI.

pub mod backend;
pub mod calibrate;
pub mod config;
pub mod corpus;
pub mod matrix;
pub mod score;
