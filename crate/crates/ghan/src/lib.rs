//! Geometric hypergraph attention network (GHAN) for modeling the impact of
//! financial news on stock returns.
//!
//! The pipeline runs end to end from raw files to risk-adjusted performance
//! numbers:
//!
//! - [`ingest`] parses prices and news, computes returns, technical
//!   indicators, aggregated per-stock sentiment, and normalized daily
//!   feature vectors.
//! - [`hypergraph`] builds one snapshot per trading day: stock and news
//!   nodes, one hyperedge per news event connecting the stocks it mentions,
//!   and the 0/1 incidence structure.
//! - [`model`] is the network itself: geometric + positional + projected
//!   text embeddings, stacked layers with node-level and hyperedge-level
//!   attention, and a 3-class trend head per stock.
//! - [`numerics`] is the dense tensor engine underneath: reverse-mode
//!   gradients on a tape, the Adam optimizer, and a finite-difference
//!   oracle used heavily by the test suite.
//! - [`train`] handles chronological splits, label derivation, the training
//!   loop, and validation-based model selection.
//! - [`explain`] computes Shapley attributions over grouped model inputs,
//!   both by exact enumeration and by seeded permutation sampling.
//! - [`evaluate`] provides classification metrics and the threshold
//!   portfolio backtest with Sharpe ratio.
//! - [`synth`] generates deterministic synthetic datasets with a planted
//!   news-to-return signal for end-to-end testing.
//! - [`dataset`] assembles and persists the intermediate archive consumed
//!   by training and evaluation, and [`manifest`] records run provenance.
//!
//! All floating-point state is `f64`. Randomness goes through a single
//! seedable counter-based generator (ChaCha8), so every stage reproduces
//! bit-for-bit given the same seed.

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod hypergraph;
pub mod ingest;
pub mod manifest;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod train;

pub use error::{GhanError, Result};
