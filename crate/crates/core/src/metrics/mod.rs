//! Evaluation metrics: CrystalBLEU, pass@k and per-cell aggregation.

mod aggregate;
mod bleu;
mod lex;
mod passk;

use thiserror::Error;

pub use aggregate::{aggregate, AggregateReport, CellKey, CellRow};
pub use bleu::{
    crystal_bleu, ngram_counts, order_stats, trivial_ngrams, Ngram, OrderStats, TrivialNgramSet, DEFAULT_MAX_ORDER,
    DEFAULT_TRIVIAL_K, SMOOTHING_EPSILON,
};
pub use lex::{lex, TokenSequence};
pub use passk::{pass_at_k, PassAtKInput};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid pass@k input: n_t={}, n={}, k={}", .0.n_t, .0.n, .0.k)]
    PassAtK(PassAtKInput),
    #[error("cell {cell} mixes repeat totals {totals:?}")]
    MixedRepeatTotals { cell: String, totals: Vec<u32> },
}
