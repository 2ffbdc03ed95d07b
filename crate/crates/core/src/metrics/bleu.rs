//! CrystalBLEU: BLEU over token n-grams after discarding the n-grams that
//! are ubiquitous in a background corpus of the target language.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::lex::TokenSequence;

pub const DEFAULT_MAX_ORDER: usize = 4;
pub const DEFAULT_TRIVIAL_K: usize = 50;
/// Stand-in numerator for orders with no clipped matches.
pub const SMOOTHING_EPSILON: f64 = 1e-9;

pub type Ngram = Vec<String>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrivialNgramSet {
    pub ngrams: BTreeSet<Ngram>,
    pub k: usize,
    pub max_order: usize,
    pub corpus_id: String,
}

impl TrivialNgramSet {
    pub fn empty() -> Self {
        TrivialNgramSet::default()
    }

    pub fn contains(&self, ngram: &[String]) -> bool {
        self.ngrams.contains(ngram)
    }
}

pub fn ngram_counts(tokens: &[String], order: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if order == 0 {
        return counts;
    }
    for w in tokens.windows(order) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// The `k` most frequent n-grams of each order 1..=`max_order` across the
/// corpus. Equal counts are ordered by the n-gram's lexicographic order.
pub fn trivial_ngrams(
    corpus: &[TokenSequence],
    k: usize,
    max_order: usize,
    corpus_id: impl Into<String>,
) -> TrivialNgramSet {
    let mut ngrams = BTreeSet::new();
    for order in 1..=max_order {
        let mut counts: HashMap<&[String], usize> = HashMap::new();
        for seq in corpus {
            for (g, c) in ngram_counts(&seq.tokens, order) {
                *counts.entry(g).or_insert(0) += c;
            }
        }
        let mut ranked: Vec<(&[String], usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ngrams.extend(ranked.into_iter().take(k).map(|(g, _)| g.to_vec()));
    }
    TrivialNgramSet { ngrams, k, max_order, corpus_id: corpus_id.into() }
}

/// Per-order clipped match statistics after trivial-n-gram removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderStats {
    pub matches: usize,
    pub candidate_total: usize,
}

pub fn order_stats(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    trivial: &TrivialNgramSet,
    order: usize,
) -> OrderStats {
    let cand = ngram_counts(&candidate.tokens, order);
    let refc = ngram_counts(&reference.tokens, order);
    let mut matches = 0;
    let mut candidate_total = 0;
    for (g, c) in cand {
        if trivial.contains(g) {
            continue;
        }
        candidate_total += c;
        matches += c.min(refc.get(g).copied().unwrap_or(0));
    }
    OrderStats { matches, candidate_total }
}

/// Uniform-weight BLEU over orders 1..=`max_order` with trivial n-grams
/// removed from both sides.
///
/// Orders whose filtered candidate has no n-grams carry no evidence and are
/// left out of the geometric mean; the score is 0 when no order has any.
/// Orders without clipped matches contribute `SMOOTHING_EPSILON / total`.
/// The brevity penalty uses raw token lengths.
pub fn crystal_bleu(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    trivial: &TrivialNgramSet,
    max_order: usize,
) -> f64 {
    assert!(max_order >= 1, "max_order must be at least 1");
    let log_p: Vec<f64> = (1..=max_order)
        .map(|n| order_stats(candidate, reference, trivial, n))
        .filter(|s| s.candidate_total > 0)
        .map(|s| {
            let num = if s.matches == 0 { SMOOTHING_EPSILON } else { s.matches as f64 };
            (num / s.candidate_total as f64).ln()
        })
        .collect();
    if log_p.is_empty() {
        return 0.0;
    }
    let geo_mean = (log_p.iter().sum::<f64>() / log_p.len() as f64).exp();
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    (bp * geo_mean).clamp(0.0, 1.0)
}
