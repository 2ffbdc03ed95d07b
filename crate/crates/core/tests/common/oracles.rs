//! Brute-force reference implementations used by the property tests and the
//! acceptance run.

use std::cmp::Ordering;

use tfhe_eval::metrics::TokenSequence;
use tfhe_eval::retrieval::RetrievalIndex;

pub type Gram = Vec<String>;

/// Collect every n-gram occurrence, count with a linear scan and keep the k
/// best per order by (count desc, n-gram asc).
pub fn trivial_ngrams(corpus: &[TokenSequence], k: usize, max_order: usize) -> Vec<Gram> {
    let mut out = Vec::new();
    for n in 1..=max_order {
        let mut occurrences: Vec<Gram> = Vec::new();
        for s in corpus {
            for w in s.tokens.windows(n) {
                occurrences.push(w.to_vec());
            }
        }
        let mut distinct = occurrences.clone();
        distinct.sort();
        distinct.dedup();
        let mut ranked: Vec<(usize, Gram)> =
            distinct.into_iter().map(|g| (occurrences.iter().filter(|o| **o == g).count(), g)).collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        out.extend(ranked.into_iter().take(k).map(|(_, g)| g));
    }
    out.sort();
    out.dedup();
    out
}

pub fn ints(v: &[f64]) -> Vec<u128> {
    v.iter()
        .map(|&x| {
            assert!(x >= 0.0 && x.fract() == 0.0);
            x as u128
        })
        .collect()
}

/// Compare cos(q, a) with cos(q, b) exactly: both are dot / sqrt(|q|^2 |v|^2)
/// over non-negative integers, so compare dot_a^2 |b|^2 with dot_b^2 |a|^2.
pub fn cmp_cosine(q: &[u128], a: &[u128], b: &[u128]) -> Ordering {
    let dot = |x: &[u128]| q.iter().zip(x).map(|(p, r)| p * r).sum::<u128>();
    let sq = |x: &[u128]| x.iter().map(|v| v * v).sum::<u128>();
    let (da, db, na, nb) = (dot(a), dot(b), sq(a), sq(b));
    match (na == 0, nb == 0) {
        (true, true) => Ordering::Equal,
        (true, false) => 0.cmp(&db),
        (false, true) => da.cmp(&0),
        (false, false) => (da * da * nb).cmp(&(db * db * na)),
    }
}

/// Rank every entry of an index built from the count-vector mock embedder
/// by exact cosine, ties to the lower chunk id.
pub fn top_k(index: &RetrievalIndex, query: &[u128], k: usize) -> Vec<u64> {
    let mut all: Vec<(u64, Vec<u128>)> =
        index.entries().iter().map(|e| (e.chunk.chunk_id, ints(&e.vector.values))).collect();
    all.sort_by(|a, b| cmp_cosine(query, &b.1, &a.1).then(a.0.cmp(&b.0)));
    all.into_iter().take(k).map(|(id, _)| id).collect()
}
