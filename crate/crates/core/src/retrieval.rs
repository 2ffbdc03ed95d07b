//! Documentation retrieval for prompt augmentation: chunking, embedding,
//! a flat cosine index persisted as JSON lines, and prompt assembly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gateway::http::{http_agent, post_json};
use crate::gateway::GatewayError;

pub const DEFAULT_MAX_CHUNK_CHARS: usize = 1200;
pub const DEFAULT_OVERLAP_CHARS: usize = 200;
pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_PROMPT_BUDGET_CHARS: usize = 6000;
pub const DEFAULT_MOCK_DIMENSION: usize = 256;
pub const DEFAULT_EMBEDDING_MODEL: &str = "jinaai/jina-embeddings-v2-base-code";

const INDEX_FORMAT: &str = "tfhe-eval-retrieval-index";
const INDEX_VERSION: u32 = 1;
const EXCERPTS_HEADER: &str = "### TFHE documentation excerpts";
const EXCERPTS_FOOTER: &str = "### End of documentation excerpts";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid chunking parameters: max_chunk_chars={max}, overlap_chars={overlap}")]
    Chunking { max: usize, overlap: usize },
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("index was built with embedder `{index}` but `{query}` was supplied")]
    EmbedderMismatch { index: String, query: String },
    #[error("expected dimension {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("embedding contains a non-finite component")]
    NonFinite,
    #[error("embedding provider: {0}")]
    Provider(#[from] GatewayError),
    #[error("nothing to index")]
    EmptyIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocChunk {
    pub chunk_id: u64,
    pub source: String,
    pub text: String,
    /// Char offset of the chunk within its source document.
    pub start_char: usize,
    pub token_estimate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
///
/// Computed as sign(dot) * sqrt(dot^2 / (|a|^2 |b|^2)) with a single
/// rounding before the root, so integer-valued vectors with equal cosines
/// get bit-identical scores and rank ties stay ties.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let sq = |v: &EmbeddingVector| v.values.iter().map(|x| x * x).sum::<f64>();
    let (na, nb) = (sq(a), sq(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    (dot * dot / (na * nb)).sqrt().copysign(dot).clamp(-1.0, 1.0)
}

/// Split `text` into chunks of at most `max_chunk_chars` chars where
/// consecutive chunks share exactly `overlap_chars` chars.
///
/// A chunk ends after the last paragraph break (`\n\n`) in its window, else
/// after the last line break, else at the window edge. Break points are only
/// taken past the overlap so every chunk advances.
pub fn chunk_document(
    text: &str,
    source: &str,
    max_chunk_chars: usize,
    overlap_chars: usize,
) -> Result<Vec<DocChunk>, RetrievalError> {
    if max_chunk_chars == 0 || overlap_chars >= max_chunk_chars {
        return Err(RetrievalError::Chunking { max: max_chunk_chars, overlap: overlap_chars });
    }
    let chars: Vec<char> = text.chars().collect();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let limit = (start + max_chunk_chars).min(chars.len());
        let end = if limit == chars.len() { limit } else { break_point(&chars, start + overlap_chars + 1, limit) };
        let body: String = chars[start..end].iter().collect();
        chunks.push(DocChunk {
            chunk_id: chunks.len() as u64,
            source: source.to_owned(),
            token_estimate: (end - start).div_ceil(4) as u64,
            text: body,
            start_char: start,
        });
        if end == chars.len() {
            break;
        }
        start = end - overlap_chars;
    }
    Ok(chunks)
}

/// Best end position in `lo..=hi` (exclusive chunk end).
fn break_point(chars: &[char], lo: usize, hi: usize) -> usize {
    let after = |pred: &dyn Fn(usize) -> bool| (lo..=hi).rev().find(|&e| pred(e));
    after(&|e| e >= 2 && chars[e - 1] == '\n' && chars[e - 2] == '\n')
        .or_else(|| after(&|e| chars[e - 1] == '\n'))
        .unwrap_or(hi)
}

pub trait Embedder: Send + Sync {
    /// Identifies model and configuration; stored in the index.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError>;
}

/// Deterministic bag-of-tokens embedder: lowercase alphanumeric tokens are
/// hashed (FNV-1a) into `dimension` buckets and counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockEmbedder {
    pub dimension: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder { dimension: DEFAULT_MOCK_DIMENSION }
    }
}

pub fn mock_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_')).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl MockEmbedder {
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.dimension];
        for t in mock_tokens(text) {
            values[self.bucket(&t)] += 1.0;
        }
        EmbeddingVector { values }
    }
}

impl Embedder for MockEmbedder {
    fn id(&self) -> String {
        format!("mock-fnv1a-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    /// Base URL; `/v1/embeddings` is appended.
    pub endpoint: String,
    #[serde(default = "default_embedding_model")]
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub credential_ref: Option<String>,
    pub dimension: usize,
    #[serde(default = "default_embed_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_embed_retries")]
    pub max_retries: u32,
    #[serde(default = "default_embed_batch")]
    pub batch_size: usize,
}

fn default_embedding_model() -> String {
    DEFAULT_EMBEDDING_MODEL.into()
}
fn default_embed_timeout_ms() -> u64 {
    60_000
}
fn default_embed_retries() -> u32 {
    3
}
fn default_embed_batch() -> usize {
    32
}

/// OpenAI-style `/v1/embeddings` client.
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Self {
        let agent = http_agent(Duration::from_millis(config.request_timeout_ms));
        HttpEmbedder { config, agent }
    }

    fn url(&self) -> String {
        format!("{}/v1/embeddings", self.config.endpoint.trim_end_matches('/'))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let mut headers = Vec::new();
        if let Some(var) = &self.config.credential_ref {
            let key = std::env::var(var).map_err(|_| GatewayError::MissingCredential(var.clone()))?;
            headers.push(("authorization", format!("Bearer {key}")));
        }
        let body = json!({ "model": self.config.model, "input": texts });
        let mut attempt = 0;
        let resp = loop {
            match post_json(&self.agent, &self.url(), &headers, &body) {
                Ok(v) => break v,
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    log::warn!("embedding attempt {} failed: {e}", attempt + 1);
                    std::thread::sleep(Duration::from_millis(250 << attempt.min(8)));
                    attempt += 1;
                }
                Err(e) => return Err(e.into()),
            }
        };
        parse_embeddings(&resp, texts.len(), self.config.dimension)
    }
}

/// Read `data[*].embedding`, honoring each item's `index` when present.
pub fn parse_embeddings(
    resp: &Value,
    expected: usize,
    dimension: usize,
) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    let malformed = |m: &str| RetrievalError::Provider(GatewayError::Malformed(m.to_owned()));
    let data = resp.get("data").and_then(Value::as_array).ok_or_else(|| malformed("missing data array"))?;
    if data.len() != expected {
        return Err(malformed(&format!("expected {expected} embeddings, got {}", data.len())));
    }
    let mut out: Vec<Option<EmbeddingVector>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let slot = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let values: Vec<f64> = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing embedding"))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| malformed("non-numeric embedding component")))
            .collect::<Result<_, _>>()?;
        let v = checked_vector(values, dimension)?;
        match out.get_mut(slot) {
            Some(s @ None) => *s = Some(v),
            _ => return Err(malformed(&format!("bad or duplicate embedding index {slot}"))),
        }
    }
    Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
}

fn checked_vector(values: Vec<f64>, dimension: usize) -> Result<EmbeddingVector, RetrievalError> {
    if values.len() != dimension {
        return Err(RetrievalError::Dimension { expected: dimension, found: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RetrievalError::NonFinite);
    }
    Ok(EmbeddingVector { values })
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}:{}", self.config.model, self.config.dimension)
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.embed_batch(batch)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk: DocChunk,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    embedder_id: String,
    dimension: usize,
    entries: usize,
    built_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    entries: Vec<IndexEntry>,
    embedder_id: String,
    dimension: usize,
    built_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub chunk: &'a DocChunk,
    pub score: f64,
}

impl RetrievalIndex {
    /// Chunk every `(source, text)` document, embed all chunks and number
    /// them consecutively across documents.
    pub fn build(
        documents: &[(String, String)],
        embedder: &dyn Embedder,
        max_chunk_chars: usize,
        overlap_chars: usize,
    ) -> Result<Self, RetrievalError> {
        let mut chunks = Vec::new();
        for (source, text) in documents {
            for mut c in chunk_document(text, source, max_chunk_chars, overlap_chars)? {
                c.chunk_id = chunks.len() as u64;
                chunks.push(c);
            }
        }
        if chunks.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let vectors = embedder.embed(&texts)?;
        let dimension = embedder.dimension();
        let mut entries = Vec::with_capacity(chunks.len());
        for (chunk, vector) in chunks.into_iter().zip(vectors) {
            entries.push(IndexEntry { chunk, vector: checked_vector(vector.values, dimension)? });
        }
        Ok(RetrievalIndex { entries, embedder_id: embedder.id(), dimension, built_at: Utc::now() })
    }

    pub fn from_entries(
        entries: Vec<IndexEntry>,
        embedder_id: impl Into<String>,
        dimension: usize,
    ) -> Result<Self, RetrievalError> {
        if entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        for e in &entries {
            if e.vector.dimension() != dimension {
                return Err(RetrievalError::Dimension { expected: dimension, found: e.vector.dimension() });
            }
        }
        Ok(RetrievalIndex { entries, embedder_id: embedder_id.into(), dimension, built_at: Utc::now() })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn built_at(&self) -> DateTime<Utc> {
        self.built_at
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Header line followed by one JSON entry per line.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let io = |source| RetrievalError::Io { path: path.to_owned(), source };
        let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            embedder_id: self.embedder_id.clone(),
            dimension: self.dimension,
            entries: self.entries.len(),
            built_at: self.built_at,
        };
        writeln!(w, "{}", json_line(&header)).map_err(io)?;
        for e in &self.entries {
            writeln!(w, "{}", json_line(e)).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Load an index, checking format, version, entry count and dimension,
    /// and that it was built by `expected_embedder` when one is given.
    pub fn load(path: &Path, expected_embedder: Option<&str>) -> Result<Self, RetrievalError> {
        let io = |source| RetrievalError::Io { path: path.to_owned(), source };
        let bad = |line: usize, message: String| RetrievalError::Format { path: path.to_owned(), line, message };
        let reader = BufReader::new(fs::File::open(path).map_err(io)?);
        let mut lines = reader.lines();
        let first = lines.next().ok_or_else(|| bad(1, "empty file".into()))?.map_err(io)?;
        let header: IndexHeader = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(bad(1, format!("unsupported index format {} v{}", header.format, header.version)));
        }
        if let Some(expected) = expected_embedder {
            if expected != header.embedder_id {
                return Err(RetrievalError::EmbedderMismatch { index: header.embedder_id, query: expected.to_owned() });
            }
        }
        let mut entries = Vec::with_capacity(header.entries);
        for (i, l) in lines.enumerate() {
            let l = l.map_err(io)?;
            if l.trim().is_empty() {
                continue;
            }
            let e: IndexEntry = serde_json::from_str(&l).map_err(|e| bad(i + 2, e.to_string()))?;
            entries.push(IndexEntry { vector: checked_vector(e.vector.values, header.dimension)?, chunk: e.chunk });
        }
        if entries.len() != header.entries {
            return Err(bad(1, format!("header declares {} entries, found {}", header.entries, entries.len())));
        }
        if entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        Ok(RetrievalIndex {
            entries,
            embedder_id: header.embedder_id,
            dimension: header.dimension,
            built_at: header.built_at,
        })
    }

    /// Exhaustive cosine ranking against a query vector. Ties go to the
    /// lower chunk id.
    pub fn search(&self, query: &EmbeddingVector, top_k: usize) -> Result<Vec<Hit<'_>>, RetrievalError> {
        if query.dimension() != self.dimension {
            return Err(RetrievalError::Dimension { expected: self.dimension, found: query.dimension() });
        }
        let mut hits: Vec<Hit<'_>> =
            self.entries.iter().map(|e| Hit { chunk: &e.chunk, score: cosine(query, &e.vector) }).collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.chunk.chunk_id.cmp(&b.chunk.chunk_id)));
        hits.truncate(top_k);
        Ok(hits)
    }
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("index records serialize")
}

/// Embed `query` with `embedder` and rank the index against it.
pub fn retrieve<'a>(
    index: &'a RetrievalIndex,
    embedder: &dyn Embedder,
    query: &str,
    top_k: usize,
) -> Result<Vec<Hit<'a>>, RetrievalError> {
    if embedder.id() != index.embedder_id {
        return Err(RetrievalError::EmbedderMismatch { index: index.embedder_id.clone(), query: embedder.id() });
    }
    if top_k == 0 {
        return Ok(Vec::new());
    }
    let q = embedder.embed(&[query.to_owned()])?.pop().ok_or(RetrievalError::EmptyIndex)?;
    index.search(&q, top_k)
}

/// An index together with the embedder that built it.
pub struct Retriever {
    pub index: RetrievalIndex,
    pub embedder: Box<dyn Embedder>,
}

impl Retriever {
    pub fn new(index: RetrievalIndex, embedder: Box<dyn Embedder>) -> Result<Self, RetrievalError> {
        if embedder.id() != index.embedder_id {
            return Err(RetrievalError::EmbedderMismatch { index: index.embedder_id.clone(), query: embedder.id() });
        }
        Ok(Retriever { index, embedder })
    }

    pub fn retrieve(&self, query: &str, top_k: usize) -> Result<Vec<Hit<'_>>, RetrievalError> {
        retrieve(&self.index, self.embedder.as_ref(), query, top_k)
    }
}

/// Append a delimited excerpts section to `base`, in rank order. Hits are
/// added whole while the section stays within `budget_chars`.
pub fn augment_prompt(base: &str, hits: &[Hit<'_>], budget_chars: usize) -> String {
    let mut section = String::new();
    let mut used = 0;
    for (rank, h) in hits.iter().enumerate() {
        let excerpt = format!("[{}] source: {}\n{}\n\n", rank + 1, h.chunk.source, h.chunk.text.trim_end());
        let cost = excerpt.chars().count();
        if used + cost > budget_chars {
            break;
        }
        used += cost;
        section.push_str(&excerpt);
    }
    if section.is_empty() {
        return base.to_owned();
    }
    format!("{base}\n\n{EXCERPTS_HEADER}\n\n{section}{EXCERPTS_FOOTER}")
}

/// Read documentation files and pair each with its path.
pub fn read_documents(paths: &[PathBuf]) -> Result<Vec<(String, String)>, RetrievalError> {
    paths
        .iter()
        .map(|p| {
            fs::read_to_string(p)
                .map(|t| (p.display().to_string(), t))
                .map_err(|source| RetrievalError::Io { path: p.clone(), source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reconstruct(chunks: &[DocChunk], overlap: usize) -> String {
        let mut out = String::new();
        for (i, c) in chunks.iter().enumerate() {
            let skip = if i == 0 { 0 } else { overlap };
            out.extend(c.text.chars().skip(skip));
        }
        out
    }

    #[test]
    fn short_doc_is_one_chunk() {
        let c = chunk_document("0123456789", "d", 100, 20).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, "0123456789");
        assert!(chunk_document("", "d", 100, 20).unwrap().is_empty());
    }

    #[test]
    fn invalid_parameters() {
        assert!(chunk_document("abc", "d", 10, 10).is_err());
        assert!(chunk_document("abc", "d", 0, 0).is_err());
    }

    #[test]
    fn long_doc_covered() {
        let doc: String = (0..250).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let c = chunk_document(&doc, "d", 100, 20).unwrap();
        assert_eq!(reconstruct(&c, 20), doc);
        assert_eq!(c.iter().map(|c| c.start_char).collect::<Vec<_>>(), [0, 80, 160]);
    }

    #[test]
    fn prefers_paragraph_breaks() {
        let doc = format!("{}\n\n{}\n{}", "a".repeat(40), "b".repeat(30), "c".repeat(60));
        let c = chunk_document(&doc, "d", 100, 10).unwrap();
        assert!(c[0].text.ends_with("\n\n"), "{:?}", c[0].text);
        assert_eq!(reconstruct(&c, 10), doc);
    }

    #[test]
    fn mock_embedding_basics() {
        let e = MockEmbedder::default();
        let a = e.embed_one("bootsAND gate");
        assert_eq!(a, e.embed_one("bootsAND gate"));
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&a, &e.embed_one("")), 0.0);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn disjoint_tokens_hand_counted() {
        let e = MockEmbedder { dimension: 256 };
        let (x, y) = ("bootsAND bootsAND key", "cipher sample");
        let bx: Vec<usize> = ["bootsand", "bootsand", "key"].iter().map(|t| e.bucket(t)).collect();
        let by: Vec<usize> = ["cipher", "sample"].iter().map(|t| e.bucket(t)).collect();
        assert!(bx.iter().all(|b| !by.contains(b)), "fixture buckets collide: {bx:?} {by:?}");
        let vx = e.embed_one(x);
        assert_eq!(vx.values[bx[0]], 2.0);
        assert_eq!(vx.values.iter().sum::<f64>(), 3.0);
        assert_eq!(cosine(&vx, &e.embed_one(y)), 0.0);
    }

    #[test]
    fn augment_respects_budget_and_order() {
        let c1 =
            DocChunk { chunk_id: 0, source: "a.md".into(), text: "first".into(), start_char: 0, token_estimate: 2 };
        let c2 =
            DocChunk { chunk_id: 1, source: "b.md".into(), text: "second".into(), start_char: 0, token_estimate: 2 };
        let hits = [Hit { chunk: &c2, score: 0.9 }, Hit { chunk: &c1, score: 0.5 }];
        assert_eq!(augment_prompt("base", &[], 1000), "base");
        let full = augment_prompt("base", &hits, 1000);
        assert!(full.find("second").unwrap() < full.find("first").unwrap());
        assert!(full.contains("source: b.md"));
        let cut = augment_prompt("base", &hits, 30);
        assert!(cut.contains("second") && !cut.contains("first"));
        assert_eq!(augment_prompt("base", &hits, 5), "base");
    }

    #[test]
    fn parse_embeddings_orders_by_index() {
        let v = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]}
        ]});
        let out = parse_embeddings(&v, 2, 2).unwrap();
        assert_eq!(out[0].values, [1.0, 0.0]);
        assert!(matches!(parse_embeddings(&v, 2, 3), Err(RetrievalError::Dimension { .. })));
        assert!(parse_embeddings(&v, 3, 2).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = MockEmbedder { dimension: 32 };
        let docs = vec![("doc.md".to_string(), "bootsAND computes AND.\n\nbootsOR computes OR.".to_string())];
        let idx = RetrievalIndex::build(&docs, &e, 30, 5).unwrap();
        let path = dir.path().join("index.jsonl");
        idx.save(&path).unwrap();
        let back = RetrievalIndex::load(&path, Some(&e.id())).unwrap();
        assert_eq!(back, idx);
        assert!(matches!(RetrievalIndex::load(&path, Some("other")), Err(RetrievalError::EmbedderMismatch { .. })));
        let text = fs::read_to_string(&path).unwrap();
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        fs::write(&path, truncated).unwrap();
        assert!(matches!(RetrievalIndex::load(&path, None), Err(RetrievalError::Format { .. })));
    }

    #[test]
    fn retrieve_rejects_foreign_embedder() {
        let docs = vec![("d".to_string(), "text".to_string())];
        let idx = RetrievalIndex::build(&docs, &MockEmbedder { dimension: 8 }, 100, 0).unwrap();
        assert!(retrieve(&idx, &MockEmbedder { dimension: 16 }, "q", 1).is_err());
        assert!(retrieve(&idx, &MockEmbedder { dimension: 8 }, "q", 0).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn chunks_cover_source(
            doc in "[a-c \\n]{0,400}",
            max in 2usize..80,
            overlap_frac in 0.0f64..1.0,
        ) {
            let overlap = ((max - 1) as f64 * overlap_frac) as usize;
            let chunks = chunk_document(&doc, "d", max, overlap).unwrap();
            prop_assert_eq!(reconstruct(&chunks, overlap), doc.clone());
            for (i, c) in chunks.iter().enumerate() {
                let n = c.text.chars().count();
                prop_assert!(n > 0 && n <= max);
                if i + 1 < chunks.len() {
                    prop_assert!(n > overlap);
                    let tail: String = c.text.chars().skip(n - overlap).collect();
                    let head: String = chunks[i + 1].text.chars().take(overlap).collect();
                    prop_assert_eq!(tail, head);
                }
            }
        }

        #[test]
        fn cosine_bounded(words in proptest::collection::vec("[a-e]{1,3}", 0..12), other in proptest::collection::vec("[a-e]{1,3}", 0..12)) {
            let e = MockEmbedder { dimension: 16 };
            let s = cosine(&e.embed_one(&words.join(" ")), &e.embed_one(&other.join(" ")));
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
