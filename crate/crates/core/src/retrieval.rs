//! Passage corpus ingestion and retrieval for prompt augmentation.
//!
//! Documents are split into sentences and windowed into passages of five
//! sentences overlapping by one. Documents shorter than four sentences are
//! skipped.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::{cosine, EmbeddingProvider, SimilarityError};

pub const WINDOW_SENTENCES: usize = 5;
pub const WINDOW_OVERLAP: usize = 1;
pub const MIN_DOC_SENTENCES: usize = 4;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("embedding passages: {0}")]
    Embedding(#[from] SimilarityError),
}

#[derive(Debug, Clone, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub doc_id: String,
    pub text: String,
    /// Half-open sentence range `[start, end)` within the document.
    pub sentence_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPassage {
    pub passage: Passage,
    pub score: f64,
}

pub trait Retriever: Send + Sync {
    /// Up to `k` passages by descending score, ties broken by passage id.
    fn search(&self, query: &str, k: usize) -> Vec<ScoredPassage>;
}

/// Splits on `.`, `!` or `?` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1).is_some_and(|c| c.is_ascii_whitespace()) {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Sentence windows `[start, end)` for a document of `n` sentences.
pub fn window_spans(n: usize) -> Vec<(usize, usize)> {
    if n < MIN_DOC_SENTENCES {
        return Vec::new();
    }
    let stride = WINDOW_SENTENCES - WINDOW_OVERLAP;
    let mut spans = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + WINDOW_SENTENCES).min(n);
        spans.push((start, end));
        if end == n {
            break;
        }
        start += stride;
    }
    spans
}

pub fn passages_for(doc: &Document) -> Vec<Passage> {
    let sentences = split_sentences(&doc.text);
    window_spans(sentences.len())
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| Passage {
            id: format!("{}#{i}", doc.doc_id),
            doc_id: doc.doc_id.clone(),
            text: sentences[s..e].join(" "),
            sentence_span: (s, e),
        })
        .collect()
}

/// Reads a JSON Lines corpus of `{doc_id, text}` records.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>, RetrievalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| RetrievalError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Immutable lexical index over passages.
#[derive(Debug, Clone, Default)]
pub struct PassageIndex {
    passages: Vec<Passage>,
    lengths: Vec<usize>,
    avg_len: f64,
    /// term -> postings of (passage index, term frequency)
    postings: HashMap<String, Vec<(usize, usize)>>,
    params: Bm25Params,
}

impl PassageIndex {
    pub fn from_documents(docs: &[Document]) -> Self {
        Self::from_passages(docs.iter().flat_map(passages_for).collect(), Bm25Params::default())
    }

    pub fn from_passages(passages: Vec<Passage>, params: Bm25Params) -> Self {
        let mut postings: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        let mut lengths = Vec::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            let tokens = tokenize(&p.text);
            lengths.push(tokens.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i, n));
            }
        }
        let avg_len = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        };
        PassageIndex {
            passages,
            lengths,
            avg_len,
            postings,
            params,
        }
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

/// Loads a corpus file and indexes it.
pub fn ingest(corpus: &Path) -> Result<PassageIndex, RetrievalError> {
    Ok(PassageIndex::from_documents(&read_corpus(corpus)?))
}

fn top_k(mut scored: Vec<(usize, f64)>, passages: &[Passage], k: usize) -> Vec<ScoredPassage> {
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| passages[a.0].id.cmp(&passages[b.0].id))
    });
    scored
        .into_iter()
        .take(k)
        .map(|(i, score)| ScoredPassage {
            passage: passages[i].clone(),
            score,
        })
        .collect()
}

impl Retriever for PassageIndex {
    fn search(&self, query: &str, k: usize) -> Vec<ScoredPassage> {
        if k == 0 || self.passages.is_empty() {
            return Vec::new();
        }
        let n = self.passages.len() as f64;
        let Bm25Params { k1, b } = self.params;
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let df = list.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for &(i, tf) in list {
                let tf = tf as f64;
                let norm = k1 * (1.0 - b + b * self.lengths[i] as f64 / self.avg_len);
                *scores.entry(i).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        top_k(scores.into_iter().collect(), &self.passages, k)
    }
}

/// Cosine scorer over precomputed passage embeddings.
pub struct DenseIndex {
    passages: Vec<Passage>,
    vectors: Vec<Vec<f64>>,
    embedder: Box<dyn EmbeddingProvider>,
}

impl DenseIndex {
    pub fn build(passages: Vec<Passage>, embedder: Box<dyn EmbeddingProvider>) -> Result<Self, RetrievalError> {
        let texts: Vec<&str> = passages.iter().map(|p| p.text.as_str()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        Ok(DenseIndex {
            passages,
            vectors,
            embedder,
        })
    }
}

impl Retriever for DenseIndex {
    fn search(&self, query: &str, k: usize) -> Vec<ScoredPassage> {
        if k == 0 || self.passages.is_empty() {
            return Vec::new();
        }
        let Ok(q) = self.embedder.embed(query) else {
            return Vec::new();
        };
        let scored = self
            .vectors
            .iter()
            .enumerate()
            .filter_map(|(i, v)| cosine(&q, v).ok().map(|s| (i, s)))
            .collect();
        top_k(scored, &self.passages, k)
    }
}

/// Prefixes `prompt` with retrieved passages. No passages, no change.
pub fn augment_prompt(passages: &[Passage], prompt: &str) -> String {
    if passages.is_empty() {
        return prompt.to_string();
    }
    let joined = passages.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n\n");
    format!("Based on the following passages {joined},\n{prompt}")
}
