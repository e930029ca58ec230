//! String and embedding similarity used by the duplication test and Event F1.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::Event;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

/// Jaro-Winkler similarity (prefix scale 0.1, prefix capped at 4 characters).
/// Two empty strings score 1.0.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    strsim::jaro_winkler(a, b)
}

/// Unit-cost edit distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    strsim::levenshtein(a, b)
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Maps text to a unit-norm vector of fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, SimilarityError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Deterministic offline embedder: hashed character trigrams of the
/// lowercased, whitespace-normalized text, L2-normalized.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dim: usize,
}

impl TrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        TrigramEmbedder { dim }
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder::new(512)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for TrigramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        let normalized: String = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let chars: Vec<char> = format!("  {normalized} ").chars().collect();
        let mut v = vec![0.0; self.dim];
        let mut buf = [0u8; 12];
        for w in chars.windows(3) {
            let mut len = 0;
            for c in w {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = fnv1a(&buf[..len]);
            let slot = (h % self.dim as u64) as usize;
            // High bit picks the sign so collisions partly cancel.
            v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Only possible when every trigram cancelled out.
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Remote embedder: `POST {texts: [...]}` returning `{vectors: [[...]]}`.
pub struct HttpEmbedder {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>) -> Result<Self, SimilarityError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| SimilarityError::Provider(e.to_string()))?;
        Ok(HttpEmbedder { url: url.into(), client })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        let mut out = self.embed_batch(&[text])?;
        out.pop().ok_or_else(|| SimilarityError::Provider("empty response".into()))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, SimilarityError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| SimilarityError::Provider(e.to_string()))?;
        let body: EmbedResponse = resp.json().map_err(|e| SimilarityError::Provider(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(SimilarityError::Provider(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|mut v| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(SimilarityError::ZeroVector);
                }
                v.iter_mut().for_each(|x| *x /= norm);
                Ok(v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuplicateThresholds {
    /// Jaro-Winkler similarity at or above which two names/descriptions match.
    pub jaro_winkler: f64,
    /// Description embedding cosine at or above which two events match.
    pub cosine: f64,
    /// Name edit distance strictly below which two names match.
    pub name_edit_distance: usize,
}

impl Default for DuplicateThresholds {
    fn default() -> Self {
        DuplicateThresholds {
            jaro_winkler: 0.9,
            cosine: 0.85,
            name_edit_distance: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityVerdict {
    pub description_jaro_winkler: f64,
    pub name_jaro_winkler: Option<f64>,
    pub cosine: f64,
    pub name_edit_distance: Option<usize>,
    pub is_duplicate: bool,
}

impl SimilarityVerdict {
    /// Which clause fired, for trace output.
    pub fn reason(&self, t: &DuplicateThresholds) -> Option<&'static str> {
        if self.description_jaro_winkler >= t.jaro_winkler {
            Some("description jaro-winkler")
        } else if self.cosine >= t.cosine {
            Some("description embedding cosine")
        } else if self.name_jaro_winkler.is_some_and(|s| s >= t.jaro_winkler) {
            Some("name jaro-winkler")
        } else if self.name_edit_distance.is_some_and(|d| d < t.name_edit_distance) {
            Some("name edit distance")
        } else {
            None
        }
    }
}

/// Text of an event as seen by the duplication test. Candidates are checked
/// before they are named, so the name is optional.
#[derive(Debug, Clone, Copy)]
pub struct EventText<'a> {
    pub name: Option<&'a str>,
    pub description: &'a str,
}

impl<'a> From<&'a Event> for EventText<'a> {
    fn from(e: &'a Event) -> Self {
        EventText {
            name: Some(&e.name),
            description: &e.description,
        }
    }
}

/// Compares two events; embeddings are supplied so callers can cache them.
/// Name clauses apply only when both names are known.
pub fn compare_texts(
    a: EventText<'_>,
    a_vec: &[f64],
    b: EventText<'_>,
    b_vec: &[f64],
    t: &DuplicateThresholds,
) -> Result<SimilarityVerdict, SimilarityError> {
    let da = a.description.to_lowercase();
    let db = b.description.to_lowercase();
    let description_jaro_winkler = jaro_winkler(&da, &db);
    let cos = cosine(a_vec, b_vec)?;
    let (name_jaro_winkler, name_edit_distance) = match (a.name, b.name) {
        (Some(na), Some(nb)) => {
            let (na, nb) = (na.to_lowercase(), nb.to_lowercase());
            (Some(jaro_winkler(&na, &nb)), Some(levenshtein(&na, &nb)))
        }
        _ => (None, None),
    };
    let mut verdict = SimilarityVerdict {
        description_jaro_winkler,
        name_jaro_winkler,
        cosine: cos,
        name_edit_distance,
        is_duplicate: false,
    };
    verdict.is_duplicate = verdict.reason(t).is_some();
    Ok(verdict)
}

/// Duplication test between a candidate and an existing event.
pub fn is_duplicate(
    candidate: &Event,
    existing: &Event,
    provider: &dyn EmbeddingProvider,
    t: &DuplicateThresholds,
) -> Result<SimilarityVerdict, SimilarityError> {
    let u = provider.embed(&candidate.description)?;
    let v = provider.embed(&existing.description)?;
    compare_texts(candidate.into(), &u, existing.into(), &v, t)
}
