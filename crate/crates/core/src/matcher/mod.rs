//! Cosine-similarity retrieval over embedded corpus patterns, and the
//! backend-agnostic [`Prediction`].

mod classify;

pub use classify::{
    make_provider, Backend, BackendSetup, BoundClassifier, ClassifyError, CosineBackend, EmbeddingSource, Engine, IntentClassifier,
    NnBackend, SharedClassifier, Thresholds, DEFAULT_COSINE_THRESHOLD, DEFAULT_NN_THRESHOLD,
};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::vectorizer::{EmbedError, EmbeddingProvider, Vector};

/// Outcome of classifying one utterance.
///
/// `tag` is `None` for the fallback outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tag: Option<String>,
    /// Cosine similarity for the retrieval backend, softmax probability for
    /// the network backends.
    pub confidence: f64,
    pub matched_pattern: Option<String>,
}

impl Prediction {
    pub fn intent(tag: impl Into<String>, confidence: f64, matched_pattern: Option<String>) -> Self {
        Prediction { tag: Some(tag.into()), confidence, matched_pattern }
    }

    pub fn fallback(confidence: f64) -> Self {
        Prediction { tag: None, confidence, matched_pattern: None }
    }

    pub fn is_fallback(&self) -> bool {
        self.tag.is_none()
    }

    pub fn tag(&self) -> Option<&str> {
        self.tag.as_deref()
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("pattern index is empty")]
    EmptyIndex,
    #[error("embedding pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: EmbedError,
    },
    #[error("embedding query: {0}")]
    Query(#[source] EmbedError),
    #[error("index file: {0}")]
    Persistence(String),
}

/// `dot(a, b) / (|a| |b|)`, or 0 when either vector is zero.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64, MatchError> {
    if a.dim() != b.dim() {
        return Err(MatchError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(cosine_unchecked(a.values(), b.values()))
}

fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    dot / (aa.sqrt() * bb.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub pattern: String,
    pub tag: String,
    pub vector: Vector,
}

/// Every embeddable corpus pattern, in corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternIndex {
    pub provider_fingerprint: String,
    pub dim: usize,
    pub entries: Vec<IndexEntry>,
    /// Patterns dropped because they embedded to the zero vector.
    pub excluded: Vec<String>,
}

const INDEX_FORMAT: &str = "intentbot-index";
const INDEX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    index: PatternIndex,
}

impl PatternIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = IndexFile { format: INDEX_FORMAT.into(), version: INDEX_VERSION, index: self.clone() };
        serde_json::to_string(&file).expect("index serializes")
    }

    pub fn from_json(text: &str) -> Result<PatternIndex, MatchError> {
        let file: IndexFile =
            serde_json::from_str(text).map_err(|e| MatchError::Persistence(e.to_string()))?;
        if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
            return Err(MatchError::Persistence(format!(
                "unsupported index format {} v{}",
                file.format, file.version
            )));
        }
        let index = file.index;
        if let Some(e) = index.entries.iter().find(|e| e.vector.dim() != index.dim) {
            return Err(MatchError::DimensionMismatch { left: index.dim, right: e.vector.dim() });
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MatchError> {
        fs::write(path, self.to_json()).map_err(|e| MatchError::Persistence(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PatternIndex, MatchError> {
        let text = fs::read_to_string(path).map_err(|e| MatchError::Persistence(e.to_string()))?;
        PatternIndex::from_json(&text)
    }

    /// Similarity of `query` to every entry, in index order.
    pub fn similarities(&self, query: &Vector) -> Result<Vec<f64>, MatchError> {
        if query.dim() != self.dim {
            return Err(MatchError::DimensionMismatch { left: self.dim, right: query.dim() });
        }
        Ok(self.entries.iter().map(|e| cosine_unchecked(query.values(), e.vector.values())).collect())
    }

    /// Position of the most similar entry; ties go to the earliest.
    pub fn best_match(&self, query: &Vector) -> Result<(usize, f64), MatchError> {
        if self.entries.is_empty() {
            return Err(MatchError::EmptyIndex);
        }
        let sims = self.similarities(query)?;
        let mut best = 0;
        for (i, s) in sims.iter().enumerate().skip(1) {
            if *s > sims[best] {
                best = i;
            }
        }
        Ok((best, sims[best]))
    }
}

/// Embed every corpus pattern once. Zero-vector patterns are skipped and
/// listed in [`PatternIndex::excluded`].
pub fn build_index(corpus: &Corpus, provider: &dyn EmbeddingProvider) -> Result<PatternIndex, MatchError> {
    let mut entries = Vec::with_capacity(corpus.pattern_count());
    let mut excluded = Vec::new();
    for (pattern, tag) in corpus.labeled_patterns() {
        let vector = provider.embed(pattern).map_err(|source| MatchError::Pattern {
            pattern: pattern.to_string(),
            source,
        })?;
        if vector.is_zero() {
            tracing::warn!(pattern, tag, "pattern embeds to the zero vector; left out of the index");
            excluded.push(pattern.to_string());
            continue;
        }
        entries.push(IndexEntry { pattern: pattern.to_string(), tag: tag.to_string(), vector });
    }
    Ok(PatternIndex { provider_fingerprint: provider.fingerprint(), dim: provider.dim(), entries, excluded })
}

/// Nearest corpus pattern to `query`; below `threshold` the result is a fallback.
pub fn predict_cosine(
    index: &PatternIndex,
    query: &str,
    provider: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<Prediction, MatchError> {
    if index.is_empty() {
        return Err(MatchError::EmptyIndex);
    }
    let q = provider.embed(query).map_err(MatchError::Query)?;
    let (best, similarity) = index.best_match(&q)?;
    if similarity < threshold {
        return Ok(Prediction::fallback(similarity));
    }
    let entry = &index.entries[best];
    Ok(Prediction::intent(entry.tag.clone(), similarity, Some(entry.pattern.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorizer::{HashedTfidf, DEFAULT_EMBEDDING_DIM};

    fn v(values: &[f64]) -> Vector {
        Vector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&v(&[3.0, -1.0, 2.0]), &v(&[3.0, -1.0, 2.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let expected = 32.0 / (14.0f64.sqrt() * 77.0f64.sqrt());
        let got = cosine(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.974632).abs() < 1e-6);
    }

    #[test]
    fn cosine_zero_and_mismatch() {
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(MatchError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    fn demo() -> (Corpus, HashedTfidf) {
        let c = Corpus::demo();
        let h = HashedTfidf::fit(&c, DEFAULT_EMBEDDING_DIM).unwrap();
        (c, h)
    }

    #[test]
    fn index_covers_every_pattern() {
        let (c, h) = demo();
        let idx = build_index(&c, &h).unwrap();
        assert_eq!(idx.len(), c.pattern_count());
        assert!(idx.excluded.is_empty());
        assert_eq!(idx, build_index(&c, &h).unwrap());
    }

    #[test]
    fn punctuation_pattern_is_excluded() {
        let mut c = Corpus::demo();
        c.intents[0].patterns.push("???".into());
        let h = HashedTfidf::fit(&c, 64).unwrap();
        let idx = build_index(&c, &h).unwrap();
        assert_eq!(idx.excluded, ["???"]);
        assert_eq!(idx.len(), c.pattern_count() - 1);
    }

    #[test]
    fn worked_example() {
        let (c, h) = demo();
        let idx = build_index(&c, &h).unwrap();
        let p = predict_cosine(&idx, "What time can I visit your shop?", &h, DEFAULT_COSINE_THRESHOLD).unwrap();
        assert_eq!(p.tag(), Some("Timing"));
        assert_eq!(p.matched_pattern.as_deref(), Some("What are your shop timings?"));
    }

    #[test]
    fn exact_pattern_matches_itself() {
        let (c, h) = demo();
        let idx = build_index(&c, &h).unwrap();
        let p = predict_cosine(&idx, "Do you sell gold rings?", &h, 0.35).unwrap();
        assert_eq!(p.matched_pattern.as_deref(), Some("Do you sell gold rings?"));
        assert!((p.confidence - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ties_go_to_earliest_entry() {
        let e = |p: &str, t: &str| IndexEntry { pattern: p.into(), tag: t.into(), vector: v(&[1.0, 0.0]) };
        let idx = PatternIndex {
            provider_fingerprint: "x".into(),
            dim: 2,
            entries: vec![e("first", "a"), e("second", "b")],
            excluded: vec![],
        };
        assert_eq!(idx.best_match(&v(&[2.0, 0.0])).unwrap().0, 0);
    }

    #[test]
    fn empty_index_is_an_error() {
        let (_, h) = demo();
        let idx = PatternIndex { provider_fingerprint: "x".into(), dim: 384, entries: vec![], excluded: vec![] };
        assert!(matches!(predict_cosine(&idx, "hi", &h, 0.3), Err(MatchError::EmptyIndex)));
    }

    #[test]
    fn index_round_trip() {
        let (c, h) = demo();
        let idx = build_index(&c, &h).unwrap();
        let text = idx.to_json();
        assert_eq!(PatternIndex::from_json(&text).unwrap(), idx);
        assert!(PatternIndex::from_json(&text.replace("intentbot-index", "nope")).is_err());
    }
}
