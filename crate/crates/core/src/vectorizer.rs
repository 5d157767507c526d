//! Utterance vectors: binary bag-of-words over a stem vocabulary, and dense
//! embeddings behind the [`EmbeddingProvider`] trait.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::textproc::{preprocess, TokenList};

/// Default width of the built-in dense embeddings.
pub const DEFAULT_EMBEDDING_DIM: usize = 384;

/// Smallest accepted hashed-embedding width.
pub const MIN_HASHED_DIM: usize = 16;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorError {
    #[error("vector must have at least one component")]
    Empty,
    #[error("vector component {index} is not finite")]
    NonFinite { index: usize },
}

/// Fixed-length real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Vector, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite { index });
        }
        Ok(Vector(values))
    }

    pub fn zeros(dim: usize) -> Vector {
        assert!(dim > 0, "vector dimension must be positive");
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Multiply every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = VectorError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Vector::new(values)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

/// Sorted, deduplicated stems of every corpus pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    stems: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("no corpus pattern yields a token; the vocabulary would be empty")]
    EmptyVocabulary,
    #[error("vocabulary stems must be unique and sorted")]
    Unsorted,
}

impl Vocabulary {
    pub fn from_stems<I, S>(stems: I) -> Result<Vocabulary, VocabularyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = stems.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(VocabularyError::EmptyVocabulary);
        }
        let stems: Vec<String> = set.into_iter().collect();
        let index = stems.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Vocabulary { stems, index })
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn position(&self, stem: &str) -> Option<usize> {
        self.index.get(stem).copied()
    }

    /// Hash of the stem list, used to detect model/vocabulary mismatches.
    pub fn fingerprint(&self) -> String {
        format!("bag-of-words:{}:{:016x}", self.len(), fnv1a64(self.stems.join("\n").as_bytes()))
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = VocabularyError;

    fn try_from(stems: Vec<String>) -> Result<Self, Self::Error> {
        if stems.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VocabularyError::Unsorted);
        }
        Vocabulary::from_stems(stems)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.stems
    }
}

pub fn build_vocabulary(corpus: &Corpus) -> Result<Vocabulary, VocabularyError> {
    Vocabulary::from_stems(
        corpus
            .labeled_patterns()
            .flat_map(|(pattern, _)| preprocess(pattern).into_inner()),
    )
}

/// Binary presence vector; out-of-vocabulary tokens are ignored.
pub fn encode_bow(tokens: &TokenList, vocab: &Vocabulary) -> Vector {
    let mut values = vec![0.0; vocab.len()];
    for token in tokens {
        if let Some(i) = vocab.position(token) {
            values[i] = 1.0;
        }
    }
    Vector(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    BagOfWords,
    HashedTfidf,
    FileBacked,
    Remote,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::BagOfWords => "bag-of-words",
            ProviderKind::HashedTfidf => "hashed-tfidf",
            ProviderKind::FileBacked => "file-backed",
            ProviderKind::Remote => "remote",
        })
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no stored embedding for {0:?}")]
    MissingKey(String),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid embedding dimension {0}")]
    InvalidDimension(usize),
    #[error("cannot read embeddings {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("remote embedding service: {0}")]
    Remote(String),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

/// Anything that maps an utterance to a fixed-width vector.
///
/// Implementations other than [`RemoteProvider`] are deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vector, EmbedError>;

    /// Identifies the provider and its configuration.
    fn fingerprint(&self) -> String {
        format!("{}:{}", self.kind(), self.dim())
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn kind(&self) -> ProviderKind {
        (**self).kind()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        (**self).embed(text)
    }
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

/// Bag-of-words encoding exposed as a provider.
#[derive(Debug, Clone)]
pub struct BagOfWordsProvider {
    vocab: Vocabulary,
}

impl BagOfWordsProvider {
    pub fn new(vocab: Vocabulary) -> Self {
        BagOfWordsProvider { vocab }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }
}

impl EmbeddingProvider for BagOfWordsProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::BagOfWords
    }
    fn dim(&self) -> usize {
        self.vocab.len()
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        Ok(encode_bow(&preprocess(text), &self.vocab))
    }
    fn fingerprint(&self) -> String {
        self.vocab.fingerprint()
    }
}

/// Word-unigram and character-trigram features of a preprocessed utterance.
///
/// Trigrams run over the stems joined by single spaces. Prefixes keep a
/// three-letter word and the identical trigram apart.
fn hashed_features(tokens: &TokenList) -> Vec<String> {
    let mut features: Vec<String> = tokens.iter().map(|t| format!("w:{t}")).collect();
    let chars: Vec<char> = tokens.joined().chars().collect();
    features.extend(chars.windows(3).map(|w| {
        let mut f = String::with_capacity(5);
        f.push_str("c:");
        f.extend(w);
        f
    }));
    features
}

/// Signed feature hashing with TF-IDF weights, L2-normalized.
///
/// A deterministic, offline stand-in for a pretrained sentence encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedTfidf {
    dim: usize,
    documents: usize,
    /// Document frequency of every feature seen in the corpus patterns.
    df: BTreeMap<String, usize>,
}

impl HashedTfidf {
    /// Fit the idf table on the corpus patterns.
    pub fn fit(corpus: &Corpus, dim: usize) -> Result<HashedTfidf, EmbedError> {
        let patterns: Vec<&str> = corpus.labeled_patterns().map(|(p, _)| p).collect();
        HashedTfidf::fit_texts(&patterns, dim)
    }

    pub fn fit_texts(texts: &[&str], dim: usize) -> Result<HashedTfidf, EmbedError> {
        if dim < MIN_HASHED_DIM {
            return Err(EmbedError::InvalidDimension(dim));
        }
        let mut df = BTreeMap::new();
        for text in texts {
            let unique: BTreeSet<String> = hashed_features(&preprocess(text)).into_iter().collect();
            for f in unique {
                *df.entry(f).or_insert(0) += 1;
            }
        }
        Ok(HashedTfidf { dim, documents: texts.len(), df })
    }

    pub fn idf(&self, feature: &str) -> f64 {
        let df = self.df.get(feature).copied().unwrap_or(0);
        ((1.0 + self.documents as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    /// Bucket and sign of a feature.
    pub fn slot(&self, feature: &str) -> (usize, f64) {
        let h = fnv1a64(feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }

    pub fn embed_tokens(&self, tokens: &TokenList) -> Vector {
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for f in hashed_features(tokens) {
            *tf.entry(f).or_insert(0) += 1;
        }
        let mut values = vec![0.0; self.dim];
        for (feature, count) in &tf {
            let (bucket, sign) = self.slot(feature);
            values[bucket] += sign * *count as f64 * self.idf(feature);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Vector(values)
    }
}

impl EmbeddingProvider for HashedTfidf {
    fn kind(&self) -> ProviderKind {
        ProviderKind::HashedTfidf
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        Ok(self.embed_tokens(&preprocess(text)))
    }
    fn fingerprint(&self) -> String {
        let table: String = self.df.iter().map(|(f, n)| format!("{f}\t{n}\n")).collect();
        format!(
            "hashed-tfidf:{}:{}:{:016x}",
            self.dim,
            self.documents,
            fnv1a64(table.as_bytes())
        )
    }
}

/// Precomputed vectors looked up by exact raw text.
#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    dim: usize,
    vectors: HashMap<String, Vector>,
    digest: u64,
}

impl FileEmbeddings {
    /// Parse the `<text>\t<v1> <v2> ...` format.
    pub fn parse(text: &str) -> Result<FileEmbeddings, EmbedError> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in text.split('\n').enumerate() {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once('\t').ok_or_else(|| EmbedError::Format {
                line: line_no,
                message: "missing tab separator".into(),
            })?;
            let values = rest
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbedError::Format { line: line_no, message: e.to_string() })?;
            let vector = Vector::new(values).map_err(|e| EmbedError::Format {
                line: line_no,
                message: e.to_string(),
            })?;
            match dim {
                None => dim = Some(vector.dim()),
                Some(d) if d != vector.dim() => {
                    return Err(EmbedError::DimensionMismatch { expected: d, found: vector.dim() })
                }
                Some(_) => {}
            }
            vectors.insert(key.to_string(), vector);
        }
        let dim = dim.ok_or(EmbedError::Format { line: 0, message: "no entries".into() })?;
        Ok(FileEmbeddings { dim, vectors, digest: fnv1a64(text.as_bytes()) })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn load_embedding_file(path: impl AsRef<Path>) -> Result<FileEmbeddings, EmbedError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    FileEmbeddings::parse(&text)
}

impl EmbeddingProvider for FileEmbeddings {
    fn kind(&self) -> ProviderKind {
        ProviderKind::FileBacked
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        self.vectors.get(text).cloned().ok_or_else(|| EmbedError::MissingKey(text.to_string()))
    }
    fn fingerprint(&self) -> String {
        format!("file-backed:{}:{:016x}", self.dim, self.digest)
    }
}

/// Answers from `primary`, switching to `fallback` on [`EmbedError::MissingKey`].
pub struct WithFallback<P, F> {
    primary: P,
    fallback: F,
}

impl<P: EmbeddingProvider, F: EmbeddingProvider> WithFallback<P, F> {
    pub fn new(primary: P, fallback: F) -> Result<Self, EmbedError> {
        if primary.dim() != fallback.dim() {
            return Err(EmbedError::DimensionMismatch {
                expected: primary.dim(),
                found: fallback.dim(),
            });
        }
        Ok(WithFallback { primary, fallback })
    }
}

impl<P: EmbeddingProvider, F: EmbeddingProvider> EmbeddingProvider for WithFallback<P, F> {
    fn kind(&self) -> ProviderKind {
        self.primary.kind()
    }
    fn dim(&self) -> usize {
        self.primary.dim()
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        match self.primary.embed(text) {
            Err(EmbedError::MissingKey(_)) => self.fallback.embed(text),
            other => other,
        }
    }
    fn fingerprint(&self) -> String {
        format!("{}+{}", self.primary.fingerprint(), self.fallback.fingerprint())
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedding service reached over HTTP: `POST {"texts": [...]}` returning
/// `{"vectors": [[...], ...]}`.
///
/// Uses a blocking client; do not call from inside an async task.
pub struct RemoteProvider {
    url: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(url: impl Into<String>, dim: usize, timeout: Duration) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::InvalidDimension(dim));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        Ok(RemoteProvider { url: url.into(), dim, client })
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        let response = self
            .client
            .post(&self.url)
            .json(&RemoteRequest { texts })
            .send()
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(EmbedError::Remote(format!("HTTP {status}")));
        }
        let body: RemoteResponse =
            response.json().map_err(|e| EmbedError::Remote(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbedError::Remote(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|values| {
                if values.len() != self.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.dim,
                        found: values.len(),
                    });
                }
                Ok(Vector::new(values)?)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }
    fn fingerprint(&self) -> String {
        format!("remote:{}:{}", self.dim, self.url)
    }
}
