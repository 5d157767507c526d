use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{build_index, predict_cosine, MatchError, PatternIndex, Prediction};
use crate::corpus::Corpus;
use crate::mlp::{self, MlpError, MlpModel, TrainConfig, TrainReport};
use crate::vectorizer::{
    build_vocabulary, load_embedding_file, BagOfWordsProvider, EmbedError, EmbeddingProvider,
    HashedTfidf, RemoteProvider, VocabularyError, WithFallback, DEFAULT_EMBEDDING_DIM,
};

pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.35;
pub const DEFAULT_NN_THRESHOLD: f64 = 0.50;

/// The three interchangeable classification backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Bag-of-words input, feed-forward network.
    OheNn,
    /// Dense embedding input, feed-forward network.
    EmbNn,
    /// Dense embedding, nearest pattern by cosine similarity.
    EmbCosine,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::OheNn, Backend::EmbNn, Backend::EmbCosine];

    pub fn name(self) -> &'static str {
        match self {
            Backend::OheNn => "ohe-nn",
            Backend::EmbNn => "emb-nn",
            Backend::EmbCosine => "emb-cosine",
        }
    }

    /// Long human-readable label for report tables.
    pub fn label(self) -> &'static str {
        match self {
            Backend::OheNn => "OHE with NN",
            Backend::EmbNn => "Sentence Embedding with NN",
            Backend::EmbCosine => "Sentence Embedding with Cosine Similarity",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown backend {s:?} (expected ohe-nn, emb-nn or emb-cosine)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub nn: f64,
    pub cosine: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { nn: DEFAULT_NN_THRESHOLD, cosine: DEFAULT_COSINE_THRESHOLD }
    }
}

impl Thresholds {
    pub fn for_backend(&self, backend: Backend) -> f64 {
        match backend {
            Backend::OheNn | Backend::EmbNn => self.nn,
            Backend::EmbCosine => self.cosine,
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("backend {0} has not been trained or indexed")]
    NotReady(Backend),
    #[error("backend {0} does not use a neural network")]
    NotNeural(Backend),
    #[error("artifact was built for encoder {found}, current encoder is {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Vocabulary(#[from] VocabularyError),
}

/// Anything that turns an utterance into a [`Prediction`].
pub trait IntentClassifier: Send + Sync {
    fn classify(&self, query: &str) -> Result<Prediction, ClassifyError>;
}

impl<F> IntentClassifier for F
where
    F: Fn(&str) -> Result<Prediction, ClassifyError> + Send + Sync,
{
    fn classify(&self, query: &str) -> Result<Prediction, ClassifyError> {
        self(query)
    }
}

/// Where dense embeddings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSource {
    /// Built-in signed hashed TF-IDF fitted on the corpus patterns.
    Hashed { dim: usize },
    /// Precomputed TSV vectors; texts missing from the file fall back to a
    /// hashed embedding of the same width.
    File { path: PathBuf },
    /// HTTP embedding service.
    Remote { url: String, dim: usize, timeout: Duration },
}

impl Default for EmbeddingSource {
    fn default() -> Self {
        EmbeddingSource::Hashed { dim: DEFAULT_EMBEDDING_DIM }
    }
}

/// Build the dense provider described by `source`.
pub fn make_provider(corpus: &Corpus, source: &EmbeddingSource) -> Result<Arc<dyn EmbeddingProvider>, EmbedError> {
    Ok(match source {
        EmbeddingSource::Hashed { dim } => Arc::new(HashedTfidf::fit(corpus, *dim)?),
        EmbeddingSource::File { path } => {
            let file = load_embedding_file(path)?;
            let hashed = HashedTfidf::fit(corpus, file.dim())?;
            Arc::new(WithFallback::new(file, hashed)?)
        }
        EmbeddingSource::Remote { url, dim, timeout } => Arc::new(RemoteProvider::new(url.clone(), *dim, *timeout)?),
    })
}

#[derive(Clone)]
pub struct NnBackend {
    pub encoder: Arc<dyn EmbeddingProvider>,
    pub model: MlpModel,
}

#[derive(Clone)]
pub struct CosineBackend {
    pub provider: Arc<dyn EmbeddingProvider>,
    pub index: PatternIndex,
}

/// Holds whichever backends have been trained or indexed for one corpus.
///
/// Immutable once set up; share it behind an `Arc` for concurrent use.
#[derive(Clone)]
pub struct Engine {
    corpus: Arc<Corpus>,
    thresholds: Thresholds,
    ohe_nn: Option<NnBackend>,
    emb_nn: Option<NnBackend>,
    emb_cosine: Option<CosineBackend>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("intents", &self.corpus.intents.len())
            .field("thresholds", &self.thresholds)
            .field("ready", &self.ready_backends())
            .finish()
    }
}

impl Engine {
    pub fn new(corpus: impl Into<Arc<Corpus>>) -> Engine {
        Engine { corpus: corpus.into(), thresholds: Thresholds::default(), ohe_nn: None, emb_nn: None, emb_cosine: None }
    }

    pub fn with_thresholds(mut self, thresholds: Thresholds) -> Engine {
        self.thresholds = thresholds;
        self
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn ready_backends(&self) -> Vec<Backend> {
        Backend::ALL.into_iter().filter(|b| self.is_ready(*b)).collect()
    }

    pub fn is_ready(&self, backend: Backend) -> bool {
        match backend {
            Backend::OheNn => self.ohe_nn.is_some(),
            Backend::EmbNn => self.emb_nn.is_some(),
            Backend::EmbCosine => self.emb_cosine.is_some(),
        }
    }

    /// Bag-of-words encoder over this corpus's vocabulary.
    pub fn ohe_encoder(&self) -> Result<Arc<dyn EmbeddingProvider>, ClassifyError> {
        Ok(Arc::new(BagOfWordsProvider::new(build_vocabulary(&self.corpus)?)))
    }

    pub fn train_ohe_nn(&mut self, config: &TrainConfig) -> Result<TrainReport, ClassifyError> {
        let encoder = self.ohe_encoder()?;
        self.train_nn(Backend::OheNn, encoder, config)
    }

    pub fn train_emb_nn(
        &mut self,
        provider: Arc<dyn EmbeddingProvider>,
        config: &TrainConfig,
    ) -> Result<TrainReport, ClassifyError> {
        self.train_nn(Backend::EmbNn, provider, config)
    }

    fn train_nn(
        &mut self,
        backend: Backend,
        encoder: Arc<dyn EmbeddingProvider>,
        config: &TrainConfig,
    ) -> Result<TrainReport, ClassifyError> {
        let (model, report) = mlp::train(&self.corpus, encoder.as_ref(), config)?;
        self.install_nn(backend, encoder, model)?;
        Ok(report)
    }

    /// Install a previously trained model. The encoder must match the one the
    /// model was trained with, and the class order must match the corpus.
    pub fn install_nn(
        &mut self,
        backend: Backend,
        encoder: Arc<dyn EmbeddingProvider>,
        model: MlpModel,
    ) -> Result<(), ClassifyError> {
        if backend == Backend::EmbCosine {
            return Err(ClassifyError::NotNeural(backend));
        }
        if model.encoder_fingerprint != encoder.fingerprint() {
            return Err(ClassifyError::FingerprintMismatch {
                expected: encoder.fingerprint(),
                found: model.encoder_fingerprint,
            });
        }
        let tags: Vec<&str> = self.corpus.tags().collect();
        if model.class_tags != tags {
            return Err(ClassifyError::FingerprintMismatch {
                expected: tags.join(","),
                found: model.class_tags.join(","),
            });
        }
        if model.network.input_dim() != encoder.dim() {
            return Err(MlpError::DimensionMismatch { expected: model.network.input_dim(), found: encoder.dim() }.into());
        }
        let slot = NnBackend { encoder, model };
        match backend {
            Backend::OheNn => self.ohe_nn = Some(slot),
            _ => self.emb_nn = Some(slot),
        }
        Ok(())
    }

    /// Embed every corpus pattern. Returns the patterns that had to be left out.
    pub fn index_cosine(&mut self, provider: Arc<dyn EmbeddingProvider>) -> Result<Vec<String>, ClassifyError> {
        let index = build_index(&self.corpus, provider.as_ref())?;
        let excluded = index.excluded.clone();
        self.install_index(provider, index)?;
        Ok(excluded)
    }

    pub fn install_index(&mut self, provider: Arc<dyn EmbeddingProvider>, index: PatternIndex) -> Result<(), ClassifyError> {
        if index.provider_fingerprint != provider.fingerprint() {
            return Err(ClassifyError::FingerprintMismatch {
                expected: provider.fingerprint(),
                found: index.provider_fingerprint,
            });
        }
        if index.is_empty() {
            return Err(MatchError::EmptyIndex.into());
        }
        self.emb_cosine = Some(CosineBackend { provider, index });
        Ok(())
    }

    pub fn nn_backend(&self, backend: Backend) -> Option<&NnBackend> {
        match backend {
            Backend::OheNn => self.ohe_nn.as_ref(),
            Backend::EmbNn => self.emb_nn.as_ref(),
            Backend::EmbCosine => None,
        }
    }

    pub fn cosine_backend(&self) -> Option<&CosineBackend> {
        self.emb_cosine.as_ref()
    }

    /// Fingerprint of the artifact behind `backend`, if it is ready.
    pub fn model_fingerprint(&self, backend: Backend) -> Option<String> {
        match backend {
            Backend::EmbCosine => self.emb_cosine.as_ref().map(|c| c.index.provider_fingerprint.clone()),
            b => self.nn_backend(b).map(|n| {
                format!("{}|{}", n.model.encoder_fingerprint, n.model.network.layer_dims().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x"))
            }),
        }
    }

    /// Classify `query` with one backend.
    ///
    /// A query whose encoding is all zeros (empty, or nothing but unknown
    /// words) carries no evidence and always falls back.
    pub fn classify(&self, backend: Backend, query: &str) -> Result<Prediction, ClassifyError> {
        let threshold = self.thresholds.for_backend(backend);
        match backend {
            Backend::EmbCosine => {
                let c = self.emb_cosine.as_ref().ok_or(ClassifyError::NotReady(backend))?;
                Ok(predict_cosine(&c.index, query, c.provider.as_ref(), threshold)?)
            }
            _ => {
                let nn = self.nn_backend(backend).ok_or(ClassifyError::NotReady(backend))?;
                let x = nn.encoder.embed(query)?;
                if x.is_zero() {
                    return Ok(Prediction::fallback(0.0));
                }
                Ok(mlp::predict_nn(&nn.model, &x, threshold)?)
            }
        }
    }

    /// A classifier bound to one backend.
    pub fn classifier(&self, backend: Backend) -> BoundClassifier<'_> {
        BoundClassifier { engine: self, backend }
    }
}

/// Everything needed to bring one backend up from a corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackendSetup {
    pub train: TrainConfig,
    pub embedding: EmbeddingSource,
    pub thresholds: Thresholds,
}

impl Engine {
    /// Train (or index) just `backend` on `corpus`. Network backends also
    /// return their training report.
    pub fn for_backend(
        corpus: impl Into<Arc<Corpus>>,
        backend: Backend,
        setup: &BackendSetup,
    ) -> Result<(Engine, Option<TrainReport>), ClassifyError> {
        let mut engine = Engine::new(corpus).with_thresholds(setup.thresholds);
        let report = match backend {
            Backend::OheNn => Some(engine.train_ohe_nn(&setup.train)?),
            Backend::EmbNn => {
                let provider = make_provider(&engine.corpus, &setup.embedding)?;
                Some(engine.train_emb_nn(provider, &setup.train)?)
            }
            Backend::EmbCosine => {
                let provider = make_provider(&engine.corpus, &setup.embedding)?;
                engine.index_cosine(provider)?;
                None
            }
        };
        Ok((engine, report))
    }
}

/// [`Engine`] plus a fixed backend.
#[derive(Debug, Clone, Copy)]
pub struct BoundClassifier<'a> {
    engine: &'a Engine,
    backend: Backend,
}

impl IntentClassifier for BoundClassifier<'_> {
    fn classify(&self, query: &str) -> Result<Prediction, ClassifyError> {
        self.engine.classify(self.backend, query)
    }
}

/// Owned counterpart of [`BoundClassifier`].
#[derive(Debug, Clone)]
pub struct SharedClassifier {
    pub engine: Arc<Engine>,
    pub backend: Backend,
}

impl IntentClassifier for SharedClassifier {
    fn classify(&self, query: &str) -> Result<Prediction, ClassifyError> {
        self.engine.classify(self.backend, query)
    }
}
