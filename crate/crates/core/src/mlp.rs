//! Feed-forward intent classifier trained with plain mini-batch SGD.
//!
//! Hidden layers are affine + ReLU, the output layer is affine + softmax, and
//! the loss is mean cross-entropy. Everything is written out by hand over
//! row-major `Vec<f64>` matrices.

use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::matcher::Prediction;
use crate::vectorizer::{EmbedError, EmbeddingProvider, Vector};

/// Probabilities are clamped to this before taking the log.
pub const MIN_PROBABILITY: f64 = 1e-12;

const MODEL_FORMAT: &str = "intentbot-mlp";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid layer dimensions {0:?}: need at least two layers, each of width >= 1")]
    InvalidLayerDims(Vec<usize>),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("class index {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("cannot encode pattern {pattern:?}: {source}")]
    Encoding {
        pattern: String,
        #[source]
        source: EmbedError,
    },
    #[error("model file: {0}")]
    Persistence(String),
}

/// One affine layer: `weights` is `fan_out x fan_in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Layer {
        Layer { fan_in, fan_out, weights: vec![0.0; fan_in * fan_out], biases: vec![0.0; fan_out] }
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.fan_in + col]
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.fan_in).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b
        }));
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }
}

/// Layer stack without any notion of class names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Per-parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Network {
    /// Glorot-style uniform init, `U(-sqrt(6/fan_in), +sqrt(6/fan_in))`,
    /// zero biases, ChaCha8 seeded from `seed`.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Network, MlpError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Network::init_with(layer_dims, &mut rng)
    }

    fn init_with(layer_dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Network, MlpError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(MlpError::InvalidLayerDims(layer_dims.to_vec()));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                let mut layer = Layer::zeros(fan_in, fan_out);
                for w in &mut layer.weights {
                    *w = dist.sample(rng);
                }
                layer
            })
            .collect();
        Ok(Network { layers })
    }

    /// Build from explicit layers. Shapes must chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Network, MlpError> {
        let dims: Vec<usize> = layers.iter().map(|l| l.fan_in).chain(layers.last().map(|l| l.fan_out)).collect();
        let chained = layers.windows(2).all(|w| w[0].fan_out == w[1].fan_in);
        let shaped = layers.iter().all(|l| {
            l.fan_in > 0
                && l.fan_out > 0
                && l.weights.len() == l.fan_in * l.fan_out
                && l.biases.len() == l.fan_out
        });
        if layers.is_empty() || !chained || !shaped {
            return Err(MlpError::InvalidLayerDims(dims));
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in];
        dims.extend(self.layers.iter().map(|l| l.fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), MlpError> {
        if x.len() != self.input_dim() {
            return Err(MlpError::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        Ok(())
    }

    /// Output-layer pre-softmax values.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&current, &mut next);
            if i < last {
                relu(&mut next);
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Mean cross-entropy over `batch` of `(input, class)` pairs.
    pub fn loss(&self, batch: &[(&[f64], usize)]) -> Result<f64, MlpError> {
        if batch.is_empty() {
            return Err(MlpError::EmptyBatch);
        }
        let mut total = 0.0;
        for &(x, class) in batch {
            let p = self.forward(x)?;
            let py = *p.get(class).ok_or(MlpError::ClassOutOfRange {
                class,
                classes: p.len(),
            })?;
            total -= py.max(MIN_PROBABILITY).ln();
        }
        Ok(total / batch.len() as f64)
    }

    /// Exact gradients of the mean cross-entropy, plus the loss itself.
    ///
    /// Softmax and cross-entropy are fused: the output delta is `p - y`.
    /// ReLU's derivative at exactly 0 is taken as 0.
    pub fn gradients(&self, batch: &[(&[f64], usize)]) -> Result<(Gradients, f64), MlpError> {
        if batch.is_empty() {
            return Err(MlpError::EmptyBatch);
        }
        let classes = self.output_dim();
        let scale = 1.0 / batch.len() as f64;
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.fan_in, l.fan_out)).collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;

        // activations[0] is the input; activations[i + 1] is layer i's output
        // (post-ReLU for hidden layers, logits for the last).
        let mut activations: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len() + 1];
        for &(x, class) in batch {
            self.check_input(x)?;
            if class >= classes {
                return Err(MlpError::ClassOutOfRange { class, classes });
            }
            activations[0].clear();
            activations[0].extend_from_slice(x);
            for (i, layer) in self.layers.iter().enumerate() {
                let (before, after) = activations.split_at_mut(i + 1);
                layer.affine(&before[i], &mut after[0]);
                if i < last {
                    relu(&mut after[0]);
                }
            }
            let probs = softmax(&activations[last + 1]);
            loss -= probs[class].max(MIN_PROBABILITY).ln();

            let mut delta: Vec<f64> = probs;
            delta[class] -= 1.0;
            for d in &mut delta {
                *d *= scale;
            }
            for i in (0..self.layers.len()).rev() {
                let layer = &self.layers[i];
                let input = &activations[i];
                let grad = &mut grads[i];
                for (r, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    grad.biases[r] += d;
                    let row = &mut grad.weights[r * layer.fan_in..(r + 1) * layer.fan_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if i == 0 {
                    break;
                }
                // Back through W^T, gated by the ReLU of the previous layer.
                let mut prev = vec![0.0; layer.fan_in];
                for (r, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[r * layer.fan_in..(r + 1) * layer.fan_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((Gradients { layers: grads }, loss * scale))
    }

    /// `params -= learning_rate * grads`.
    pub fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, grad) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                *w -= learning_rate * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(&grad.biases) {
                *b -= learning_rate * g;
            }
        }
    }
}

/// A trained classifier: network, frozen class order, encoder fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub network: Network,
    pub class_tags: Vec<String>,
    pub encoder_fingerprint: String,
}

/// Convenience wrapper over [`Network::init`].
pub fn init_model(layer_dims: &[usize], seed: u64) -> Result<Network, MlpError> {
    Network::init(layer_dims, seed)
}

/// Class probabilities for `x`.
pub fn forward(model: &MlpModel, x: &Vector) -> Result<Vector, MlpError> {
    let p = model.network.forward(x.values())?;
    Ok(Vector::new(p).expect("softmax output is finite"))
}

/// Gradients of the mean cross-entropy over `batch`.
pub fn backprop_gradients(network: &Network, batch: &[(&[f64], usize)]) -> Result<Gradients, MlpError> {
    network.gradients(batch).map(|(g, _)| g)
}

/// Classify `x`; below `threshold` the prediction is a fallback.
pub fn predict_nn(model: &MlpModel, x: &Vector, threshold: f64) -> Result<Prediction, MlpError> {
    let probs = model.network.forward(x.values())?;
    let best = argmax(&probs);
    let confidence = probs[best];
    if confidence < threshold {
        Ok(Prediction::fallback(confidence))
    } else {
        Ok(Prediction::intent(model.class_tags[best].clone(), confidence, None))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.01, epochs: 200, batch_size: 8, seed: 0, hidden_dims: vec![128, 64] }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(MlpError::InvalidConfig(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(MlpError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(MlpError::InvalidConfig("batch size must be >= 1".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(MlpError::InvalidConfig("hidden layer widths must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy of each epoch, measured on the batches as they were
    /// visited (before each update).
    pub epoch_losses: Vec<f64>,
    /// Fraction of training patterns classified correctly after training.
    pub train_accuracy: f64,
}

/// Train on explicit `(input, class)` samples.
///
/// Each epoch reshuffles with the seeded generator and walks mini-batches of
/// `config.batch_size` (the last batch may be short).
pub fn train_samples(
    samples: &[(Vec<f64>, usize)],
    classes: usize,
    config: &TrainConfig,
) -> Result<(Network, TrainReport), MlpError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(MlpError::EmptyTrainingSet);
    }
    let input_dim = samples[0].0.len();
    let mut dims = vec![input_dim];
    dims.extend(&config.hidden_dims);
    dims.push(classes);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::init_with(&dims, &mut rng)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch_size = config.batch_size.min(samples.len());
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&[f64], usize)> =
                chunk.iter().map(|&i| (samples[i].0.as_slice(), samples[i].1)).collect();
            let (grads, loss) = network.gradients(&batch)?;
            epoch_loss += loss * batch.len() as f64;
            network.apply(&grads, config.learning_rate);
        }
        let mean = epoch_loss / samples.len() as f64;
        if !mean.is_finite() || !network.is_finite() {
            return Err(MlpError::NonFiniteLoss { epoch });
        }
        epoch_losses.push(mean);
    }

    let correct = samples
        .iter()
        .filter(|(x, class)| network.forward(x).map(|p| argmax(&p) == *class).unwrap_or(false))
        .count();
    let train_accuracy = correct as f64 / samples.len() as f64;
    Ok((network, TrainReport { epoch_losses, train_accuracy }))
}

/// Train on every corpus pattern encoded by `encoder`, one class per intent
/// in corpus order.
pub fn train(
    corpus: &Corpus,
    encoder: &dyn EmbeddingProvider,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport), MlpError> {
    let mut samples = Vec::with_capacity(corpus.pattern_count());
    for (class, intent) in corpus.intents.iter().enumerate() {
        for pattern in &intent.patterns {
            let v = encoder.embed(pattern).map_err(|source| MlpError::Encoding {
                pattern: pattern.clone(),
                source,
            })?;
            samples.push((v.into_inner(), class));
        }
    }
    let (network, report) = train_samples(&samples, corpus.intents.len(), config)?;
    let model = MlpModel {
        network,
        class_tags: corpus.intents.iter().map(|i| i.tag.clone()).collect(),
        encoder_fingerprint: encoder.fingerprint(),
    };
    Ok((model, report))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    layer_dims: Vec<usize>,
    class_tags: Vec<String>,
    encoder_fingerprint: String,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl MlpModel {
    /// JSON container; floats round-trip bit-exactly.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layer_dims: self.network.layer_dims(),
            class_tags: self.class_tags.clone(),
            encoder_fingerprint: self.encoder_fingerprint.clone(),
            layers: self
                .network
                .layers
                .iter()
                .map(|l| LayerFile { weights: l.weights.clone(), biases: l.biases.clone() })
                .collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<MlpModel, MlpError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| MlpError::Persistence(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(MlpError::Persistence(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if file.layer_dims.len() != file.layers.len() + 1 {
            return Err(MlpError::Persistence("layer count does not match layer_dims".into()));
        }
        let layers = file
            .layers
            .into_iter()
            .zip(file.layer_dims.windows(2))
            .map(|(l, w)| Layer { fan_in: w[0], fan_out: w[1], weights: l.weights, biases: l.biases })
            .collect();
        let network = Network::from_layers(layers)?;
        if !network.is_finite() {
            return Err(MlpError::Persistence("non-finite parameter".into()));
        }
        if file.class_tags.len() != network.output_dim() {
            return Err(MlpError::Persistence("class_tags length does not match output layer".into()));
        }
        Ok(MlpModel { network, class_tags: file.class_tags, encoder_fingerprint: file.encoder_fingerprint })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlpError> {
        fs::write(path, self.to_json()).map_err(|e| MlpError::Persistence(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MlpModel, MlpError> {
        let text = fs::read_to_string(path).map_err(|e| MlpError::Persistence(e.to_string()))?;
        MlpModel::from_json(&text)
    }
}
