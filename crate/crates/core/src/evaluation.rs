//! Confusion matrices, precision/recall/F1, and the three-backend comparison.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::matcher::{make_provider, Backend, ClassifyError, EmbeddingSource, Engine, IntentClassifier, Thresholds};
use crate::mlp::TrainConfig;
use crate::textproc::preprocess;
use crate::vectorizer::EmbedError;

const DEMO_TEST_SET: &str = include_str!("../data/demo_test_set.json");

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test item {text:?} has unknown tag {tag:?}")]
    UnknownTrueTag { text: String, tag: String },
    #[error("classifier predicted unknown tag {0:?}")]
    UnknownPredictedTag(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("test item {0:?} duplicates a training pattern after preprocessing")]
    TestOverlap(String),
    #[error("cannot read test set {path}: {message}")]
    TestSetFile { path: String, message: String },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// One labeled evaluation utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledUtterance {
    pub text: String,
    pub tag: String,
}

pub fn parse_test_set(text: &str) -> Result<Vec<LabeledUtterance>, serde_json::Error> {
    serde_json::from_str(text)
}

/// Read a `[{"text": ..., "tag": ...}, ...]` file. Empty sets are rejected.
pub fn load_test_set(path: impl AsRef<Path>) -> Result<Vec<LabeledUtterance>, EvalError> {
    let path = path.as_ref();
    let err = |message: String| EvalError::TestSetFile { path: path.display().to_string(), message };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let items = parse_test_set(&text).map_err(|e| err(e.to_string()))?;
    if items.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    Ok(items)
}

/// Paraphrase test set for the bundled demo corpus.
pub fn demo_test_set() -> Vec<LabeledUtterance> {
    parse_test_set(DEMO_TEST_SET).expect("bundled test set parses")
}

/// Rows are true tags and columns predicted tags, both in corpus order, plus
/// a final column for rejected (fallback) predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tags: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(tags: Vec<String>) -> ConfusionMatrix {
        let k = tags.len();
        ConfusionMatrix { tags, counts: vec![vec![0; k + 1]; k] }
    }

    /// Number of classes (rejected column excluded).
    pub fn classes(&self) -> usize {
        self.tags.len()
    }

    pub fn rejected_column(&self) -> usize {
        self.tags.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn rejected(&self, row: usize) -> u64 {
        self.counts[row][self.rejected_column()]
    }

    /// Record one outcome; `predicted == None` is a rejection.
    pub fn record(&mut self, truth: usize, predicted: Option<usize>) {
        let col = predicted.unwrap_or(self.rejected_column());
        self.counts[truth][col] += 1;
    }

    /// Build from `(true, predicted)` tag pairs.
    pub fn from_pairs<'a>(
        tags: Vec<String>,
        pairs: impl IntoIterator<Item = (&'a str, Option<&'a str>)>,
    ) -> Result<ConfusionMatrix, EvalError> {
        let mut cm = ConfusionMatrix::new(tags);
        for (truth, predicted) in pairs {
            let row = cm.position(truth).ok_or_else(|| EvalError::UnknownTrueTag {
                text: String::new(),
                tag: truth.to_string(),
            })?;
            let col = match predicted {
                None => None,
                Some(p) => Some(cm.position(p).ok_or_else(|| EvalError::UnknownPredictedTag(p.to_string()))?),
            };
            cm.record(row, col);
        }
        Ok(cm)
    }

    fn position(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }
}

/// Classify every test utterance and tally the outcomes.
pub fn confusion(
    test: &[LabeledUtterance],
    corpus: &Corpus,
    classifier: &dyn IntentClassifier,
) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::new(corpus.tags().map(str::to_string).collect());
    for item in test {
        let row = corpus.tag_index(&item.tag).ok_or_else(|| EvalError::UnknownTrueTag {
            text: item.text.clone(),
            tag: item.tag.clone(),
        })?;
        let prediction = classifier.classify(&item.text)?;
        let col = match prediction.tag() {
            None => None,
            Some(tag) => Some(corpus.tag_index(tag).ok_or_else(|| EvalError::UnknownPredictedTag(tag.to_string()))?),
        };
        cm.record(row, col);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tag: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub backend: String,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class and macro-averaged precision, recall and F1.
///
/// Rejections count against recall; the rejected column is not a class.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 || cm.classes() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let k = cm.classes();
    let mut per_class = Vec::with_capacity(k);
    let mut correct = 0;
    for c in 0..k {
        let tp = cm.counts[c][c];
        let predicted_as_c: u64 = (0..k).map(|r| cm.counts[r][c]).sum();
        let support: u64 = cm.counts[c].iter().sum();
        let precision = ratio(tp, predicted_as_c);
        let recall = ratio(tp, support);
        correct += tp;
        per_class.push(ClassMetrics {
            tag: cm.tags[c].clone(),
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(MetricsReport {
        backend: String::new(),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: ratio(correct, total),
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub thresholds: Thresholds,
    pub embedding: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResult {
    pub backend: Backend,
    pub label: String,
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub test_size: usize,
    pub results: Vec<BackendResult>,
}

/// Reject test items that are training patterns in disguise.
pub fn check_disjoint(corpus: &Corpus, test: &[LabeledUtterance]) -> Result<(), EvalError> {
    let training: HashSet<String> = corpus.labeled_patterns().map(|(p, _)| preprocess(p).joined()).collect();
    match test.iter().find(|t| training.contains(&preprocess(&t.text).joined())) {
        Some(t) => Err(EvalError::TestOverlap(t.text.clone())),
        None => Ok(()),
    }
}

/// Evaluate one ready backend of `engine`.
pub fn evaluate_backend(engine: &Engine, backend: Backend, test: &[LabeledUtterance]) -> Result<BackendResult, EvalError> {
    let confusion = confusion(test, engine.corpus(), &engine.classifier(backend))?;
    let mut report = metrics(&confusion)?;
    report.backend = backend.name().to_string();
    Ok(BackendResult { backend, label: backend.label().to_string(), confusion, report })
}

/// Set up every backend on `corpus` with the same seed and evaluate them on
/// the same held-out test set.
pub fn compare_backends(corpus: &Corpus, test: &[LabeledUtterance], config: &EvalConfig) -> Result<Comparison, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    check_disjoint(corpus, test)?;
    let mut engine = Engine::new(corpus.clone()).with_thresholds(config.thresholds);
    engine.train_ohe_nn(&config.train)?;
    let provider = make_provider(corpus, &config.embedding)?;
    engine.train_emb_nn(provider.clone(), &config.train)?;
    engine.index_cosine(provider)?;
    let results = Backend::ALL
        .into_iter()
        .map(|b| evaluate_backend(&engine, b, test))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Comparison { test_size: test.len(), results })
}

/// Backend comparison table.
pub fn render_comparison(c: &Comparison) -> String {
    let mut out = String::new();
    let width = c.results.iter().map(|r| r.label.len()).max().unwrap_or(0).max("Implementation".len());
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>6}  {:>8}  {:>8}", "Implementation", "Precision", "Recall", "F1 Score", "Accuracy");
    let _ = writeln!(out, "{}", "-".repeat(width + 41));
    for r in &c.results {
        let m = &r.report;
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.3}  {:>6.3}  {:>8.3}  {:>8.3}",
            r.label, m.macro_precision, m.macro_recall, m.macro_f1, m.accuracy
        );
    }
    let _ = writeln!(out, "({} test utterances, macro-averaged)", c.test_size);
    out
}

/// Confusion matrix with tag indices as column headers and the per-class metrics.
pub fn render_report(result: &BackendResult) -> String {
    let cm = &result.confusion;
    let mut out = String::new();
    let width = cm.tags.iter().map(|t| t.len()).max().unwrap_or(0).max(4);
    let _ = writeln!(out, "{} ({})", result.label, result.backend);
    let _ = write!(out, "{:>width$} ", "");
    for i in 0..cm.classes() {
        let _ = write!(out, "{i:>3}");
    }
    let _ = writeln!(out, "  rej");
    for (i, row) in cm.counts.iter().enumerate() {
        let _ = write!(out, "{:>width$} ", format!("{} {i}", cm.tags[i]));
        for v in &row[..cm.classes()] {
            let _ = write!(out, "{v:>3}");
        }
        let _ = writeln!(out, "  {:>3}", row[cm.classes()]);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>6}  {:>6}  {:>7}", "tag", "precision", "recall", "f1", "support");
    for m in &result.report.per_class {
        let _ = writeln!(out, "{:<width$}  {:>9.3}  {:>6.3}  {:>6.3}  {:>7}", m.tag, m.precision, m.recall, m.f1, m.support);
    }
    let r = &result.report;
    let _ = writeln!(
        out,
        "macro precision {:.3}  macro recall {:.3}  macro F1 {:.3}  accuracy {:.3}",
        r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy
    );
    out
}
