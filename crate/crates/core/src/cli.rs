//! `intentbot` command line: `train`, `chat`, `eval`, `serve`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, IsTerminal, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::corpus::{load_corpus, Corpus};
use crate::dialog::{DialogConfig, DialogSession};
use crate::evaluation::{self, compare_backends, demo_test_set, load_test_set, EvalConfig, LabeledUtterance};
use crate::matcher::{make_provider, Backend, BackendSetup, EmbeddingSource, Engine, PatternIndex, Thresholds};
use crate::mlp::{MlpModel, TrainConfig};
use crate::service::{self, ServiceConfig};
use crate::vectorizer::DEFAULT_EMBEDDING_DIM;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "intentbot", version, about = "Retrieval chatbot with three intent classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network backend (or build the cosine index) and write the artifact.
    Train(TrainArgs),
    /// Chat on stdin/stdout.
    Chat(ChatArgs),
    /// Evaluate on a labeled test set.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    OheNn,
    EmbNn,
    EmbCosine,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::OheNn => Backend::OheNn,
            BackendArg::EmbNn => Backend::EmbNn,
            BackendArg::EmbCosine => Backend::EmbCosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalBackendArg {
    OheNn,
    EmbNn,
    EmbCosine,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Intent corpus JSON. Defaults to the bundled demo corpus.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Confidence threshold; defaults to 0.35 for cosine and 0.5 for the networks.
    #[arg(long, value_parser = unit_interval)]
    pub threshold: Option<f64>,
    /// Precomputed embeddings (TSV: text, tab, space-separated floats).
    #[arg(long, value_name = "PATH", conflicts_with = "embeddings_url")]
    pub embeddings: Option<PathBuf>,
    /// Remote embedding service endpoint.
    #[arg(long, value_name = "URL")]
    pub embeddings_url: Option<String>,
    /// Width of the hashed or remote embeddings.
    #[arg(long, default_value_t = DEFAULT_EMBEDDING_DIM)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128,64")]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "ohe-nn")]
    pub backend: BackendArg,
    #[arg(long, value_name = "PATH")]
    pub model_out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "emb-cosine")]
    pub backend: BackendArg,
    #[arg(long, default_value_t = crate::dialog::DEFAULT_FOLLOWUP_PROBABILITY, value_parser = unit_interval)]
    pub followup_prob: f64,
    /// Artifact written by `train`; skips training.
    #[arg(long, value_name = "PATH")]
    pub model_in: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub backend: EvalBackendArg,
    /// JSON list of {"text", "tag"}. Defaults to the bundled paraphrase set.
    #[arg(long, value_name = "PATH")]
    pub test_set: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "emb-cosine")]
    pub backend: BackendArg,
    #[arg(long, default_value_t = crate::dialog::DEFAULT_FOLLOWUP_PROBABILITY, value_parser = unit_interval)]
    pub followup_prob: f64,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Built web UI to serve at `/`.
    #[arg(long, value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origin (any if unset).
    #[arg(long)]
    pub cors_origin: Option<String>,
    /// Idle session expiry in seconds.
    #[arg(long, default_value_t = 1800)]
    pub session_ttl: u64,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Failure {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

impl CommonArgs {
    fn check(&self) -> CliResult {
        if let Some(path) = &self.corpus {
            if !path.is_file() {
                return Err(Failure::Usage(format!("corpus file {} does not exist", path.display())));
            }
        }
        if let Some(path) = &self.embeddings {
            if !path.is_file() {
                return Err(Failure::Usage(format!("embeddings file {} does not exist", path.display())));
            }
        }
        if self.embedding_dim < crate::vectorizer::MIN_HASHED_DIM {
            return Err(Failure::Usage(format!(
                "--embedding-dim must be at least {}",
                crate::vectorizer::MIN_HASHED_DIM
            )));
        }
        self.train_config().validate().map_err(|e| Failure::Usage(e.to_string()))
    }

    fn corpus(&self) -> Result<Corpus, Failure> {
        match &self.corpus {
            Some(path) => load_corpus(path).map_err(Failure::runtime),
            None => Ok(Corpus::demo()),
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            hidden_dims: self.hidden.clone(),
        }
    }

    fn embedding(&self) -> EmbeddingSource {
        if let Some(path) = &self.embeddings {
            EmbeddingSource::File { path: path.clone() }
        } else if let Some(url) = &self.embeddings_url {
            EmbeddingSource::Remote { url: url.clone(), dim: self.embedding_dim, timeout: Duration::from_secs(30) }
        } else {
            EmbeddingSource::Hashed { dim: self.embedding_dim }
        }
    }

    fn thresholds(&self, backend: Option<Backend>) -> Thresholds {
        let mut t = Thresholds::default();
        if let Some(x) = self.threshold {
            match backend {
                Some(Backend::EmbCosine) => t.cosine = x,
                Some(_) => t.nn = x,
                None => {
                    t.cosine = x;
                    t.nn = x;
                }
            }
        }
        t
    }

    fn setup(&self, backend: Backend) -> BackendSetup {
        BackendSetup { train: self.train_config(), embedding: self.embedding(), thresholds: self.thresholds(Some(backend)) }
    }
}

/// Parse `args` (including the program name) and run. Never exits the process.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(stderr, "{text}") } else { write!(stdout, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(&a, stdout),
        Command::Chat(a) => chat(&a, stdin, stdout, stderr),
        Command::Eval(a) => eval(&a, stdout),
        Command::Serve(a) => serve(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    backend: &'a str,
    artifact: String,
    final_loss: Option<f64>,
    train_accuracy: Option<f64>,
    excluded_patterns: Vec<String>,
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> CliResult {
    a.common.check()?;
    let backend = Backend::from(a.backend);
    let corpus = a.common.corpus()?;
    let (engine, report) = Engine::for_backend(corpus, backend, &a.common.setup(backend)).map_err(Failure::runtime)?;
    let artifact = match backend {
        Backend::EmbCosine => engine.cosine_backend().expect("indexed").index.to_json(),
        b => engine.nn_backend(b).expect("trained").model.to_json(),
    };
    fs::write(&a.model_out, &artifact).map_err(|e| Failure::Runtime(format!("{}: {e}", a.model_out.display())))?;
    let summary = TrainSummary {
        backend: backend.name(),
        artifact: a.model_out.display().to_string(),
        final_loss: report.as_ref().and_then(|r| r.epoch_losses.last().copied()),
        train_accuracy: report.as_ref().map(|r| r.train_accuracy),
        excluded_patterns: engine.cosine_backend().map(|c| c.index.excluded.clone()).unwrap_or_default(),
    };
    match (&summary.final_loss, &summary.train_accuracy) {
        (Some(loss), Some(acc)) => {
            let epochs = report.as_ref().map_or(0, |r| r.epoch_losses.len());
            writeln!(out, "trained {} for {epochs} epochs: final loss {loss:.6}, training accuracy {acc:.4}", backend.name())
        }
        _ => writeln!(
            out,
            "indexed {} patterns for {} ({} excluded)",
            engine.cosine_backend().map_or(0, |c| c.index.len()),
            backend.name(),
            summary.excluded_patterns.len()
        ),
    }
    .map_err(Failure::runtime)?;
    writeln!(out, "wrote {}", summary.artifact).map_err(Failure::runtime)
}

/// Install the artifact at `path` into a fresh engine for `backend`.
fn load_engine(corpus: Corpus, backend: Backend, common: &CommonArgs, path: &Path) -> Result<Engine, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut engine = Engine::new(corpus).with_thresholds(common.thresholds(Some(backend)));
    match backend {
        Backend::EmbCosine => {
            let index = PatternIndex::from_json(&text).map_err(Failure::runtime)?;
            let provider = make_provider(engine.corpus(), &common.embedding()).map_err(Failure::runtime)?;
            engine.install_index(provider, index).map_err(Failure::runtime)?;
        }
        b => {
            let model = MlpModel::from_json(&text).map_err(Failure::runtime)?;
            let encoder = match b {
                Backend::OheNn => engine.ohe_encoder().map_err(Failure::runtime)?,
                _ => make_provider(engine.corpus(), &common.embedding()).map_err(Failure::runtime)?,
            };
            engine.install_nn(b, encoder, model).map_err(Failure::runtime)?;
        }
    }
    Ok(engine)
}

fn chat(a: &ChatArgs, stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    a.common.check()?;
    let backend = Backend::from(a.backend);
    let dialog = DialogConfig::new(a.followup_prob).map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = a.common.corpus()?;
    let engine = match &a.model_in {
        Some(path) => load_engine(corpus, backend, &a.common, path)?,
        None => Engine::for_backend(corpus, backend, &a.common.setup(backend)).map_err(Failure::runtime)?.0,
    };
    let engine = Arc::new(engine);
    let mut session = DialogSession::new(engine.corpus().clone(), "cli", a.common.seed);
    let classifier = engine.classifier(backend);
    let interactive = std::io::stdin().is_terminal();
    let _ = writeln!(err, "intentbot ({}). Say goodbye or press Ctrl-D to leave.", backend.label());

    let mut line = String::new();
    loop {
        if interactive {
            let _ = write!(err, "you> ");
            let _ = err.flush();
        }
        line.clear();
        if stdin.read_line(&mut line).map_err(Failure::runtime)? == 0 {
            return Ok(());
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let turn = session.handle_turn(text, &classifier, &dialog).map_err(Failure::runtime)?;
        writeln!(out, "bot> {}", turn.response).map_err(Failure::runtime)?;
        if let Some(f) = &turn.followup {
            writeln!(out, "bot+ {f}").map_err(Failure::runtime)?;
        }
        out.flush().map_err(Failure::runtime)?;
        if turn.ended {
            return Ok(());
        }
    }
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult {
    a.common.check()?;
    let test: Vec<LabeledUtterance> = match &a.test_set {
        Some(path) => {
            if !path.is_file() {
                return Err(Failure::Usage(format!("test set {} does not exist", path.display())));
            }
            load_test_set(path).map_err(Failure::runtime)?
        }
        None => demo_test_set(),
    };
    let corpus = a.common.corpus()?;
    let only = match a.backend {
        EvalBackendArg::All => None,
        EvalBackendArg::OheNn => Some(Backend::OheNn),
        EvalBackendArg::EmbNn => Some(Backend::EmbNn),
        EvalBackendArg::EmbCosine => Some(Backend::EmbCosine),
    };
    let comparison = match only {
        None => {
            let config = EvalConfig {
                train: a.common.train_config(),
                thresholds: a.common.thresholds(None),
                embedding: a.common.embedding(),
            };
            compare_backends(&corpus, &test, &config).map_err(Failure::runtime)?
        }
        Some(b) => {
            if test.is_empty() {
                return Err(Failure::runtime(evaluation::EvalError::EmptyTestSet));
            }
            evaluation::check_disjoint(&corpus, &test).map_err(Failure::runtime)?;
            let (engine, _) = Engine::for_backend(corpus, b, &a.common.setup(b)).map_err(Failure::runtime)?;
            let result = evaluation::evaluate_backend(&engine, b, &test).map_err(Failure::runtime)?;
            evaluation::Comparison { test_size: test.len(), results: vec![result] }
        }
    };
    let text = if a.json {
        let mut s = serde_json::to_string_pretty(&comparison).map_err(Failure::runtime)?;
        s.push('\n');
        s
    } else {
        let mut s = String::new();
        for r in &comparison.results {
            s.push_str(&evaluation::render_report(r));
            s.push('\n');
        }
        s.push_str(&evaluation::render_comparison(&comparison));
        s
    };
    out.write_all(text.as_bytes()).map_err(Failure::runtime)
}

fn serve(a: &ServeArgs) -> CliResult {
    a.common.check()?;
    let backend = Backend::from(a.backend);
    let dialog = DialogConfig::new(a.followup_prob).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(dir) = &a.static_dir {
        if !dir.is_dir() {
            return Err(Failure::Usage(format!("static directory {} does not exist", dir.display())));
        }
    }
    let config = ServiceConfig {
        addr: SocketAddr::new(a.host, a.port),
        corpus_path: a.common.corpus.clone(),
        backend,
        setup: a.common.setup(backend),
        dialog,
        seed: a.common.seed,
        session_ttl: Duration::from_secs(a.session_ttl),
        static_dir: a.static_dir.clone(),
        cors_origin: a.cors_origin.clone(),
    };
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
    runtime.block_on(service::serve(config)).map_err(Failure::runtime)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str], stdin: &str) -> (i32, String, String) {
        let mut input = stdin.as_bytes();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("intentbot").chain(args.iter().copied()), &mut input, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_str(&[], "").0, EXIT_USAGE);
        assert_eq!(run_str(&["dance"], "").0, EXIT_USAGE);
        assert_eq!(run_str(&["chat", "--followup-prob", "1.5"], "").0, EXIT_USAGE);
        assert_eq!(run_str(&["chat", "--corpus", "/no/such/corpus.json"], "").0, EXIT_USAGE);
        assert_eq!(run_str(&["eval", "--backend", "svm"], "").0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_str(&["--help"], "");
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("train"));
    }

    #[test]
    fn chat_worked_example() {
        let (code, out, _) = run_str(&["chat", "--followup-prob", "0"], "What time can I visit your shop?\nbye\n");
        assert_eq!(code, EXIT_OK);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 2, "{out}");
        assert!(lines.iter().all(|l| l.starts_with("bot> ")));
        let corpus = Corpus::demo();
        let timing = &corpus.intent("Timing").unwrap().responses;
        assert!(timing.iter().any(|r| lines[0] == format!("bot> {r}")));
    }

    #[test]
    fn chat_eof_is_clean() {
        let (code, out, err) = run_str(&["chat"], "");
        assert_eq!(code, EXIT_OK);
        assert!(out.is_empty());
        assert!(err.contains("intentbot"));
    }
}
