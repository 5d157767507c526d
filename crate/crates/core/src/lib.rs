//! Corpus-based intent-classification chatbot engine.
//!
//! Utterances are classified into corpus intents by one of three
//! interchangeable backends (bag-of-words + MLP, dense embedding + MLP,
//! dense embedding + cosine nearest pattern). A dialog layer serves rotating
//! responses and occasional follow-ups until a goodbye intent ends the
//! session, and an evaluation harness compares backends by macro F1.

pub mod cli;
pub mod corpus;
pub mod dialog;
pub mod evaluation;
pub mod matcher;
pub mod mlp;
pub mod service;
pub mod textproc;
pub mod vectorizer;

pub use corpus::{load_corpus, Corpus, IntentDef};
pub use dialog::{BotTurn, DialogConfig, DialogSession};
pub use matcher::{Backend, Engine, IntentClassifier, Prediction};
