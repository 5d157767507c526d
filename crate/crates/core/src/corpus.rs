//! The intent corpus: tags, patterns, responses and follow-ups.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEMO_CORPUS: &str = include_str!("../data/demo_corpus.json");

fn default_goodbye_tag() -> String {
    "goodbye".to_string()
}

/// One intent of the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDef {
    pub tag: String,
    pub patterns: Vec<String>,
    pub responses: Vec<String>,
    #[serde(default)]
    pub followups: Vec<String>,
}

/// The full knowledge base. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub fallback_response: String,
    #[serde(default = "default_goodbye_tag")]
    pub goodbye_tag: String,
    pub intents: Vec<IntentDef>,
}

/// A broken corpus invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "code")]
pub enum Violation {
    EmptyTag { index: usize },
    DuplicateTag { tag: String },
    EmptyPatterns { tag: String },
    EmptyResponses { tag: String },
    BlankPattern { tag: String },
    BlankResponse { tag: String },
    /// The same pattern string is listed under two different tags.
    AmbiguousPattern { pattern: String, first: String, second: String },
    MissingGoodbye { tag: String },
    TooFewIntents { count: usize },
    EmptyFallback,
}

impl Violation {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyTag { .. } => "EmptyTag",
            Violation::DuplicateTag { .. } => "DuplicateTag",
            Violation::EmptyPatterns { .. } => "EmptyPatterns",
            Violation::EmptyResponses { .. } => "EmptyResponses",
            Violation::BlankPattern { .. } => "BlankPattern",
            Violation::BlankResponse { .. } => "BlankResponse",
            Violation::AmbiguousPattern { .. } => "AmbiguousPattern",
            Violation::MissingGoodbye { .. } => "MissingGoodbye",
            Violation::TooFewIntents { .. } => "TooFewIntents",
            Violation::EmptyFallback => "EmptyFallback",
        }
    }

    /// Where in the corpus the problem sits (a tag, a pattern, or the root).
    pub fn location(&self) -> String {
        match self {
            Violation::EmptyTag { index } => format!("intents[{index}]"),
            Violation::DuplicateTag { tag }
            | Violation::EmptyPatterns { tag }
            | Violation::EmptyResponses { tag }
            | Violation::BlankPattern { tag }
            | Violation::BlankResponse { tag }
            | Violation::MissingGoodbye { tag } => tag.clone(),
            Violation::AmbiguousPattern { pattern, .. } => pattern.clone(),
            Violation::TooFewIntents { .. } | Violation::EmptyFallback => "corpus".to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTag { index } => write!(f, "intent #{index} has an empty tag"),
            Violation::DuplicateTag { tag } => write!(f, "duplicate tag {tag:?}"),
            Violation::EmptyPatterns { tag } => write!(f, "intent {tag:?} has no patterns"),
            Violation::EmptyResponses { tag } => write!(f, "intent {tag:?} has no responses"),
            Violation::BlankPattern { tag } => write!(f, "intent {tag:?} has an empty pattern"),
            Violation::BlankResponse { tag } => write!(f, "intent {tag:?} has an empty response"),
            Violation::AmbiguousPattern { pattern, first, second } => {
                write!(f, "pattern {pattern:?} appears under both {first:?} and {second:?}")
            }
            Violation::MissingGoodbye { tag } => write!(f, "goodbye tag {tag:?} names no intent"),
            Violation::TooFewIntents { count } => {
                write!(f, "corpus needs at least 2 intents, found {count}")
            }
            Violation::EmptyFallback => write!(f, "fallback_response is empty"),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid corpus: {}", join_violations(.0))]
    Validation(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Check every corpus invariant. Violations are data, not errors.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    if corpus.intents.len() < 2 {
        out.push(Violation::TooFewIntents { count: corpus.intents.len() });
    }
    if corpus.fallback_response.trim().is_empty() {
        out.push(Violation::EmptyFallback);
    }

    let mut seen_tags: HashMap<&str, usize> = HashMap::new();
    let mut pattern_owner: HashMap<&str, &str> = HashMap::new();
    for (index, intent) in corpus.intents.iter().enumerate() {
        let tag = intent.tag.as_str();
        if tag.is_empty() {
            out.push(Violation::EmptyTag { index });
        } else if seen_tags.insert(tag, index).is_some() {
            out.push(Violation::DuplicateTag { tag: tag.to_string() });
        }
        if intent.patterns.is_empty() {
            out.push(Violation::EmptyPatterns { tag: tag.to_string() });
        }
        if intent.responses.is_empty() {
            out.push(Violation::EmptyResponses { tag: tag.to_string() });
        }
        if intent.patterns.iter().any(|p| p.trim().is_empty()) {
            out.push(Violation::BlankPattern { tag: tag.to_string() });
        }
        if intent.responses.iter().any(|r| r.trim().is_empty()) {
            out.push(Violation::BlankResponse { tag: tag.to_string() });
        }
        for pattern in &intent.patterns {
            match pattern_owner.get(pattern.as_str()) {
                Some(&owner) if owner != tag => out.push(Violation::AmbiguousPattern {
                    pattern: pattern.clone(),
                    first: owner.to_string(),
                    second: tag.to_string(),
                }),
                Some(_) => {}
                None => {
                    pattern_owner.insert(pattern, tag);
                }
            }
        }
    }
    if !seen_tags.contains_key(corpus.goodbye_tag.as_str()) {
        out.push(Violation::MissingGoodbye { tag: corpus.goodbye_tag.clone() });
    }
    out
}

impl Corpus {
    /// Parse and validate a corpus from JSON text.
    pub fn from_json(text: &str) -> Result<Corpus, CorpusError> {
        let corpus: Corpus = serde_json::from_str(text)?;
        let violations = validate_corpus(&corpus);
        if violations.is_empty() {
            Ok(corpus)
        } else {
            Err(CorpusError::Validation(violations))
        }
    }

    /// The bundled jewelry-shop corpus.
    pub fn demo() -> Corpus {
        Corpus::from_json(DEMO_CORPUS).expect("bundled demo corpus is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serializes")
    }

    pub fn intent(&self, tag: &str) -> Option<&IntentDef> {
        self.intents.iter().find(|i| i.tag == tag)
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.intents.iter().map(|i| i.tag.as_str())
    }

    /// Position of `tag` in corpus order.
    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        self.intents.iter().position(|i| i.tag == tag)
    }

    pub fn pattern_count(&self) -> usize {
        self.intents.iter().map(|i| i.patterns.len()).sum()
    }

    pub fn response_count(&self) -> usize {
        self.intents.iter().map(|i| i.responses.len()).sum()
    }

    /// Every (pattern, tag) pair in corpus order.
    pub fn labeled_patterns(&self) -> impl Iterator<Item = (&str, &str)> {
        self.intents
            .iter()
            .flat_map(|i| i.patterns.iter().map(move |p| (p.as_str(), i.tag.as_str())))
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Corpus::from_json(&text)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, corpus.to_json() + "\n").map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Corpus {
        Corpus::from_json(
            r#"{"fallback_response": "Sorry?",
                "intents": [
                  {"tag": "timing", "patterns": ["hours?"], "responses": ["8 to 11"]},
                  {"tag": "goodbye", "patterns": ["bye"], "responses": ["Bye!"]}
                ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_corpus_defaults() {
        let c = minimal();
        assert_eq!(c.intents.len(), 2);
        assert_eq!(c.goodbye_tag, "goodbye");
        assert!(c.intent(&c.goodbye_tag).is_some());
        assert!(c.intents[0].followups.is_empty());
    }

    #[test]
    fn cross_intent_duplicate_pattern_names_the_pattern() {
        let err = Corpus::from_json(
            r#"{"fallback_response": "?", "intents": [
                {"tag": "greeting", "patterns": ["hello"], "responses": ["hi"]},
                {"tag": "timing", "patterns": ["hello", "hours"], "responses": ["8"]},
                {"tag": "goodbye", "patterns": ["bye"], "responses": ["bye"]}]}"#,
        )
        .unwrap_err();
        match &err {
            CorpusError::Validation(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].code(), "AmbiguousPattern");
                assert_eq!(v[0].location(), "hello");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("\"hello\""));
    }

    #[test]
    fn missing_goodbye() {
        let mut c = minimal();
        c.goodbye_tag = "farewell".into();
        assert_eq!(validate_corpus(&c), [Violation::MissingGoodbye { tag: "farewell".into() }]);
    }

    #[test]
    fn empty_responses() {
        let mut c = minimal();
        c.intents[0].responses.clear();
        assert_eq!(validate_corpus(&c), [Violation::EmptyResponses { tag: "timing".into() }]);
    }

    #[test]
    fn duplicate_tag_and_too_few() {
        let mut c = minimal();
        c.intents[1].tag = "timing".into();
        c.goodbye_tag = "timing".into();
        let codes: Vec<_> = validate_corpus(&c).iter().map(Violation::code).collect();
        assert_eq!(codes, ["DuplicateTag"]);

        c.intents.truncate(1);
        let codes: Vec<_> = validate_corpus(&c).iter().map(Violation::code).collect();
        assert_eq!(codes, ["TooFewIntents"]);
    }

    #[test]
    fn same_pattern_twice_in_one_intent_is_allowed() {
        let mut c = minimal();
        c.intents[0].patterns.push("hours?".into());
        assert!(validate_corpus(&c).is_empty());
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(Corpus::from_json("{\"intents\": ["), Err(CorpusError::Parse(_))));
        // fallback_response is required
        assert!(matches!(
            Corpus::from_json(r#"{"intents": []}"#),
            Err(CorpusError::Parse(_))
        ));
    }

    #[test]
    fn demo_corpus_is_valid() {
        let c = Corpus::demo();
        assert!(validate_corpus(&c).is_empty());
        assert!(c.intents.len() >= 12);
        let timing = c.intent("Timing").unwrap();
        assert!(timing.patterns.iter().any(|p| p == "What are your shop timings?"));
        assert!(timing.responses.iter().any(|r| r == "Our shop opens at 8 am and closes at 11 pm."));
        assert_eq!(timing.followups, ["We are open for the longest hours in the market!"]);
    }

    #[test]
    fn violation_serializes_with_code() {
        let v = Violation::EmptyResponses { tag: "timing".into() };
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"code":"EmptyResponses","tag":"timing"}"#
        );
    }
}
