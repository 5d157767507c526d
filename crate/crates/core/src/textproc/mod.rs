//! Utterance normalization: lowercase, punctuation to spaces, whitespace
//! tokenization, Porter stemming.
//!
//! Patterns and user queries go through the same pipeline.

mod porter;

pub use porter::porter_stem;

use serde::{Deserialize, Serialize};

/// Ordered stems produced by [`preprocess`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl<'a> IntoIterator for &'a TokenList {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Hook for a dictionary lemmatizer applied after stemming.
///
/// No lemma dictionary ships with the engine; [`NoopLemmatizer`] is the
/// default and leaves tokens untouched.
pub trait Lemmatizer: Send + Sync {
    fn lemmatize(&self, token: String) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoopLemmatizer;

impl Lemmatizer for NoopLemmatizer {
    fn lemmatize(&self, token: String) -> String {
        token
    }
}

/// Run the full pipeline on a raw utterance.
///
/// ```
/// use intentbot::textproc::preprocess;
///
/// let tokens = preprocess("When is your shop open for visiting?");
/// assert_eq!(tokens.joined(), "when is your shop open for visit");
/// ```
pub fn preprocess(text: &str) -> TokenList {
    preprocess_with(text, &NoopLemmatizer)
}

pub fn preprocess_with(text: &str, lemmatizer: &dyn Lemmatizer) -> TokenList {
    let lowered = text.to_lowercase();
    // Replacement, not deletion: "8am-11pm" must split.
    let spaced: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    TokenList(
        spaced
            .split_whitespace()
            .map(|word| lemmatizer.lemmatize(porter_stem(word)))
            .filter(|t| !t.is_empty())
            .collect(),
    )
}
