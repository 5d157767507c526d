//! Turn-level conversation state: response rotation, follow-ups, goodbye.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::matcher::{ClassifyError, IntentClassifier, Prediction};
use crate::vectorizer::fnv1a64;

pub const DEFAULT_FOLLOWUP_PROBABILITY: f64 = 0.3;

#[derive(Debug, Error)]
pub enum DialogError {
    #[error("session has ended")]
    SessionEnded,
    #[error("unknown intent tag {0:?}")]
    UnknownTag(String),
    #[error("follow-up probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DialogConfig {
    pub followup_probability: f64,
}

impl Default for DialogConfig {
    fn default() -> Self {
        DialogConfig { followup_probability: DEFAULT_FOLLOWUP_PROBABILITY }
    }
}

impl DialogConfig {
    pub fn new(followup_probability: f64) -> Result<Self, DialogError> {
        if !(0.0..=1.0).contains(&followup_probability) {
            return Err(DialogError::InvalidProbability(followup_probability));
        }
        Ok(DialogConfig { followup_probability })
    }
}

/// What the bot says for one user turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotTurn {
    pub response: String,
    pub followup: Option<String>,
    /// `None` when the classifier fell back.
    pub intent: Option<String>,
    pub confidence: f64,
    pub ended: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub user: String,
    pub prediction: Prediction,
    pub turn: BotTurn,
}

/// One line of the JSON-lines transcript export.
#[derive(Serialize)]
struct TranscriptLine<'a> {
    user: &'a str,
    intent: Option<&'a str>,
    confidence: f64,
    response: &'a str,
    followup: Option<&'a str>,
    ended: bool,
}

#[derive(Debug, Clone)]
struct Rotation {
    order: Vec<usize>,
    cursor: usize,
    last_served: Option<usize>,
}

/// Per-conversation state.
///
/// Callers serialize turns on a session; distinct sessions are independent.
#[derive(Debug, Clone)]
pub struct DialogSession {
    session_id: String,
    corpus: Arc<Corpus>,
    rng: ChaCha8Rng,
    rotation: HashMap<String, Rotation>,
    ended: bool,
    transcript: Vec<TranscriptEntry>,
}

/// Session generator seed derived from the global seed and the session id.
pub fn session_seed(global_seed: u64, session_id: &str) -> u64 {
    let mut bytes = global_seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(session_id.as_bytes());
    fnv1a64(&bytes)
}

impl DialogSession {
    pub fn new(corpus: Arc<Corpus>, session_id: impl Into<String>, global_seed: u64) -> DialogSession {
        let session_id = session_id.into();
        let rng = ChaCha8Rng::seed_from_u64(session_seed(global_seed, &session_id));
        DialogSession { session_id, corpus, rng, rotation: HashMap::new(), ended: false, transcript: Vec::new() }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    /// Serve the next response of `tag`.
    ///
    /// Responses are walked in a shuffled order; each new cycle is reshuffled
    /// so that it does not open with the response that closed the previous
    /// one. A single response is always served as is.
    pub fn next_response(&mut self, tag: &str) -> Result<String, DialogError> {
        if self.ended {
            return Err(DialogError::SessionEnded);
        }
        let intent = self.corpus.intent(tag).ok_or_else(|| DialogError::UnknownTag(tag.to_string()))?;
        let n = intent.responses.len();
        let rng = &mut self.rng;
        let rotation = self
            .rotation
            .entry(tag.to_string())
            .or_insert_with(|| Rotation { order: Vec::new(), cursor: 0, last_served: None });
        if rotation.cursor >= rotation.order.len() {
            let mut order: Vec<usize> = (0..n).collect();
            loop {
                order.shuffle(rng);
                if n < 2 || Some(order[0]) != rotation.last_served {
                    break;
                }
            }
            rotation.order = order;
            rotation.cursor = 0;
        }
        let index = rotation.order[rotation.cursor];
        rotation.cursor += 1;
        rotation.last_served = Some(index);
        Ok(intent.responses[index].clone())
    }

    /// With probability `p`, one of the tag's follow-ups chosen uniformly.
    pub fn maybe_followup(&mut self, tag: &str, p: f64) -> Option<String> {
        let followups = &self.corpus.intent(tag)?.followups;
        if followups.is_empty() {
            return None;
        }
        if self.rng.gen::<f64>() < p {
            let i = self.rng.gen_range(0..followups.len());
            Some(followups[i].clone())
        } else {
            None
        }
    }

    /// Classify `user_text` and produce the bot's reply.
    ///
    /// Fallbacks answer with the corpus fallback response and never carry a
    /// follow-up; the goodbye intent ends the session without one.
    pub fn handle_turn(
        &mut self,
        user_text: &str,
        classifier: &dyn IntentClassifier,
        config: &DialogConfig,
    ) -> Result<BotTurn, DialogError> {
        if self.ended {
            return Err(DialogError::SessionEnded);
        }
        let prediction = classifier.classify(user_text)?;
        let turn = match prediction.tag() {
            None => BotTurn {
                response: self.corpus.fallback_response.clone(),
                followup: None,
                intent: None,
                confidence: prediction.confidence,
                ended: false,
            },
            Some(tag) if tag == self.corpus.goodbye_tag => {
                let response = self.next_response(tag)?;
                BotTurn {
                    response,
                    followup: None,
                    intent: Some(tag.to_string()),
                    confidence: prediction.confidence,
                    ended: true,
                }
            }
            Some(tag) => {
                let response = self.next_response(tag)?;
                let followup = self.maybe_followup(tag, config.followup_probability);
                BotTurn {
                    response,
                    followup,
                    intent: Some(tag.to_string()),
                    confidence: prediction.confidence,
                    ended: false,
                }
            }
        };
        self.ended = turn.ended;
        self.transcript.push(TranscriptEntry { user: user_text.to_string(), prediction, turn: turn.clone() });
        Ok(turn)
    }

    /// Write the transcript as JSON lines.
    pub fn export_transcript(&self, mut out: impl Write) -> io::Result<()> {
        for entry in &self.transcript {
            let line = TranscriptLine {
                user: &entry.user,
                intent: entry.turn.intent.as_deref(),
                confidence: entry.turn.confidence,
                response: &entry.turn.response,
                followup: entry.turn.followup.as_deref(),
                ended: entry.turn.ended,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
