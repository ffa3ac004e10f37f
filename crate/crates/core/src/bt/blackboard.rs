use std::collections::BTreeMap;

use crate::world::Vec2;

/// Seconds an utterance keeps matching "is currently speaking".
pub const SPEECH_TTL: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub enum BbValue {
    Number(f64),
    Point(Vec2),
    Text(String),
    Agent(u32),
    Flag(bool),
}

/// Per-agent key/value store. Never shared between agents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Blackboard {
    values: BTreeMap<String, BbValue>,
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&BbValue> {
        self.values.get(key)
    }

    pub fn set(&mut self, key: impl Into<String>, value: BbValue) {
        self.values.insert(key.into(), value);
    }

    pub fn remove(&mut self, key: &str) -> Option<BbValue> {
        self.values.remove(key)
    }

    pub fn flag(&self, key: &str) -> bool {
        matches!(self.values.get(key), Some(BbValue::Flag(true)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub t: f64,
    pub speaker: u32,
    pub message: String,
}

/// Append-only log of everything said during a run, shared by all agents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpeechChannel {
    entries: Vec<Utterance>,
}

impl SpeechChannel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an utterance. Timestamps must be non-decreasing.
    pub fn push(&mut self, t: f64, speaker: u32, message: impl Into<String>) -> Result<(), String> {
        if let Some(last) = self.entries.last() {
            if t < last.t {
                return Err(format!("speech timestamp {t} precedes {}", last.t));
            }
        }
        self.entries.push(Utterance {
            t,
            speaker,
            message: message.into(),
        });
        Ok(())
    }

    pub fn entries(&self) -> &[Utterance] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Utterances said at or before `now` and at most [`SPEECH_TTL`] ago.
    pub fn active(&self, now: f64) -> impl Iterator<Item = &Utterance> {
        self.entries
            .iter()
            .rev()
            .take_while(move |u| now - u.t <= SPEECH_TTL + super::TIME_EPS)
            .filter(move |u| u.t <= now)
    }
}
