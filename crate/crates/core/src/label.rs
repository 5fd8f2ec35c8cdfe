//! The closed 41-label space: 32 fine-grained emotions, the eight listener
//! response intents, and `Neutral`.
//!
//! Label ids are stable and dense in `0..41`. Emotions occupy `0..32` in
//! alphabetical order, the intents occupy `32..40` in taxonomy order, and
//! `Neutral` is `40`. Several rules elsewhere (argmax tie-breaking, candidate
//! ordering) depend on this numbering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CoreError;

/// Number of labels in the taxonomy.
pub const NUM_LABELS: usize = 41;

/// Coarse category of a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelKind {
    Emotion,
    Intent,
    Neutral,
}

const NAMES: [&str; NUM_LABELS] = [
    "Afraid",
    "Angry",
    "Annoyed",
    "Anticipating",
    "Anxious",
    "Apprehensive",
    "Ashamed",
    "Caring",
    "Confident",
    "Content",
    "Devastated",
    "Disappointed",
    "Disgusted",
    "Embarrassed",
    "Excited",
    "Faithful",
    "Furious",
    "Grateful",
    "Guilty",
    "Hopeful",
    "Impressed",
    "Jealous",
    "Joyful",
    "Lonely",
    "Nostalgic",
    "Prepared",
    "Proud",
    "Sad",
    "Sentimental",
    "Surprised",
    "Terrified",
    "Trusting",
    "Questioning",
    "Agreeing",
    "Acknowledging",
    "Encouraging",
    "Consoling",
    "Sympathizing",
    "Wishing",
    "Suggesting",
    "Neutral",
];

const FIRST_INTENT: u8 = 32;
const NEUTRAL_ID: u8 = 40;

/// One label of the taxonomy, stored as its dense id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(u8);

impl Label {
    pub const NEUTRAL: Label = Label(NEUTRAL_ID);

    /// Label with the given id, if it is in range.
    pub fn from_id(id: usize) -> Option<Label> {
        (id < NUM_LABELS).then_some(Label(id as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        NAMES[self.id()]
    }

    pub fn kind(self) -> LabelKind {
        match self.0 {
            id if id < FIRST_INTENT => LabelKind::Emotion,
            NEUTRAL_ID => LabelKind::Neutral,
            _ => LabelKind::Intent,
        }
    }

    pub fn is_emotion(self) -> bool {
        self.kind() == LabelKind::Emotion
    }

    pub fn is_intent(self) -> bool {
        self.kind() == LabelKind::Intent
    }

    /// Resolve a label name. Matching trims surrounding whitespace and ignores
    /// case; there is no fuzzy matching.
    pub fn parse(name: &str) -> Option<Label> {
        let needle = name.trim();
        NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(needle))
            .map(|i| Label(i as u8))
    }

    /// All 41 labels in id order.
    pub fn all() -> impl Iterator<Item = Label> + Clone {
        (0..NUM_LABELS as u8).map(Label)
    }

    /// The eight empathetic response intents in id order.
    pub fn intents() -> impl Iterator<Item = Label> + Clone {
        (FIRST_INTENT..NEUTRAL_ID).map(Label)
    }

    /// The 32 emotions in id order.
    pub fn emotions() -> impl Iterator<Item = Label> + Clone {
        (0..FIRST_INTENT).map(Label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::parse(s).ok_or_else(|| CoreError::UnknownLabel {
            name: s.to_string(),
            context: String::new(),
        })
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Label::parse(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown label `{name}`")))
    }
}

/// Comma-separated list of every valid label name, for error messages.
pub fn valid_label_names() -> String {
    NAMES.join(", ")
}
