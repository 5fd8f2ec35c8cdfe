//! Synthetic dialogues with planted emotion -> intent rules.
//!
//! Each speaker turn carries an emotion and mentions one topic. The
//! listener's intent is a fixed function of that (emotion, topic) pair, so
//! a model that reads the text can recover it while a label-only model can
//! only see the emotion. A configurable fraction of listener labels is
//! replaced with a random intent. Listener text is templated from the final
//! label.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Dialogue, Source};
use crate::error::{CoreError, Result};
use crate::label::Label;
use crate::rng::stage_rng;

/// Speaker emotions with the word used in the speaker's text.
const EMOTIONS: [(&str, &str); 6] = [
    ("Sad", "sad"),
    ("Angry", "angry"),
    ("Afraid", "scared"),
    ("Joyful", "happy"),
    ("Lonely", "lonely"),
    ("Proud", "proud"),
];

const TOPICS: [&[&str]; 3] = [
    &["my boss", "the office", "my job", "a meeting"],
    &["my sister", "my parents", "my cousin", "my family"],
    &["my dog", "my cat", "the vet", "my puppy"],
];

const OPENERS: [&str; 4] = ["i feel", "honestly i am", "today i am", "i am so"];
const FILLERS: [&str; 5] = ["today", "this week", "again", "lately", "right now"];

const INTENT_TEXT: [(&str, &[&str]); 8] = [
    ("Questioning", &["what happened next ?", "why do you think so ?", "how did that happen ?"]),
    ("Agreeing", &["yes i agree with you", "that is so true", "i think so too"]),
    ("Acknowledging", &["i see what you mean", "that makes sense", "i hear you"]),
    ("Encouraging", &["you can do it", "keep going , you will be fine", "do not give up"]),
    ("Consoling", &["it will get better soon", "do not worry too much", "things will be okay"]),
    ("Sympathizing", &["i am so sorry to hear that", "that sounds really hard", "oh no , that is awful"]),
    ("Wishing", &["i hope it goes well", "good luck with everything", "best wishes to you"]),
    ("Suggesting", &["maybe you should talk to them", "try to take a break", "you could ask for help"]),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub dialogues: usize,
    /// Fraction of listener labels replaced by a uniformly random intent.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dialogues: 600,
            noise: 0.2,
            seed: 0,
        }
    }
}

/// Number of topics a speaker turn can mention.
pub const NUM_TOPICS: usize = TOPICS.len();

pub fn speaker_emotions() -> impl Iterator<Item = Label> {
    EMOTIONS.iter().map(|(name, _)| Label::parse(name).expect("taxonomy label"))
}

/// The planted listener intent for a speaker emotion and topic.
pub fn planted_intent(emotion_index: usize, topic: usize) -> Label {
    let intents: Vec<Label> = Label::intents().collect();
    intents[(emotion_index + 3 * topic) % intents.len()]
}

fn listener_text(label: Label, rng: &mut ChaCha8Rng) -> &'static str {
    let (_, texts) = INTENT_TEXT
        .iter()
        .find(|(name, _)| *name == label.name())
        .expect("listener labels are intents");
    texts.choose(rng).expect("non-empty templates")
}

/// Generate `cfg.dialogues` dialogues of 4 to 6 turns.
pub fn generate(cfg: &SyntheticConfig) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(CoreError::InvalidArgument(format!("noise must be in [0, 1], got {}", cfg.noise)));
    }
    let mut rng = stage_rng(cfg.seed, "synthetic");
    let intents: Vec<Label> = Label::intents().collect();
    let mut dialogues = Vec::with_capacity(cfg.dialogues);
    for n in 0..cfg.dialogues {
        let len = rng.gen_range(4..=6);
        let mut turns = Vec::with_capacity(len);
        let mut pending: Option<(usize, usize)> = None;
        for i in 0..len {
            if i % 2 == 0 {
                let e = rng.gen_range(0..EMOTIONS.len());
                let topic = rng.gen_range(0..NUM_TOPICS);
                let text = format!(
                    "{} {} about {} {}",
                    OPENERS.choose(&mut rng).expect("openers"),
                    EMOTIONS[e].1,
                    TOPICS[topic].choose(&mut rng).expect("topics"),
                    FILLERS.choose(&mut rng).expect("fillers"),
                );
                turns.push((text, Label::parse(EMOTIONS[e].0).expect("taxonomy label")));
                pending = Some((e, topic));
            } else {
                let (e, topic) = pending.take().expect("speaker turn first");
                let label = if rng.gen_bool(cfg.noise) {
                    *intents.choose(&mut rng).expect("intents")
                } else {
                    planted_intent(e, topic)
                };
                turns.push((listener_text(label, &mut rng).to_string(), label));
            }
        }
        dialogues.push(Dialogue::new(format!("syn{n:04}"), Source::Custom, turns)?);
    }
    Ok(Corpus::new(dialogues))
}
