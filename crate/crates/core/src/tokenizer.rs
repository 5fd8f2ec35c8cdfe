//! Word-level tokenizer and vocabulary.
//!
//! Text is lowercased and split into maximal alphanumeric runs; every other
//! non-whitespace character becomes its own token. Ids `0..4` are reserved
//! for `<pad>`, `<unk>`, `<bos>` and `<eos>`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::Corpus;
use crate::error::{CoreError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED: [&str; NUM_RESERVED] = ["<pad>", "<unk>", "<bos>", "<eos>"];

pub const DEFAULT_MIN_FREQ: usize = 2;
pub const DEFAULT_MAX_SIZE: usize = 10_000;
pub const DEFAULT_MAX_TOKENS: usize = 100;

/// Split text into lowercase word and punctuation tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Lowercased text with tokens separated by single spaces.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CoreError::InvalidArgument(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Vocabulary of the reserved tokens followed by `words` in order.
    pub fn with_words<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Result<Vocab> {
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().map(|w| w.as_ref().to_string()))
            .collect();
        Vocab::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token ids for `text`, truncated to the first `max_tokens`.
    pub fn encode(&self, text: &str, max_tokens: usize) -> Vec<usize> {
        tokenize(text)
            .iter()
            .take(max_tokens)
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    /// Space-joined tokens, dropping `<pad>`, `<bos>` and `<eos>`.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let token = self.token(id).ok_or(CoreError::TokenOutOfRange {
                id,
                size: self.len(),
            })?;
            if !matches!(id, PAD | BOS | EOS) {
                words.push(token);
            }
        }
        Ok(words.join(" "))
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Vocab> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < NUM_RESERVED || tokens[..NUM_RESERVED] != RESERVED {
            return Err(CoreError::Parse {
                line: 1,
                message: "vocabulary must start with the reserved tokens".into(),
            });
        }
        Vocab::from_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Vocab::from_text(&text)
    }
}

/// Build a vocabulary from every turn of `corpus`.
///
/// Tokens with frequency below `min_freq` are dropped; the rest are ranked
/// by frequency (descending) then first occurrence, and truncated so the
/// vocabulary including reserved ids has at most `max_size` entries.
pub fn build_vocab(corpus: &Corpus, min_freq: usize, max_size: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(CoreError::Empty("cannot build a vocabulary from an empty corpus".into()));
    }
    if max_size <= NUM_RESERVED {
        return Err(CoreError::InvalidArgument(format!(
            "max_size must exceed {NUM_RESERVED}, got {max_size}"
        )));
    }
    // token -> (count, first occurrence)
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let mut seen = 0usize;
    for turn in corpus.turns() {
        for tok in tokenize(&turn.text) {
            let entry = counts.entry(tok).or_insert((0, seen));
            entry.0 += 1;
            seen += 1;
        }
    }
    let mut ranked: Vec<(String, usize, usize)> = counts
        .into_iter()
        .filter(|(tok, (n, _))| *n >= min_freq && !RESERVED.contains(&tok.as_str()))
        .map(|(tok, (n, first))| (tok, n, first))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(max_size - NUM_RESERVED);
    Vocab::with_words(ranked.into_iter().map(|(t, _, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Source};
    use crate::label::Label;

    fn corpus_of(texts: &[&str]) -> Corpus {
        let turns: Vec<(String, Label)> = texts.iter().map(|t| (t.to_string(), Label::NEUTRAL)).collect();
        Corpus::new(vec![Dialogue::new("v", Source::Custom, turns).unwrap()])
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(tokenize("Hello, World!"), ["hello", ",", "world", "!"]);
        assert_eq!(tokenize("don't"), ["don", "'", "t"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn min_freq_threshold() {
        let v = build_vocab(&corpus_of(&["a a", "a b"]), 2, 100).unwrap();
        assert_eq!(v.len(), NUM_RESERVED + 1);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), None);
    }

    #[test]
    fn empty_corpus_and_tiny_max_size_rejected() {
        assert!(build_vocab(&Corpus::default(), 1, 100).is_err());
        assert!(build_vocab(&corpus_of(&["a", "b"]), 1, 4).is_err());
    }

    #[test]
    fn ranking_by_frequency_then_first_occurrence() {
        // counts: e=4 d=3 c=3 b=2 a=2 f=2 g=1 h=1; c appears before d.
        let c = corpus_of(&["a b c d e", "c d e e", "a b c d e f f g h"]);
        let v = build_vocab(&c, 1, 10).unwrap();
        assert_eq!(&v.tokens()[NUM_RESERVED..], ["e", "c", "d", "a", "b", "f"]);
    }

    #[test]
    fn encode_and_decode() {
        let v = Vocab::with_words(["hello", "!", "hi"]).unwrap();
        assert_eq!(v.encode("Hello!", 100), vec![4, 5]);
        assert_eq!(v.encode("goodbye", 100), vec![UNK]);
        let long = "hi ".repeat(120);
        assert_eq!(v.encode(&long, 100).len(), 100);
        assert_eq!(v.decode(&[BOS, 6, EOS]).unwrap(), "hi");
        assert_eq!(v.decode(&[UNK]).unwrap(), "<unk>");
        assert!(matches!(v.decode(&[99]), Err(CoreError::TokenOutOfRange { .. })));
    }

    #[test]
    fn text_round_trip() {
        let v = Vocab::with_words(["x", "y", ","]).unwrap();
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocab::from_text("x\ny\n").is_err());
    }
}
