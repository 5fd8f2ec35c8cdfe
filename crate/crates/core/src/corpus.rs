//! Annotated dialogue corpora: data model, ingestion, splitting and label
//! windows.
//!
//! The canonical interchange format is JSON lines, one dialogue per line:
//!
//! ```text
//! {"id":"d1","source":"ED","turns":[{"text":"i lost my dog","label":"Sad"},{"text":"i am so sorry","label":"Sympathizing"}]}
//! ```
//!
//! Roles are never stored. Odd-numbered turns (1-indexed) belong to the
//! speaker and even-numbered turns to the listener.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Speaker,
    Listener,
}

impl Role {
    /// Role of the turn at 0-based position `index`.
    pub fn at(index: usize) -> Role {
        if index.is_multiple_of(2) {
            Role::Speaker
        } else {
            Role::Listener
        }
    }

    pub fn segment_id(self) -> usize {
        match self {
            Role::Speaker => 0,
            Role::Listener => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Source {
    #[serde(rename = "ED")]
    Ed,
    #[serde(rename = "EDOS")]
    Edos,
    #[serde(rename = "OS")]
    Os,
    #[default]
    #[serde(rename = "custom")]
    Custom,
}

impl Source {
    fn parse(s: &str) -> Option<Source> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ed" => Some(Source::Ed),
            "edos" => Some(Source::Edos),
            "os" => Some(Source::Os),
            "custom" | "" => Some(Source::Custom),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub source: Source,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Build a dialogue from `(text, label)` pairs, assigning roles by
    /// position and validating the turn invariants.
    pub fn new(
        id: impl Into<String>,
        source: Source,
        turns: impl IntoIterator<Item = (String, Label)>,
    ) -> Result<Dialogue> {
        let id = id.into();
        let turns: Vec<Turn> = turns
            .into_iter()
            .enumerate()
            .map(|(i, (text, label))| Turn {
                role: Role::at(i),
                text,
                label,
            })
            .collect();
        if turns.len() < 2 {
            return Err(CoreError::InvalidDialogue {
                id,
                message: format!("needs at least 2 turns, found {}", turns.len()),
            });
        }
        if let Some(pos) = turns.iter().position(|t| t.text.trim().is_empty()) {
            return Err(CoreError::InvalidDialogue {
                id,
                message: format!("turn {} has empty text", pos + 1),
            });
        }
        Ok(Dialogue { id, source, turns })
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.turns.iter().map(|t| t.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Corpus {
        Corpus { dialogues }
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn num_turns(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.dialogues.iter().flat_map(|d| d.turns.iter())
    }

    pub fn report(&self, name: &str) -> IngestReport {
        IngestReport {
            rows: vec![ReportRow {
                name: name.to_string(),
                dialogues: self.len(),
                turns: self.num_turns(),
            }],
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.dialogues {
            let record = DialogueRecord {
                id: d.id.clone(),
                source: d.source,
                turns: d
                    .turns
                    .iter()
                    .map(|t| TurnRecord {
                        text: t.text.clone(),
                        label: t.label.name().to_string(),
                    })
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&record).expect("dialogue serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CoreError::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess the format from a file extension, defaulting to JSON lines.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TurnRecord {
    text: String,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DialogueRecord {
    id: String,
    #[serde(default)]
    source: Source,
    turns: Vec<TurnRecord>,
}

fn resolve_label(name: &str, dialogue: &str, turn: usize) -> Result<Label> {
    Label::parse(name).ok_or_else(|| CoreError::UnknownLabel {
        name: name.to_string(),
        context: format!(" in dialogue `{dialogue}`, turn {turn}"),
    })
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        CorpusFormat::Jsonl => read_jsonl(reader),
        CorpusFormat::Csv => read_csv(reader),
    }
}

/// Parse canonical JSON lines. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut dialogues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CoreError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogueRecord =
            serde_json::from_str(&line).map_err(|e| CoreError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
        let turns = record
            .turns
            .iter()
            .enumerate()
            .map(|(t, turn)| Ok((turn.text.clone(), resolve_label(&turn.label, &record.id, t + 1)?)))
            .collect::<Result<Vec<_>>>()?;
        dialogues.push(Dialogue::new(record.id, record.source, turns)?);
    }
    Ok(Corpus { dialogues })
}

/// Import a per-turn CSV table.
///
/// Required columns: `dialogue_id` (or ED's `conv_id`), `text` (or
/// `utterance`), `label`. Optional: `source`, and `turn_index` (or ED's
/// `utterance_idx`) for ordering within a dialogue. ED's `_comma_`
/// escaping is undone. Dialogues keep their order of first appearance.
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CoreError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
    };
    let missing = |what: &str| CoreError::Parse {
        line: 1,
        message: format!("missing `{what}` column"),
    };
    let id_col = column(&["dialogue_id", "conv_id"]).ok_or_else(|| missing("dialogue_id"))?;
    let text_col = column(&["text", "utterance"]).ok_or_else(|| missing("text"))?;
    let label_col = column(&["label"]).ok_or_else(|| missing("label"))?;
    let source_col = column(&["source"]);
    let index_col = column(&["turn_index", "utterance_idx"]);

    struct Pending {
        source: Source,
        turns: Vec<(i64, usize, String, String)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();

    for (row_no, record) in rdr.records().enumerate() {
        let lineno = row_no + 2;
        let record = record.map_err(|e| CoreError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("").to_string();
        let id = field(id_col);
        let source = match source_col {
            Some(c) => Source::parse(&field(c)).ok_or_else(|| CoreError::Parse {
                line: lineno,
                message: format!("unknown source `{}`", field(c)),
            })?,
            None => Source::Custom,
        };
        let index = match index_col {
            Some(c) => field(c).trim().parse::<i64>().map_err(|e| CoreError::Parse {
                line: lineno,
                message: format!("bad turn index: {e}"),
            })?,
            None => 0,
        };
        let text = field(text_col).replace("_comma_", ",");
        let entry = pending.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Pending {
                source,
                turns: Vec::new(),
            }
        });
        let seq = entry.turns.len();
        entry.turns.push((index, seq, text, field(label_col)));
    }

    let mut dialogues = Vec::with_capacity(order.len());
    for id in order {
        let mut p = pending.remove(&id).expect("pending dialogue");
        p.turns.sort_by_key(|(index, seq, _, _)| (*index, *seq));
        let turns = p
            .turns
            .into_iter()
            .enumerate()
            .map(|(t, (_, _, text, label))| Ok((text, resolve_label(&label, &id, t + 1)?)))
            .collect::<Result<Vec<_>>>()?;
        dialogues.push(Dialogue::new(id, p.source, turns)?);
    }
    Ok(Corpus { dialogues })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub dialogues: usize,
    pub turns: usize,
}

impl ReportRow {
    pub fn turns_per_dialogue(&self) -> f64 {
        if self.dialogues == 0 {
            0.0
        } else {
            self.turns as f64 / self.dialogues as f64
        }
    }
}

/// Dataset statistics table: dialogues, turns, turns per dialogue.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub rows: Vec<ReportRow>,
}

impl IngestReport {
    pub fn push(&mut self, name: &str, corpus: &Corpus) {
        self.rows.extend(corpus.report(name).rows);
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(std::iter::once("Dataset".len()))
            .max()
            .unwrap_or(7);
        writeln!(
            f,
            "{:<width$}  {:>10}  {:>10}  {:>14}",
            "Dataset", "Dialogues", "Turns", "Turns/dialogue"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>10}  {:>10}  {:>14.2}",
                r.name,
                r.dialogues,
                r.turns,
                r.turns_per_dialogue()
            )?;
        }
        Ok(())
    }
}

/// Fractions of dialogues assigned to train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

/// Split sizes for `n` dialogues: each split gets `floor(n * ratio)`, then
/// leftover dialogues go one at a time to val, test, train, val, ...
pub fn split_sizes(n: usize, ratios: SplitRatios) -> Result<[usize; 3]> {
    let r = [ratios.train, ratios.val, ratios.test];
    if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "split ratios must be non-negative, got {r:?}"
        )));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument(format!(
            "split ratios must sum to 1, got {r:?}"
        )));
    }
    let mut sizes = r.map(|x| ((n as f64) * x + 1e-9).floor() as usize);
    let mut remaining = n - sizes.iter().sum::<usize>();
    let order = [1, 2, 0];
    let mut i = 0;
    while remaining > 0 {
        sizes[order[i % 3]] += 1;
        remaining -= 1;
        i += 1;
    }
    Ok(sizes)
}

/// Dialogue-level shuffle-and-partition, deterministic for a fixed seed.
pub fn split_corpus(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<Split> {
    if corpus.is_empty() {
        return Err(CoreError::Empty("cannot split an empty corpus".into()));
    }
    let [n_train, n_val, _] = split_sizes(corpus.len(), ratios)?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| Corpus::new(idx.iter().map(|&i| corpus.dialogues[i].clone()).collect());
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// `k` consecutive turn labels of one dialogue, starting on a speaker turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelWindow {
    pub labels: Vec<Label>,
    /// 1-based index of the first turn.
    pub start_turn_index: usize,
}

pub const DEFAULT_WINDOW: usize = 4;

pub fn check_window_size(k: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(CoreError::InvalidArgument(format!(
            "window size must be even and at least 2, got {k}"
        )));
    }
    Ok(())
}

/// Slide a window of `k` labels over every dialogue with stride 2, so each
/// window starts on a speaker turn.
pub fn extract_windows(corpus: &Corpus, k: usize) -> Result<Vec<LabelWindow>> {
    check_window_size(k)?;
    let mut windows = Vec::new();
    for d in &corpus.dialogues {
        let labels: Vec<Label> = d.labels().collect();
        let mut start = 0;
        while start + k <= labels.len() {
            windows.push(LabelWindow {
                labels: labels[start..start + k].to_vec(),
                start_turn_index: start + 1,
            });
            start += 2;
        }
    }
    Ok(windows)
}
