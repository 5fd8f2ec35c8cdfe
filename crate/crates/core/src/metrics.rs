//! Automatic evaluation: label-prediction scores, perplexity aggregation,
//! distinct-n diversity and vector-extrema embedding similarity.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::label::{Label, NUM_LABELS};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEval {
    /// Scores for every label that occurs in the gold or predicted labels.
    pub per_class: BTreeMap<Label, ClassScores>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Mean recall over the classes present in the gold labels.
    pub balanced_accuracy: f64,
}

/// Per-class and support-weighted precision, recall and F1, plus balanced
/// accuracy. Empty denominators score 0.
pub fn prediction_scores(preds: &[Label], golds: &[Label]) -> Result<PredictionEval> {
    if preds.len() != golds.len() {
        return Err(CoreError::LengthMismatch(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(CoreError::Empty("no predictions to score".into()));
    }
    let mut tp = [0usize; NUM_LABELS];
    let mut predicted = [0usize; NUM_LABELS];
    let mut support = [0usize; NUM_LABELS];
    for (&p, &g) in preds.iter().zip(golds) {
        predicted[p.id()] += 1;
        support[g.id()] += 1;
        if p == g {
            tp[g.id()] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut per_class = BTreeMap::new();
    for label in Label::all() {
        let i = label.id();
        if support[i] == 0 && predicted[i] == 0 {
            continue;
        }
        let precision = ratio(tp[i], predicted[i]);
        let recall = ratio(tp[i], support[i]);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.insert(label, ClassScores { precision, recall, f1, support: support[i] });
    }
    let n = golds.len() as f64;
    let present: Vec<&ClassScores> = per_class.values().filter(|c| c.support > 0).collect();
    let weighted = |f: fn(&ClassScores) -> f64| present.iter().map(|c| f(c) * c.support as f64 / n).sum::<f64>();
    Ok(PredictionEval {
        weighted_precision: weighted(|c| c.precision),
        weighted_recall: weighted(|c| c.recall),
        weighted_f1: weighted(|c| c.f1),
        balanced_accuracy: present.iter().map(|c| c.recall).sum::<f64>() / present.len() as f64,
        per_class,
    })
}

/// Fraction of exact matches.
pub fn accuracy(preds: &[Label], golds: &[Label]) -> f64 {
    if golds.is_empty() {
        return 0.0;
    }
    preds.iter().zip(golds).filter(|(p, g)| p == g).count() as f64 / golds.len() as f64
}

/// Distinct n-grams over total n-grams across all responses; 0 when there
/// are no n-grams.
pub fn distinct_n<S: AsRef<str>>(responses: &[Vec<S>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(CoreError::InvalidArgument("distinct-n needs n >= 1".into()));
    }
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut total = 0usize;
    for r in responses {
        for gram in r.windows(n) {
            total += 1;
            seen.insert(gram.iter().map(AsRef::as_ref).collect());
        }
    }
    Ok(if total == 0 { 0.0 } else { seen.len() as f64 / total as f64 })
}

/// `exp` of the token-weighted mean negative log-likelihood.
pub fn perplexity(total_nll: f64, tokens: usize) -> f64 {
    if tokens == 0 {
        return f64::NAN;
    }
    (total_nll / tokens as f64).exp()
}

/// Token vectors for the extrema similarity. Unknown tokens map to the
/// zero vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<EmbeddingTable> {
        if dim == 0 {
            return Err(CoreError::InvalidArgument("embedding dimension must be at least 1".into()));
        }
        Ok(EmbeddingTable { dim, vectors: HashMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(CoreError::InvalidArgument(format!(
                "vector for `{token}` has {} values, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument(format!("vector for `{token}` is not finite")));
        }
        self.vectors.insert(token, vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Parse whitespace-separated `token v1 ... vd` lines. The dimension is
    /// taken from the first line; blank lines are skipped.
    pub fn from_text(text: &str) -> Result<EmbeddingTable> {
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| CoreError::Parse { line: i + 1, message: e.to_string() })?;
            let t = match &mut table {
                Some(t) => t,
                None => table.insert(EmbeddingTable::new(values.len()).map_err(|e| CoreError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?),
            };
            t.insert(token, values).map_err(|e| CoreError::Parse { line: i + 1, message: e.to_string() })?;
        }
        table.ok_or_else(|| CoreError::Empty("embedding file has no vectors".into()))
    }

    pub fn load(path: &Path) -> Result<EmbeddingTable> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        EmbeddingTable::from_text(&text)
    }

    /// Per dimension, the token value with the largest magnitude; ties go
    /// to the positive value. `None` when no token is in the table.
    pub fn extrema<S: AsRef<str>>(&self, tokens: &[S]) -> Option<Vec<f64>> {
        let mut out: Option<Vec<f64>> = None;
        for v in tokens.iter().filter_map(|t| self.get(t.as_ref())) {
            match &mut out {
                None => out = Some(v.to_vec()),
                Some(acc) => {
                    for (a, &x) in acc.iter_mut().zip(v) {
                        if x.abs() > a.abs() || (x.abs() == a.abs() && x > *a) {
                            *a = x;
                        }
                    }
                }
            }
        }
        out
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean cosine between candidate and reference extrema vectors. A pair in
/// which either side has no known token scores 0.
pub fn extrema_similarity<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>], emb: &EmbeddingTable) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(CoreError::LengthMismatch(format!(
            "{} candidates for {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| match (emb.extrema(c), emb.extrema(r)) {
            (Some(a), Some(b)) => cosine(&a, &b),
            _ => 0.0,
        })
        .sum();
    Ok(total / candidates.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationEval {
    pub perplexity: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
    pub extrema: f64,
}

/// Everything needed to score one generated response.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow {
    pub predicted: Option<Label>,
    pub gold_label: Label,
    pub response_tokens: Vec<String>,
    pub gold_tokens: Vec<String>,
    /// Teacher-forced NLL of the gold response under the method's
    /// condition, summed over `nll_tokens` tokens.
    pub nll: f64,
    pub nll_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub rows: usize,
    pub prediction: Option<PredictionEval>,
    pub generation: Option<GenerationEval>,
}

/// Score one method's rows. Prediction scores are reported when every row
/// carries a predicted label.
pub fn evaluate_run(method: &str, rows: &[ScoredRow], emb: &EmbeddingTable) -> Result<MethodReport> {
    if rows.is_empty() {
        return Ok(MethodReport { method: method.to_string(), rows: 0, prediction: None, generation: None });
    }
    let preds: Option<Vec<Label>> = rows.iter().map(|r| r.predicted).collect();
    let prediction = match preds {
        Some(p) => {
            let golds: Vec<Label> = rows.iter().map(|r| r.gold_label).collect();
            Some(prediction_scores(&p, &golds)?)
        }
        None => None,
    };
    let responses: Vec<Vec<String>> = rows.iter().map(|r| r.response_tokens.clone()).collect();
    let golds: Vec<Vec<String>> = rows.iter().map(|r| r.gold_tokens.clone()).collect();
    let generation = GenerationEval {
        perplexity: perplexity(rows.iter().map(|r| r.nll).sum(), rows.iter().map(|r| r.nll_tokens).sum()),
        distinct_1: distinct_n(&responses, 1)?,
        distinct_2: distinct_n(&responses, 2)?,
        extrema: extrema_similarity(&responses, &golds, emb)?,
    };
    Ok(MethodReport { method: method.to_string(), rows: rows.len(), prediction, generation: Some(generation) })
}

/// Report over several methods, rendered as an aligned table or CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
}

const HEADER: [&str; 10] = ["Method", "Rows", "Prec.", "Recall", "F1", "Acc.", "PPL", "D-1", "D-2", "Embed. extrema"];
const NO_ROWS: &str = "no rows";

impl MethodReport {
    fn cells(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:.4}");
        let mut cells = vec![self.method.clone(), self.rows.to_string()];
        if self.rows == 0 {
            cells.push(NO_ROWS.to_string());
            cells.extend(std::iter::repeat_n(String::new(), HEADER.len() - 3));
            return cells;
        }
        match &self.prediction {
            Some(p) => cells.extend([p.weighted_precision, p.weighted_recall, p.weighted_f1, p.balanced_accuracy].map(f)),
            None => cells.extend(std::iter::repeat_n("-".to_string(), 4)),
        }
        match &self.generation {
            Some(g) => cells.extend([g.perplexity, g.distinct_1, g.distinct_2, g.extrema].map(f)),
            None => cells.extend(std::iter::repeat_n("-".to_string(), 4)),
        }
        cells
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for m in &self.methods {
            out.push_str(&m.cells().into_iter().map(|c| csv_cell(&c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<String>> = std::iter::once(HEADER.iter().map(|s| s.to_string()).collect())
            .chain(self.methods.iter().map(MethodReport::cells))
            .collect();
        let widths: Vec<usize> = (0..HEADER.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        for (i, row) in rows.iter().enumerate() {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    write!(line, "{cell:<w$}", w = widths[c])?;
                } else {
                    write!(line, "  {cell:>w$}", w = widths[c])?;
                }
            }
            writeln!(f, "{}", line.trim_end())?;
            if i == 0 {
                writeln!(f, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)))?;
            }
        }
        Ok(())
    }
}
