//! Runs a label-prediction method and the generator over a test corpus and
//! scores the result.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, Turn, DEFAULT_WINDOW};
use crate::error::{CoreError, Result};
use crate::generator::{DecodeMode, GeneratorModel};
use crate::label::Label;
use crate::metrics::{evaluate_run, EmbeddingTable, EvalReport, ScoredRow};
use crate::policy_tree::{predict_equally_sampled, PolicyTree, PredictionContext};
use crate::predictor::{history_before, ContextTurn, PredictorModel};
use crate::tokenizer::tokenize;

/// How the condition label of a response is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The gold label of the response.
    Gt,
    /// No label; the unconditioned generator.
    EndToEnd,
    Equal,
    DtArgmax,
    DtSampled,
    Neural,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::EndToEnd,
        Method::Equal,
        Method::DtArgmax,
        Method::DtSampled,
        Method::Neural,
        Method::Gt,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Method::Gt => "gt",
            Method::EndToEnd => "end_to_end",
            Method::Equal => "equal",
            Method::DtArgmax => "dt_argmax",
            Method::DtSampled => "dt_sampled",
            Method::Neural => "neural",
        }
    }

    /// Row name used in evaluation reports.
    pub fn title(self) -> &'static str {
        match self {
            Method::Gt => "GT emotion/intent",
            Method::EndToEnd => "End-to-end model",
            Method::Equal => "Equally sampled",
            Method::DtArgmax => "DT (argmax)",
            Method::DtSampled => "DT (prob. sampled)",
            Method::Neural => "Neural predictor",
        }
    }

    /// True for methods whose label is a prediction to be scored.
    pub fn predicts(self) -> bool {
        !matches!(self, Method::Gt | Method::EndToEnd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == s.trim())
            .ok_or_else(|| {
                let keys: Vec<&str> = Method::ALL.iter().map(|m| m.key()).collect();
                CoreError::InvalidArgument(format!("unknown method `{s}`; expected one of {}", keys.join(", ")))
            })
    }
}

/// Models available to the pipeline. A method fails with
/// [`CoreError::MissingModel`] when one it needs is absent.
#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub tree: Option<&'a PolicyTree>,
    pub predictor: Option<&'a PredictorModel>,
    /// Label-conditioned generator.
    pub generator: Option<&'a GeneratorModel>,
    /// Unconditioned generator.
    pub end_to_end: Option<&'a GeneratorModel>,
}

impl<'a> Models<'a> {
    fn need<T>(model: Option<&'a T>, method: Method) -> Result<&'a T> {
        model.ok_or_else(|| CoreError::MissingModel(method.key().to_string()))
    }

    fn generator_for(&self, method: Method) -> Result<&'a GeneratorModel> {
        if method == Method::EndToEnd {
            Self::need(self.end_to_end, method)
        } else {
            Self::need(self.generator, method)
        }
    }

    /// Check up front that `method` has everything it needs.
    pub fn check(&self, method: Method) -> Result<()> {
        self.generator_for(method)?;
        match method {
            Method::DtArgmax | Method::DtSampled => Self::need(self.tree, method).map(drop),
            Method::Neural => Self::need(self.predictor, method).map(drop),
            _ => Ok(()),
        }
    }
}

/// Condition label for the response following `history`.
pub fn predict_condition<R: Rng + ?Sized>(
    method: Method,
    models: &Models,
    history: &[Turn],
    gold: Label,
    rng: &mut R,
) -> Result<Option<Label>> {
    Ok(match method {
        Method::Gt => Some(gold),
        Method::EndToEnd => None,
        Method::Equal => Some(predict_equally_sampled(&PredictionContext::from_turns(history, DEFAULT_WINDOW), rng)),
        Method::DtArgmax => {
            let tree = Models::need(models.tree, method)?;
            Some(tree.predict_argmax(&PredictionContext::from_turns(history, tree.k()))?)
        }
        Method::DtSampled => {
            let tree = Models::need(models.tree, method)?;
            Some(tree.predict_sampled(&PredictionContext::from_turns(history, tree.k()), rng)?)
        }
        Method::Neural => {
            let p = Models::need(models.predictor, method)?;
            let turns: Vec<ContextTurn> = history_before(history, history.len(), p.config.k).iter().map(Into::into).collect();
            Some(p.predict_label(&p.encode(&turns)?)?)
        }
    })
}

/// One generated response with everything the metrics need.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRow {
    pub dialogue_id: String,
    pub method: Method,
    pub context: Vec<Turn>,
    pub gold_label: Label,
    pub gold_response: String,
    pub condition: Option<Label>,
    pub response: String,
    /// Teacher-forced NLL of the gold response under `condition`.
    pub nll: f64,
    pub nll_tokens: usize,
}

/// 0-based index of the last listener turn.
pub fn final_listener_position(d: &Dialogue) -> usize {
    let n = d.turns.len();
    if n.is_multiple_of(2) {
        n - 1
    } else {
        n - 2
    }
}

/// Predict a condition and generate a response at the final listener turn
/// of every test dialogue.
pub fn run_pipeline<R: Rng + ?Sized>(
    method: Method,
    test: &Corpus,
    models: &Models,
    decode: DecodeMode,
    rng: &mut R,
) -> Result<Vec<PipelineRow>> {
    models.check(method)?;
    let generator = models.generator_for(method)?;
    let mut rows = Vec::with_capacity(test.len());
    for d in &test.dialogues {
        let i = final_listener_position(d);
        let history = &d.turns[..i];
        let gold = &d.turns[i];
        let condition = predict_condition(method, models, history, gold.label, rng)?;
        let context = history_before(&d.turns, i, generator.config.k);
        let turns: Vec<ContextTurn> = context.iter().map(Into::into).collect();
        let ctx = generator.encode(&turns)?;
        let response = generator.generate(&ctx, condition, decode, rng)?;
        let (nll, nll_tokens) = generator.response_nll(&ctx, &generator.encode_response(&gold.text), condition)?;
        rows.push(PipelineRow {
            dialogue_id: d.id.clone(),
            method,
            context: context.to_vec(),
            gold_label: gold.label,
            gold_response: gold.text.clone(),
            condition,
            response,
            nll,
            nll_tokens,
        });
    }
    Ok(rows)
}

pub fn scored_rows(rows: &[PipelineRow]) -> Vec<ScoredRow> {
    rows.iter()
        .map(|r| ScoredRow {
            predicted: if r.method.predicts() { r.condition } else { None },
            gold_label: r.gold_label,
            response_tokens: tokenize(&r.response),
            gold_tokens: tokenize(&r.gold_response),
            nll: r.nll,
            nll_tokens: r.nll_tokens,
        })
        .collect()
}

/// One report row per method, in the order given.
pub fn evaluate_methods(runs: &[(Method, Vec<PipelineRow>)], emb: &EmbeddingTable) -> Result<EvalReport> {
    let methods = runs
        .iter()
        .map(|(m, rows)| evaluate_run(m.title(), &scored_rows(rows), emb))
        .collect::<Result<_>>()?;
    Ok(EvalReport { methods })
}

/// Rows as CSV: dialogue id, method, condition label (empty when
/// unconditioned), response text.
pub fn rows_to_csv(rows: &[PipelineRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CoreError::InvalidArgument(e.to_string());
    w.write_record(["dialogue_id", "method", "condition", "response"]).map_err(io)?;
    for r in rows {
        let cond = r.condition.map(|l| l.name()).unwrap_or("");
        w.write_record([r.dialogue_id.as_str(), r.method.key(), cond, r.response.as_str()]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CoreError::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

/// Embeddings for the extrema metric taken from a generator's token table.
pub fn embeddings_from_generator(model: &GeneratorModel) -> EmbeddingTable {
    let table = model.token_embedding();
    let mut emb = EmbeddingTable::new(table.cols).expect("d_model >= 1");
    for (id, token) in model.vocab.tokens().iter().enumerate().skip(crate::tokenizer::NUM_RESERVED) {
        emb.insert(token.clone(), table.row(id).to_vec()).expect("finite parameters");
    }
    emb
}
