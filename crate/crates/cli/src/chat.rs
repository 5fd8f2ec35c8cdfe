//! Interactive session: every user line is a speaker turn, answered with
//! `[label] response`.
//!
//! `:why` explains the last label choice and `:quit` ends the session.
//! The label of a user turn is left unknown, typed by the user as
//! `Sad: i lost my dog`, or predicted from the turns before it.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use anyhow::{bail, Result};
use empathic::corpus::Role;
use empathic::generator::{DecodeMode, GeneratorModel};
use empathic::pipeline::Method;
use empathic::policy_tree::{equal_sampling_candidates, predict_equally_sampled, BackoffLevel, PredictionContext};
use empathic::predictor::ContextTurn;
use empathic::rng::stage_rng;
use empathic::Label;
use rand_chacha::ChaCha8Rng;

use crate::commands::LoadedModels;
use crate::config::{parse_method, LabelMode, RunConfig};
use crate::{input_error, ChatArgs};

/// Shown instead of a label when the generator is unconditioned.
pub const NO_LABEL: &str = "[\u{2014}]";
/// Turns scanned for the most recent emotion by the equal-sampling rule.
const EMOTION_SCAN: usize = 3;
const TOP_LABELS: usize = 5;

#[derive(Debug, Clone)]
struct ChatTurn {
    text: String,
    label: Option<Label>,
}

pub struct Session<'m> {
    method: Method,
    label_mode: LabelMode,
    decode: DecodeMode,
    models: &'m LoadedModels,
    generator: &'m GeneratorModel,
    history: Vec<ChatTurn>,
    why: Option<String>,
    rng: ChaCha8Rng,
}

impl<'m> Session<'m> {
    pub fn new(method: Method, label_mode: LabelMode, decode: DecodeMode, models: &'m LoadedModels, seed: u64) -> Result<Self> {
        if method == Method::Gt {
            bail!(input_error("`gt` needs gold labels and cannot drive a chat"));
        }
        models.models().check(method)?;
        if label_mode == LabelMode::Predicted && models.predictor.is_none() {
            bail!(input_error("label mode `predicted` needs the predictor"));
        }
        let generator = if method == Method::EndToEnd { &models.end_to_end } else { &models.generator };
        Ok(Session {
            method,
            label_mode,
            decode,
            models,
            generator: generator.as_ref().expect("checked above"),
            history: Vec::new(),
            why: None,
            rng: stage_rng(seed, "chat"),
        })
    }

    /// Label context from the history: known labels of the last `k - 1`
    /// turns, and the last few turn labels for the equal-sampling rule.
    fn label_context(&self, k: usize) -> PredictionContext {
        let tail = |n: usize| &self.history[self.history.len().saturating_sub(n)..];
        PredictionContext {
            recent_labels: tail(k.saturating_sub(1)).iter().filter_map(|t| t.label).collect(),
            recent_turn_labels: tail(EMOTION_SCAN).iter().map(|t| t.label).collect(),
        }
    }

    fn context_turns(&self, k: usize) -> Vec<ContextTurn<'_>> {
        let start = self.history.len().saturating_sub(k);
        self.history[start..]
            .iter()
            .enumerate()
            .map(|(i, t)| ContextTurn { role: Role::at(start + i), text: &t.text, label: t.label })
            .collect()
    }

    /// Label for the user turn about to be added, from the turns before it.
    /// The opening turn has no history and stays unknown.
    fn label_user_turn(&self) -> Result<Option<Label>> {
        if self.history.is_empty() {
            return Ok(None);
        }
        let p = self.models.predictor.as_ref().expect("checked in Session::new");
        Ok(Some(p.predict_label(&p.encode(&self.context_turns(p.config.k))?)?))
    }

    fn predict(&mut self) -> Result<Option<Label>> {
        let mut why = String::new();
        if self.label_mode == LabelMode::Predicted {
            let user = self.history.last().and_then(|t| t.label).map_or("unknown", Label::name);
            writeln!(why, "user turn labeled {user} by the predictor")?;
        }
        let label = match self.method {
            Method::Gt => unreachable!("rejected in Session::new"),
            Method::EndToEnd => {
                why.push_str("unconditioned end-to-end model: no label is predicted\n");
                None
            }
            Method::Equal => {
                let ctx = self.label_context(self.generator.config.k);
                let candidates = equal_sampling_candidates(&ctx);
                let names: Vec<&str> = candidates.iter().map(|l| l.name()).collect();
                writeln!(why, "equal sampling over {} candidates: {}", candidates.len(), names.join(", "))?;
                Some(predict_equally_sampled(&ctx, &mut self.rng))
            }
            Method::DtArgmax | Method::DtSampled => {
                let tree = self.models.tree.as_ref().expect("checked in Session::new");
                let ctx = self.label_context(tree.k());
                let lookup = tree.lookup(&ctx)?;
                match lookup.level {
                    BackoffLevel::Suffix(n) => {
                        let prefix: Vec<&str> = lookup.prefix.iter().map(|l| l.name()).collect();
                        writeln!(why, "matched prefix [{}] (suffix of length {n})", prefix.join(", "))?;
                    }
                    BackoffLevel::Global => why.push_str("no prefix matched; global next-label distribution\n"),
                }
                for (l, count, p) in lookup.distribution() {
                    writeln!(why, "  {:<14} {count:>6}  {p:.4}", l.name())?;
                }
                // Decide from the lookup itself: with unknown user labels the
                // history can be empty, which only the global level answers.
                Some(if self.method == Method::DtArgmax {
                    let mut best: Option<(Label, u64)> = None;
                    for (l, count, _) in lookup.distribution() {
                        if best.is_none_or(|(_, c)| count > c) {
                            best = Some((l, count));
                        }
                    }
                    best.expect("lookup nodes are non-empty").0
                } else {
                    tree.sample_node(lookup.node, &mut self.rng)
                })
            }
            Method::Neural => {
                let p = self.models.predictor.as_ref().expect("checked in Session::new");
                let probs = p.forward(&p.encode(&self.context_turns(p.config.k))?, None)?;
                let mut ranked: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                why.push_str("neural predictor, most probable labels:\n");
                for &(id, prob) in ranked.iter().take(TOP_LABELS) {
                    writeln!(why, "  {:<14} {prob:.4}", Label::from_id(id).expect("41 outputs").name())?;
                }
                Label::from_id(ranked[0].0)
            }
        };
        self.why = Some(why);
        Ok(label)
    }

    /// Handle one input line. Returns `false` when the session should end.
    pub fn handle<W: Write>(&mut self, line: &str, out: &mut W) -> Result<bool> {
        let line = line.trim();
        match line {
            "" => return Ok(true),
            ":quit" => return Ok(false),
            ":why" => {
                write!(out, "{}", self.why.as_deref().unwrap_or("nothing predicted yet\n"))?;
                return Ok(true);
            }
            _ if line.starts_with(':') => {
                writeln!(out, "unknown command `{line}` (try :why or :quit)")?;
                return Ok(true);
            }
            _ => {}
        }
        let (label, text) = match self.label_mode {
            LabelMode::Unknown => (None, line),
            LabelMode::Predicted => (self.label_user_turn()?, line),
            LabelMode::User => {
                match line.split_once(':').and_then(|(l, t)| Label::parse(l.trim()).map(|l| (l, t.trim()))) {
                    Some((l, t)) => (Some(l), t),
                    None => {
                        writeln!(out, "expected `Label: text`, e.g. `Sad: i lost my dog`")?;
                        return Ok(true);
                    }
                }
            }
        };
        self.history.push(ChatTurn { text: text.to_string(), label });
        let condition = self.predict()?;
        let g = self.generator;
        let ctx = g.encode(&self.context_turns(g.config.k))?;
        let response = g.generate(&ctx, condition, self.decode, &mut self.rng)?;
        match condition {
            Some(l) => writeln!(out, "[{}] {response}", l.name())?,
            None => writeln!(out, "{NO_LABEL} {response}")?,
        }
        self.history.push(ChatTurn { text: response, label: condition });
        Ok(true)
    }
}

pub fn run<R: BufRead, W: Write>(cfg: RunConfig, args: &ChatArgs, input: R, mut out: W) -> Result<()> {
    let method = parse_method(args.method.as_deref().unwrap_or(&cfg.chat.method))?;
    let decode = if args.greedy { DecodeMode::Greedy } else { cfg.chat.decode };
    let label_mode = args.label_mode.unwrap_or(cfg.chat.label_mode);
    let mut models = LoadedModels::load(&cfg, &[method])?;
    if label_mode == LabelMode::Predicted {
        models.ensure_predictor(&cfg)?;
    }
    let mut session = Session::new(method, label_mode, decode, &models, cfg.seed)?;
    for line in input.lines() {
        if !session.handle(&line?, &mut out)? {
            break;
        }
        out.flush()?;
    }
    Ok(())
}
