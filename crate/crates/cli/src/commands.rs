use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use empathic::corpus::{extract_windows, load_corpus, split_corpus, Corpus, CorpusFormat, IngestReport};
use empathic::generator::{generator_examples, ConditionMode, GeneratorConfig, GeneratorModel};
use empathic::metrics::EmbeddingTable;
use empathic::nn::train::{SplitName, TrainHistory};
use empathic::pipeline::{embeddings_from_generator, evaluate_methods, rows_to_csv, run_pipeline, Method, Models};
use empathic::policy_tree::PolicyTree;
use empathic::predictor::{predictor_examples, PredictorConfig, PredictorModel};
use empathic::rng::{derive_seed, stage_rng};
use empathic::tokenizer::{build_vocab, Vocab};
use empathic::Label;
use log::info;

use crate::artifacts::*;
use crate::config::{parse_method, RunConfig};
use crate::{input_error, ConditionArg, EvalArgs, ExportTreeArgs, FormatArg, IngestArgs, SplitArgs, TrainArgs, TrainMethod};

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Path of an artifact that must already exist; `hint` names the command
/// that produces it.
fn existing(cfg: &RunConfig, name: &str, hint: &str) -> Result<PathBuf> {
    let path = cfg.path(name);
    if !path.exists() {
        bail!(input_error(format!("{} not found (run `empathic {hint}` first)", path.display())));
    }
    Ok(path)
}

fn load_jsonl(path: &Path) -> Result<Corpus> {
    load_corpus(path, CorpusFormat::Jsonl).with_context(|| format!("reading {}", path.display()))
}

pub fn ingest(cfg: &RunConfig, args: &IngestArgs) -> Result<()> {
    let mut report = IngestReport::default();
    let mut dialogues = Vec::new();
    for path in &args.inputs {
        let format = match args.format {
            FormatArg::Auto => CorpusFormat::from_path(path),
            FormatArg::Jsonl => CorpusFormat::Jsonl,
            FormatArg::Csv => CorpusFormat::Csv,
        };
        let corpus = load_corpus(path, format).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        report.push(&name, &corpus);
        dialogues.extend(corpus.dialogues);
    }
    let mut seen = BTreeSet::new();
    for d in &dialogues {
        if !seen.insert(d.id.as_str()) {
            bail!(input_error(format!("dialogue id `{}` appears more than once", d.id)));
        }
    }
    let corpus = Corpus::new(dialogues);
    if args.inputs.len() > 1 {
        report.push("Total", &corpus);
    }
    ensure_dir(&cfg.out_dir)?;
    let out = cfg.path(CORPUS);
    corpus.save_jsonl(&out)?;
    print!("{report}");
    println!("wrote {} dialogues to {}", corpus.len(), out.display());
    Ok(())
}

pub fn split(cfg: &RunConfig, args: &SplitArgs) -> Result<()> {
    let input = match &args.input {
        Some(p) => p.clone(),
        None => existing(cfg, CORPUS, "ingest")?,
    };
    let corpus = load_jsonl(&input)?;
    let split = split_corpus(&corpus, cfg.split.ratios(), derive_seed(cfg.seed, "split"))?;
    ensure_dir(&cfg.out_dir)?;
    for (name, part) in [(TRAIN, &split.train), (VAL, &split.val), (TEST, &split.test)] {
        part.save_jsonl(&cfg.path(name))?;
    }
    let vocab = build_vocab(&split.train, cfg.vocab.min_freq, cfg.vocab.max_size)?;
    vocab.save(&cfg.path(VOCAB))?;
    println!(
        "split {} dialogues: train {}, val {}, test {}; vocabulary {} tokens",
        corpus.len(),
        split.train.len(),
        split.val.len(),
        split.test.len(),
        vocab.len()
    );
    Ok(())
}

fn load_vocab(cfg: &RunConfig, train: &Corpus) -> Result<Vocab> {
    let path = cfg.path(VOCAB);
    if path.exists() {
        return Ok(Vocab::load(&path)?);
    }
    info!("{} missing; building it from the training split", path.display());
    let vocab = build_vocab(train, cfg.vocab.min_freq, cfg.vocab.max_size)?;
    vocab.save(&path)?;
    Ok(vocab)
}

fn report_history(history: &TrainHistory) {
    let first = |split| history.records.iter().find(|r| r.epoch == 0 && r.split == split);
    if let Some(r) = first(SplitName::Train) {
        print!("epoch 0: train loss {:.6}", r.loss);
        match first(SplitName::Val) {
            Some(v) => println!(", val loss {:.6}", v.loss),
            None => println!(),
        }
    }
    if let Some(last) = history.last(SplitName::Train).filter(|r| r.epoch > 0) {
        println!("epoch {}: train loss {:.6}", last.epoch, last.loss);
    }
    println!("best validation epoch: {}", history.best_epoch);
}

/// Optimization settings from `new`, architecture from `old`.
fn predictor_training(old: &PredictorConfig, new: &PredictorConfig) -> PredictorConfig {
    PredictorConfig {
        dropout: new.dropout,
        lr: new.lr,
        beta1: new.beta1,
        beta2: new.beta2,
        eps: new.eps,
        batch_size: new.batch_size,
        epochs: new.epochs,
        clip_norm: new.clip_norm,
        seed: new.seed,
        ..old.clone()
    }
}

fn generator_training(old: &GeneratorConfig, new: &GeneratorConfig) -> GeneratorConfig {
    GeneratorConfig {
        dropout: new.dropout,
        decode: new.decode,
        lr: new.lr,
        beta1: new.beta1,
        beta2: new.beta2,
        eps: new.eps,
        batch_size: new.batch_size,
        epochs: new.epochs,
        clip_norm: new.clip_norm,
        seed: new.seed,
        ..old.clone()
    }
}

pub fn train(mut cfg: RunConfig, args: &TrainArgs) -> Result<()> {
    if let Some(e) = args.epochs {
        cfg.predictor.epochs = e;
        cfg.generator.epochs = e;
    }
    let train = load_jsonl(&existing(&cfg, TRAIN, "split")?)?;
    match args.method {
        TrainMethod::Dt => {
            let windows = extract_windows(&train, cfg.tree.k)?;
            let tree = PolicyTree::build(&windows, cfg.tree.k)?;
            let out = cfg.path(TREE);
            tree.save(&out)?;
            println!("policy tree from {} windows written to {}", windows.len(), out.display());
            Ok(())
        }
        TrainMethod::Neural => {
            let val = load_jsonl(&existing(&cfg, VAL, "split")?)?;
            let mut model = match &args.init_from {
                Some(p) => {
                    let mut m = PredictorModel::load(p).with_context(|| format!("loading {}", p.display()))?;
                    m.config = predictor_training(&m.config, &cfg.predictor);
                    m.config.validate()?;
                    m
                }
                None => PredictorModel::new(cfg.predictor.clone(), load_vocab(&cfg, &train)?)?,
            };
            let history = model.train(&predictor_examples(&train, &model)?, &predictor_examples(&val, &model)?)?;
            model.save(&cfg.path(PREDICTOR))?;
            write(&cfg.path(PREDICTOR_HISTORY), &history.to_csv())?;
            report_history(&history);
            println!("predictor written to {}", cfg.path(PREDICTOR).display());
            Ok(())
        }
        TrainMethod::Generator => {
            let val = load_jsonl(&existing(&cfg, VAL, "split")?)?;
            let requested = args.condition_mode.map(|c| match c {
                ConditionArg::Gt => ConditionMode::GroundTruth,
                ConditionArg::None => ConditionMode::None,
            });
            let mut model = match &args.init_from {
                Some(p) => {
                    let mut m = GeneratorModel::load(p).with_context(|| format!("loading {}", p.display()))?;
                    if requested.is_some_and(|c| c != m.config.condition) {
                        bail!(input_error(format!(
                            "{} was trained with condition mode {:?}; it cannot be continued as {:?}",
                            p.display(),
                            m.config.condition,
                            requested.unwrap()
                        )));
                    }
                    m.config = generator_training(&m.config, &cfg.generator);
                    m.config.validate()?;
                    m
                }
                None => {
                    let mut g = cfg.generator.clone();
                    if let Some(c) = requested {
                        g.condition = c;
                    }
                    GeneratorModel::new(g, load_vocab(&cfg, &train)?)?
                }
            };
            let (ckpt, hist) = if model.is_conditioned() { (GENERATOR, GENERATOR_HISTORY) } else { (END_TO_END, END_TO_END_HISTORY) };
            let history = model.train(&generator_examples(&train, &model)?, &generator_examples(&val, &model)?)?;
            model.save(&cfg.path(ckpt))?;
            write(&cfg.path(hist), &history.to_csv())?;
            report_history(&history);
            println!("generator written to {}", cfg.path(ckpt).display());
            Ok(())
        }
    }
}

/// Artifacts a method needs besides the test split.
fn requirements(method: Method) -> Vec<(&'static str, &'static str)> {
    let mut req = vec![if method == Method::EndToEnd {
        (END_TO_END, "train --method generator --condition-mode none")
    } else {
        (GENERATOR, "train --method generator")
    }];
    match method {
        Method::DtArgmax | Method::DtSampled => req.push((TREE, "train --method dt")),
        Method::Neural => req.push((PREDICTOR, "train --method neural")),
        _ => {}
    }
    req
}

/// Loaded models for a set of methods.
pub struct LoadedModels {
    pub tree: Option<PolicyTree>,
    pub predictor: Option<PredictorModel>,
    pub generator: Option<GeneratorModel>,
    pub end_to_end: Option<GeneratorModel>,
}

impl LoadedModels {
    pub fn load(cfg: &RunConfig, methods: &[Method]) -> Result<LoadedModels> {
        let mut needed = BTreeSet::new();
        for &m in methods {
            for (name, hint) in requirements(m) {
                let path = cfg.path(name);
                if !path.exists() {
                    bail!(input_error(format!(
                        "method `{}` needs {} (run `empathic {hint}`)",
                        m.key(),
                        path.display()
                    )));
                }
                needed.insert(name);
            }
        }
        let load_gen = |name| -> Result<Option<GeneratorModel>> {
            needed
                .contains(name)
                .then(|| GeneratorModel::load(&cfg.path(name)).with_context(|| format!("loading {name}")))
                .transpose()
        };
        Ok(LoadedModels {
            tree: needed
                .contains(TREE)
                .then(|| PolicyTree::load(&cfg.path(TREE)).map(|t| t.with_smoothing(cfg.tree.smoothing)))
                .transpose()?,
            predictor: needed.contains(PREDICTOR).then(|| PredictorModel::load(&cfg.path(PREDICTOR))).transpose()?,
            generator: load_gen(GENERATOR)?,
            end_to_end: load_gen(END_TO_END)?,
        })
    }

    /// Load the predictor if no selected method needed it.
    pub fn ensure_predictor(&mut self, cfg: &RunConfig) -> Result<()> {
        if self.predictor.is_none() {
            self.predictor = Some(PredictorModel::load(&existing(cfg, PREDICTOR, "train --method neural")?)?);
        }
        Ok(())
    }

    pub fn models(&self) -> Models<'_> {
        Models {
            tree: self.tree.as_ref(),
            predictor: self.predictor.as_ref(),
            generator: self.generator.as_ref(),
            end_to_end: self.end_to_end.as_ref(),
        }
    }
}

pub fn eval(cfg: RunConfig, args: &EvalArgs) -> Result<()> {
    let methods = match &args.methods {
        Some(keys) => keys.iter().map(|k| parse_method(k.trim())).collect::<Result<Vec<_>>>()?,
        None => cfg.eval.methods()?,
    };
    if methods.is_empty() {
        bail!(input_error("no methods selected"));
    }
    let test = load_jsonl(&existing(&cfg, TEST, "split")?)?;
    if test.is_empty() {
        bail!(input_error("the test split is empty; nothing to evaluate"));
    }
    let loaded = LoadedModels::load(&cfg, &methods)?;
    let models = loaded.models();
    let emb = match args.embeddings.as_ref().or(cfg.eval.embeddings.as_ref()) {
        Some(p) => EmbeddingTable::load(p)?,
        None => embeddings_from_generator(
            models.generator.or(models.end_to_end).expect("every method needs a generator"),
        ),
    };
    let mut runs = Vec::with_capacity(methods.len());
    for &m in &methods {
        let mut rng = stage_rng(cfg.seed, &format!("eval/{}", m.key()));
        let rows = run_pipeline(m, &test, &models, cfg.eval.decode, &mut rng)?;
        info!("{}: {} responses", m.key(), rows.len());
        runs.push((m, rows));
    }
    let report = evaluate_methods(&runs, &emb)?;
    write(&cfg.path(REPORT), &report.to_csv())?;
    let all: Vec<_> = runs.into_iter().flat_map(|(_, rows)| rows).collect();
    write(&cfg.path(RESPONSES), &rows_to_csv(&all)?)?;
    print!("{report}");
    println!("report written to {}", cfg.path(REPORT).display());
    Ok(())
}

pub fn parse_label(name: &str) -> Result<Label> {
    Label::parse(name).ok_or_else(|| {
        let valid: Vec<&str> = Label::all().map(Label::name).collect();
        input_error(format!("unknown label `{name}`; valid labels: {}", valid.join(", ")))
    })
}

pub fn export_tree(cfg: &RunConfig, args: &ExportTreeArgs) -> Result<()> {
    let root = parse_label(&args.root)?;
    let tree = PolicyTree::load(&existing(cfg, TREE, "train --method dt")?)?;
    let dot = tree.export_dot(root, args.max_depth, args.min_prob)?;
    let out = args.output.clone().unwrap_or_else(|| cfg.path(DOT));
    write(&out, &dot)?;
    println!("tree rooted at {} written to {}", root.name(), out.display());
    Ok(())
}
