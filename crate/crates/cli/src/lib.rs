//! Command-line pipeline: ingest, split, train, eval, export-tree and chat.
//!
//! Every artifact lives under one output directory with a fixed name, so
//! stages can be chained or rerun individually.

pub mod chat;
pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use empathic::CoreError;

pub use config::RunConfig;

/// Stable artifact file names.
pub mod artifacts {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const TRAIN: &str = "corpus.train.jsonl";
    pub const VAL: &str = "corpus.val.jsonl";
    pub const TEST: &str = "corpus.test.jsonl";
    pub const VOCAB: &str = "vocab.txt";
    pub const TREE: &str = "policy.tree";
    pub const PREDICTOR: &str = "predictor.ckpt";
    pub const PREDICTOR_HISTORY: &str = "predictor.history.csv";
    pub const GENERATOR: &str = "generator.ckpt";
    pub const GENERATOR_HISTORY: &str = "generator.history.csv";
    pub const END_TO_END: &str = "generator.e2e.ckpt";
    pub const END_TO_END_HISTORY: &str = "generator.e2e.history.csv";
    pub const REPORT: &str = "eval_report.csv";
    pub const RESPONSES: &str = "eval_responses.csv";
    pub const DOT: &str = "tree.dot";
}

/// Bad user input: a missing file, a malformed argument or config value.
/// Maps to exit status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// 2 for input errors anywhere in the chain, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return if core.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

#[derive(Debug, Parser)]
#[command(name = "empathic", version, about = "Empathetic response prediction and generation pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set predictor.d_model=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Directory holding every artifact.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read corpora and write the combined corpus with a size report.
    Ingest(IngestArgs),
    /// Shuffle the corpus into train/val/test and build the vocabulary.
    Split(SplitArgs),
    /// Build the policy tree or train a neural model.
    Train(TrainArgs),
    /// Run the selected methods on the test split and write the report.
    Eval(EvalArgs),
    /// Render part of the policy tree as Graphviz DOT.
    ExportTree(ExportTreeArgs),
    /// Talk to the trained pipeline on stdin.
    Chat(ChatArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Auto,
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus file (.jsonl or EmpatheticDialogues-style .csv). Repeatable.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Corpus to split; defaults to the ingested corpus.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMethod {
    /// Count-based policy tree.
    Dt,
    /// Neural label predictor.
    Neural,
    /// Response generator.
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    /// Condition on ground-truth labels.
    #[value(alias = "ground-truth")]
    Gt,
    /// Unconditioned end-to-end model.
    None,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub method: TrainMethod,
    /// Generator conditioning; `none` writes the end-to-end checkpoint.
    #[arg(long, value_enum)]
    pub condition_mode: Option<ConditionArg>,
    /// Continue training from this checkpoint (architecture and vocabulary
    /// come from it; optimization settings from the config).
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Comma-separated method keys: gt, end_to_end, equal, dt_argmax,
    /// dt_sampled, neural.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportTreeArgs {
    /// Opening label the rendered subtree starts from.
    #[arg(long)]
    pub root: String,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    /// Hide branches below this probability.
    #[arg(long, default_value_t = 0.0)]
    pub min_prob: f64,
    /// Defaults to tree.dot in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Label source: equal, dt_argmax, dt_sampled, neural or end_to_end.
    #[arg(long)]
    pub method: Option<String>,
    /// Source of user-turn labels; `user` expects `Label: text` lines.
    #[arg(long, value_enum)]
    pub label_mode: Option<config::LabelMode>,
    /// Decode greedily instead of top-k sampling.
    #[arg(long)]
    pub greedy: bool,
}

/// Resolve the configuration: file, then overrides, then flags.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(global.config.as_deref(), &global.overrides)?;
    if let Some(dir) = &global.out_dir {
        cfg.out_dir = dir.clone();
    }
    let seed = global.seed.unwrap_or(cfg.seed);
    Ok(cfg.with_seed(seed))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Ingest(a) => commands::ingest(&cfg, &a),
        Command::Split(a) => commands::split(&cfg, &a),
        Command::Train(a) => commands::train(cfg, &a),
        Command::Eval(a) => commands::eval(cfg, &a),
        Command::ExportTree(a) => commands::export_tree(&cfg, &a),
        Command::Chat(a) => {
            let stdin = std::io::stdin();
            chat::run(cfg, &a, stdin.lock(), std::io::stdout())
        }
    }
}
