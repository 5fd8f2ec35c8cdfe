//! Run configuration: a TOML file, then `--set key=value` overrides, then
//! dedicated command-line flags (applied by the caller).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use empathic::corpus::SplitRatios;
use empathic::generator::{DecodeMode, GeneratorConfig};
use empathic::pipeline::Method;
use empathic::predictor::PredictorConfig;
use empathic::tokenizer::{DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQ};
use serde::{Deserialize, Serialize};

use crate::input_error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every stage forks its own stream from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub split: SplitConfig,
    pub vocab: VocabConfig,
    pub tree: TreeConfig,
    pub predictor: PredictorConfig,
    pub generator: GeneratorConfig,
    pub eval: EvalConfig,
    pub chat: ChatConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("run"),
            split: SplitConfig::default(),
            vocab: VocabConfig::default(),
            tree: TreeConfig::default(),
            predictor: PredictorConfig::default(),
            generator: GeneratorConfig::default(),
            eval: EvalConfig::default(),
            chat: ChatConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        SplitConfig { train: r.train, val: r.val, test: r.test }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios { train: self.train, val: self.val, test: self.test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub min_freq: usize,
    pub max_size: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig { min_freq: DEFAULT_MIN_FREQ, max_size: DEFAULT_MAX_SIZE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    /// Window size in turns; even.
    pub k: usize,
    /// Additive smoothing of next-label counts; 0 keeps raw frequencies.
    pub smoothing: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { k: 4, smoothing: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Method keys, in report order.
    pub methods: Vec<String>,
    pub decode: DecodeMode,
    /// Word vectors for the extrema metric, one `word v1 v2 ...` per line.
    /// Without them the conditioned generator's token embeddings are used.
    pub embeddings: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            methods: Method::ALL.iter().map(|m| m.key().to_string()).collect(),
            decode: DecodeMode::Greedy,
            embeddings: None,
        }
    }
}

impl EvalConfig {
    pub fn methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| parse_method(m)).collect()
    }
}

/// Where the label of a user turn comes from in chat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Left unknown: the predictor sees its reserved unknown-label row and
    /// the tree sees only the known labels.
    #[default]
    Unknown,
    /// Typed by the user as a `Label: text` prefix.
    User,
    /// Predicted from the preceding turns by the neural predictor.
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatConfig {
    pub method: String,
    pub label_mode: LabelMode,
    pub decode: DecodeMode,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig { method: Method::Neural.key().to_string(), label_mode: LabelMode::Unknown, decode: DecodeMode::DEMO }
    }
}

pub fn parse_method(key: &str) -> Result<Method> {
    key.parse::<Method>().map_err(|e| input_error(e.to_string()))
}

impl RunConfig {
    /// Load `path` (if any) and apply `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| input_error(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| input_error(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| input_error(format!("override `{o}` is not of the form key=value")))?;
            set_dotted(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| input_error(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Propagate the global seed into the module configs.
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.seed = seed;
        self.predictor.seed = seed;
        self.generator.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.predictor.validate().context("predictor config")?;
        self.generator.validate().context("generator config")?;
        self.eval.methods()?;
        parse_method(&self.chat.method)?;
        Ok(())
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.out_dir.join(artifact)
    }
}

/// A TOML literal if `raw` parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| input_error(format!("empty override key `{key}`")))?;
    let mut current = table;
    for part in parts {
        let entry = current.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| input_error(format!("override `{key}`: `{part}` is not a table")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use empathic::generator::ConditionMode;

    #[test]
    fn defaults_without_file() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.eval.methods().unwrap(), Method::ALL);
    }

    #[test]
    fn overrides_apply_in_order() {
        let sets = [
            "predictor.d_model=32".to_string(),
            "generator.condition=none".to_string(),
            "eval.methods=[\"gt\", \"end_to_end\"]".to_string(),
            "predictor.d_model=16".to_string(),
            "out_dir=some/where".to_string(),
        ];
        let cfg = RunConfig::load(None, &sets).unwrap();
        assert_eq!(cfg.predictor.d_model, 16);
        assert_eq!(cfg.generator.condition, ConditionMode::None);
        assert_eq!(cfg.eval.methods().unwrap(), [Method::Gt, Method::EndToEnd]);
        assert_eq!(cfg.out_dir, PathBuf::from("some/where"));
        let cfg = RunConfig::load(None, &["chat.label_mode=predicted".into()]).unwrap();
        assert_eq!(cfg.chat.label_mode, LabelMode::Predicted);
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 5\n[tree]\nk = 6\n[eval.decode]\nmode = \"top_k\"\nk = 3\ntemperature = 0.5\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &["tree.k=2".into()]).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.tree.k, 2);
        assert_eq!(cfg.eval.decode, DecodeMode::TopK { k: 3, temperature: 0.5 });
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        assert!(RunConfig::load(None, &["predictor.d_modle=8".into()]).is_err());
        assert!(RunConfig::load(None, &["predictor.d_model=7".into()]).is_err());
        assert!(RunConfig::load(None, &["eval.methods=[\"oracle\"]".into()]).is_err());
        assert!(RunConfig::load(None, &["seed".into()]).is_err());
        assert!(RunConfig::load(None, &["seed.x=1".into()]).is_err());
    }

    #[test]
    fn seed_reaches_modules() {
        let cfg = RunConfig::default().with_seed(9);
        assert_eq!((cfg.predictor.seed, cfg.generator.seed), (9, 9));
    }
}
