//! Label-conditioned encoder-decoder response generator.
//!
//! The encoder is the predictor's input representation. The decoder sees
//! the condition label either as a pseudo-token prepended to its input
//! (the default) or added to every input embedding. With conditioning
//! switched off the same network is the unconditioned end-to-end baseline.
//! Encoder and decoder share the token embedding table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{CoreError, Result};
use crate::label::{Label, NUM_LABELS};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::gradcheck::{check_gradients, GradCheckReport};
use crate::nn::layers::{DecoderLayer, LayerNorm, Linear};
use crate::nn::train::{self, Objective, Stats, TrainHistory, TrainOptions};
use crate::nn::{AdamConfig, Grads, Graph, Init, NodeId, ParamId, ParamStore, Tensor};
use crate::predictor::{
    argmax, encode_context, history_before, listener_positions, validate_dims, validate_rates, ContextEncoder,
    ContextTurn, EncodedContext,
};
use crate::rng::derive_seed;
use crate::tokenizer::{Vocab, BOS, DEFAULT_MAX_TOKENS, EOS, NUM_RESERVED};

pub const CHECKPOINT_KIND: &str = "generator";
pub const DEFAULT_MAX_DECODE_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    TopK { k: usize, temperature: f64 },
}

impl DecodeMode {
    /// Sampling setting used for interactive demos.
    pub const DEMO: DecodeMode = DecodeMode::TopK { k: 5, temperature: 0.7 };
}

/// Where the condition label comes from. Training accepts only
/// `GroundTruth` (teacher-forced labels) and `None` (unconditioned);
/// `Predicted` marks a conditioned model driven by a predictor at
/// inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    GroundTruth,
    Predicted,
    None,
}

/// How the condition embedding enters the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// One extra decoder position in front of `<bos>`.
    Prefix,
    /// Added to the embedding of every decoder input token.
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_dec_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub max_tokens: usize,
    pub k: usize,
    pub max_decode_len: usize,
    pub decode: DecodeMode,
    pub condition: ConditionMode,
    pub injection: Injection,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            d_model: 64,
            n_layers: 2,
            n_dec_layers: 2,
            n_heads: 2,
            dropout: 0.1,
            max_tokens: DEFAULT_MAX_TOKENS,
            k: 4,
            max_decode_len: DEFAULT_MAX_DECODE_LEN,
            decode: DecodeMode::Greedy,
            condition: ConditionMode::GroundTruth,
            injection: Injection::Prefix,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            batch_size: 16,
            epochs: 10,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        validate_dims(self.d_model, self.n_heads, self.max_tokens, self.k)?;
        validate_rates(self.dropout, self.lr, self.beta1, self.beta2)?;
        if self.max_decode_len == 0 {
            return Err(CoreError::InvalidArgument("max_decode_len must be at least 1".into()));
        }
        validate_decode(self.decode)
    }

    pub fn is_conditioned(&self) -> bool {
        self.condition != ConditionMode::None
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            dropout: self.dropout,
            clip_norm: self.clip_norm,
            seed: derive_seed(self.seed, "generator/train"),
        }
    }
}

fn validate_decode(mode: DecodeMode) -> Result<()> {
    match mode {
        DecodeMode::TopK { k: 0, .. } => Err(CoreError::InvalidArgument("top_k k must be at least 1".into())),
        DecodeMode::TopK { temperature, .. } if !(temperature > 0.0 && temperature.is_finite()) => Err(
            CoreError::InvalidArgument(format!("temperature must be positive, got {temperature}")),
        ),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone)]
struct GeneratorLayout {
    encoder: ContextEncoder,
    cond_emb: ParamId,
    dec_pos: ParamId,
    dec_ln: LayerNorm,
    layers: Vec<DecoderLayer>,
    out: Linear,
    injection: Injection,
}

impl GeneratorLayout {
    fn new(cfg: &GeneratorConfig, vocab_size: usize, store: &mut ParamStore) -> GeneratorLayout {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "generator/init"));
        let d = cfg.d_model;
        let encoder = ContextEncoder::new(store, "encoder", vocab_size, cfg.max_tokens, d, cfg.n_layers, cfg.n_heads, &mut rng);
        GeneratorLayout {
            encoder,
            cond_emb: store.add("condition_emb", NUM_LABELS, d, Init::Uniform(0.1), &mut rng),
            // Prefix slot + `<bos>` + up to max_decode_len - 1 generated tokens.
            dec_pos: store.add("decoder.pos_emb", cfg.max_decode_len + 1, d, Init::Uniform(0.1), &mut rng),
            dec_ln: LayerNorm::new(store, "decoder.emb_ln", d, &mut rng),
            layers: (0..cfg.n_dec_layers)
                .map(|i| DecoderLayer::new(store, &format!("decoder.layer{i}"), d, cfg.n_heads, &mut rng))
                .collect(),
            out: Linear::new(store, "decoder.out", d, vocab_size, &mut rng),
            injection: cfg.injection,
        }
    }

    /// Next-token logits for every decoder input position (`inputs` starts
    /// with `<bos>`).
    fn logits(&self, g: &mut Graph, memory: NodeId, inputs: &[usize], condition: Option<Label>) -> NodeId {
        let tok_table = g.param(self.encoder.tok_emb);
        let pos_table = g.param(self.dec_pos);
        let mut x = g.gather(tok_table, inputs);
        let prefix = condition.is_some() && self.injection == Injection::Prefix;
        let offset = usize::from(prefix);
        let pos = g.gather(pos_table, &(offset..offset + inputs.len()).collect::<Vec<_>>());
        x = g.add(x, pos);
        if let Some(label) = condition {
            let cond_table = g.param(self.cond_emb);
            let c = g.gather(cond_table, &[label.id()]);
            x = match self.injection {
                Injection::Add => g.add_row(x, c),
                Injection::Prefix => {
                    let p0 = g.gather(pos_table, &[0]);
                    let head = g.add(c, p0);
                    g.concat_rows(&[head, x])
                }
            };
        }
        let x = self.dec_ln.forward(g, x);
        let mut x = g.dropout(x);
        for layer in &self.layers {
            x = layer.forward(g, x, memory);
        }
        if prefix {
            // The prefix slot predicts nothing.
            x = g.gather(x, &(1..=inputs.len()).collect::<Vec<_>>());
        }
        self.out.forward(g, x)
    }
}

/// One (context, gold response, gold response label) triple. `response`
/// holds token ids without `<bos>`/`<eos>`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorExample {
    pub ctx: EncodedContext,
    pub response: Vec<usize>,
    pub label: Label,
}

fn teacher_forcing(response: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut inputs = Vec::with_capacity(response.len() + 1);
    inputs.push(BOS);
    inputs.extend_from_slice(response);
    let mut targets = response.to_vec();
    targets.push(EOS);
    (inputs, targets)
}

struct GeneratorObjective<'a> {
    layout: &'a GeneratorLayout,
    conditioned: bool,
    dropout: f64,
}

impl GeneratorObjective<'_> {
    fn condition(&self, ex: &GeneratorExample) -> Option<Label> {
        self.conditioned.then_some(ex.label)
    }
}

impl Objective for GeneratorObjective<'_> {
    type Example = GeneratorExample;

    fn run(
        &self,
        params: &ParamStore,
        ex: &GeneratorExample,
        dropout_rng: Option<ChaCha8Rng>,
        grads: Option<&mut Grads>,
    ) -> Stats {
        let mut g = match dropout_rng {
            Some(rng) => Graph::training(params, self.dropout, rng),
            None => Graph::new(params),
        };
        let memory = self.layout.encoder.forward(&mut g, &ex.ctx);
        let (inputs, targets) = teacher_forcing(&ex.response);
        let logits = self.layout.logits(&mut g, memory, &inputs, self.condition(ex));
        let values = g.value(logits);
        let correct = (0..values.rows).filter(|&r| argmax(values.row(r)) == targets[r]).count();
        let loss = g.cross_entropy(logits, &targets);
        if let Some(grads) = grads {
            g.backward_into(loss, grads);
        }
        Stats {
            loss: g.value(loss).data[0],
            examples: 1,
            correct,
            predictions: targets.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub config: GeneratorConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    /// Optimization epochs applied so far; generation requires at least one.
    pub epochs_trained: usize,
    layout: GeneratorLayout,
}

impl GeneratorModel {
    pub fn new(config: GeneratorConfig, vocab: Vocab) -> Result<GeneratorModel> {
        config.validate()?;
        let mut params = ParamStore::new();
        let layout = GeneratorLayout::new(&config, vocab.len(), &mut params);
        Ok(GeneratorModel {
            config,
            vocab,
            params,
            epochs_trained: 0,
            layout,
        })
    }

    pub fn is_conditioned(&self) -> bool {
        self.config.is_conditioned()
    }

    pub fn encode(&self, turns: &[ContextTurn]) -> Result<EncodedContext> {
        encode_context(turns, &self.vocab, self.config.k, self.config.max_tokens)
    }

    /// Token ids of a gold response, truncated so that it fits the decoder
    /// together with `<eos>`.
    pub fn encode_response(&self, text: &str) -> Vec<usize> {
        self.vocab.encode(text, self.config.max_decode_len - 1)
    }

    pub fn condition_param(&self) -> ParamId {
        self.layout.cond_emb
    }

    pub fn token_embedding(&self) -> &Tensor {
        self.params.get(self.layout.encoder.tok_emb)
    }

    fn objective(&self, dropout: f64) -> GeneratorObjective<'_> {
        GeneratorObjective {
            layout: &self.layout,
            conditioned: self.is_conditioned(),
            dropout,
        }
    }

    fn check_example(&self, ex: &GeneratorExample) -> Result<()> {
        self.layout.encoder.check(&ex.ctx)?;
        if ex.response.len() + 1 > self.config.max_decode_len {
            return Err(CoreError::InvalidArgument(format!(
                "response of {} tokens exceeds max_decode_len {}",
                ex.response.len(),
                self.config.max_decode_len
            )));
        }
        if let Some(&id) = ex.response.iter().find(|&&t| t >= self.vocab.len()) {
            return Err(CoreError::TokenOutOfRange { id, size: self.vocab.len() });
        }
        Ok(())
    }

    fn check_condition(&self, condition: Option<Label>) -> Result<()> {
        match (self.is_conditioned(), condition) {
            (true, None) => Err(CoreError::MissingCondition),
            (false, Some(l)) => Err(CoreError::InvalidArgument(format!(
                "unconditioned generator cannot take condition `{l}`"
            ))),
            _ => Ok(()),
        }
    }

    /// Teacher-forced training with the gold label as condition.
    pub fn train(&mut self, train: &[GeneratorExample], val: &[GeneratorExample]) -> Result<TrainHistory> {
        if self.config.condition == ConditionMode::Predicted {
            return Err(CoreError::InvalidArgument(
                "generator training takes ground_truth or none condition mode".into(),
            ));
        }
        for ex in train.iter().chain(val) {
            self.check_example(ex)?;
        }
        let opts = self.config.train_options();
        let obj = GeneratorObjective {
            layout: &self.layout,
            conditioned: self.is_conditioned(),
            dropout: self.config.dropout,
        };
        let history = train::train(&obj, &mut self.params, train, val, &opts)?;
        self.epochs_trained += opts.epochs;
        Ok(history)
    }

    /// Mean per-example teacher-forced loss and token accuracy, no dropout.
    pub fn evaluate(&self, examples: &[GeneratorExample]) -> Stats {
        train::evaluate(&self.objective(0.0), &self.params, examples)
    }

    /// Teacher-forced logits (one row per target token) and the mean
    /// cross-entropy over the targets.
    pub fn teacher_forced(&self, ex: &GeneratorExample) -> Result<(Tensor, f64)> {
        self.check_example(ex)?;
        let mut g = Graph::new(&self.params);
        let memory = self.layout.encoder.forward(&mut g, &ex.ctx);
        let (inputs, targets) = teacher_forcing(&ex.response);
        let cond = self.is_conditioned().then_some(ex.label);
        let logits = self.layout.logits(&mut g, memory, &inputs, cond);
        let loss = g.cross_entropy(logits, &targets);
        Ok((g.value(logits).clone(), g.value(loss).data[0]))
    }

    /// Summed negative log-likelihood of `response` (plus `<eos>`) and the
    /// number of scored tokens.
    pub fn response_nll(&self, ctx: &EncodedContext, response: &[usize], condition: Option<Label>) -> Result<(f64, usize)> {
        self.check_condition(condition)?;
        let ex = GeneratorExample {
            ctx: ctx.clone(),
            response: response.to_vec(),
            label: condition.unwrap_or(Label::NEUTRAL),
        };
        self.check_example(&ex)?;
        let mut g = Graph::new(&self.params);
        let memory = self.layout.encoder.forward(&mut g, ctx);
        let (inputs, targets) = teacher_forcing(response);
        let logits = self.layout.logits(&mut g, memory, &inputs, condition);
        let loss = g.cross_entropy(logits, &targets);
        Ok((g.value(loss).data[0] * targets.len() as f64, targets.len()))
    }

    /// `exp` of the mean token negative log-likelihood over the gold
    /// responses, conditioning on each example's gold label.
    pub fn perplexity(&self, examples: &[GeneratorExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(CoreError::Empty("perplexity needs at least one example".into()));
        }
        let mut nll = 0.0;
        let mut count = 0;
        for ex in examples {
            let cond = self.is_conditioned().then_some(ex.label);
            let (s, n) = self.response_nll(&ex.ctx, &ex.response, cond)?;
            nll += s;
            count += n;
        }
        Ok((nll / count as f64).exp())
    }

    /// Encoder states for a context, computed once per generation.
    fn memory(&self, ctx: &EncodedContext) -> Tensor {
        let mut g = Graph::new(&self.params);
        let m = self.layout.encoder.forward(&mut g, ctx);
        g.value(m).clone()
    }

    /// Autoregressive decode until `<eos>` or `max_decode_len` tokens.
    /// Returns token ids without the final `<eos>`.
    pub fn generate_ids<R: Rng + ?Sized>(
        &self,
        ctx: &EncodedContext,
        condition: Option<Label>,
        mode: DecodeMode,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if self.epochs_trained == 0 {
            return Err(CoreError::UntrainedModel);
        }
        self.check_condition(condition)?;
        validate_decode(mode)?;
        self.layout.encoder.check(ctx)?;
        let memory = self.memory(ctx);
        let mut inputs = vec![BOS];
        let mut out = Vec::new();
        for _ in 0..self.config.max_decode_len {
            let mut g = Graph::new(&self.params);
            let m = g.constant(memory.clone());
            let logits = self.layout.logits(&mut g, m, &inputs, condition);
            let values = g.value(logits);
            let last = values.row(values.rows - 1);
            let next = match mode {
                DecodeMode::Greedy => argmax(last),
                DecodeMode::TopK { k, temperature } => sample_top_k(last, k, temperature, rng),
            };
            if next == EOS {
                break;
            }
            out.push(next);
            inputs.push(next);
        }
        Ok(out)
    }

    pub fn generate<R: Rng + ?Sized>(
        &self,
        ctx: &EncodedContext,
        condition: Option<Label>,
        mode: DecodeMode,
        rng: &mut R,
    ) -> Result<String> {
        let ids = self.generate_ids(ctx, condition, mode, rng)?;
        self.vocab.decode(&ids)
    }

    /// Analytic gradients of one example's teacher-forced loss, no dropout.
    pub fn gradients(&self, example: &GeneratorExample) -> Result<Grads> {
        self.check_example(example)?;
        let mut grads = self.params.zero_grads();
        self.objective(0.0).run(&self.params, example, None, Some(&mut grads));
        Ok(grads)
    }

    pub fn grad_check(&self, example: &GeneratorExample, epsilon: f64, seed: u64) -> Result<GradCheckReport> {
        let analytic = self.gradients(example)?;
        let obj = self.objective(0.0);
        let loss = |p: &ParamStore| obj.run(p, example, None, None).loss;
        check_gradients(&self.params, &analytic, loss, epsilon, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Zero the output projection so every token gets probability 1/|V|.
    pub fn zero_output_layer(&mut self) {
        self.params.get_mut(self.layout.out.w).fill(0.0);
        if let Some(b) = self.layout.out.b {
            self.params.get_mut(b).fill(0.0);
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(CHECKPOINT_KIND, &self.config, self.vocab.tokens(), &self.params);
        ckpt.epochs_trained = self.epochs_trained;
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<GeneratorModel> {
        let config: GeneratorConfig = ckpt.config()?;
        let vocab = Vocab::with_words(ckpt.vocab.iter().skip(NUM_RESERVED))?;
        let mut model = GeneratorModel::new(config, vocab)?;
        ckpt.restore(&mut model.params)?;
        model.epochs_trained = ckpt.epochs_trained;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<GeneratorModel> {
        GeneratorModel::from_checkpoint(&Checkpoint::load(path, CHECKPOINT_KIND)?)
    }
}

/// Sample among the `k` highest logits (ties broken by lower id) after
/// dividing by `temperature`.
fn sample_top_k<R: Rng + ?Sized>(logits: &[f64], k: usize, temperature: f64, rng: &mut R) -> usize {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.truncate(k.max(1));
    let top = logits[order[0]];
    let weights: Vec<f64> = order.iter().map(|&i| ((logits[i] - top) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (&i, w) in order.iter().zip(&weights) {
        if u < *w {
            return i;
        }
        u -= w;
    }
    *order.last().expect("k >= 1")
}

/// One example per listener turn: the preceding turns, the turn's text
/// and its label.
pub fn generator_examples(corpus: &Corpus, model: &GeneratorModel) -> Result<Vec<GeneratorExample>> {
    let mut out = Vec::new();
    for d in &corpus.dialogues {
        for i in listener_positions(&d.turns) {
            let history: Vec<ContextTurn> = history_before(&d.turns, i, model.config.k).iter().map(Into::into).collect();
            out.push(GeneratorExample {
                ctx: model.encode(&history)?,
                response: model.encode_response(&d.turns[i].text),
                label: d.turns[i].label,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;

    fn vocab() -> Vocab {
        Vocab::with_words(["i", "am", "sorry", "sad", "great", "!", "that", "is"]).unwrap()
    }

    fn tiny(condition: ConditionMode) -> GeneratorConfig {
        GeneratorConfig {
            d_model: 8,
            n_layers: 1,
            n_dec_layers: 1,
            n_heads: 2,
            max_tokens: 16,
            max_decode_len: 8,
            dropout: 0.0,
            condition,
            ..Default::default()
        }
    }

    fn example(model: &GeneratorModel, response: &str, label: &str) -> GeneratorExample {
        let ctx = model
            .encode(&[ContextTurn {
                role: Role::Speaker,
                text: "i am sad",
                label: Label::parse("Sad"),
            }])
            .unwrap();
        GeneratorExample {
            ctx,
            response: model.encode_response(response),
            label: Label::parse(label).unwrap(),
        }
    }

    #[test]
    fn teacher_forcing_shifts_by_one() {
        let (inputs, targets) = teacher_forcing(&[5, 6]);
        assert_eq!(inputs, [BOS, 5, 6]);
        assert_eq!(targets, [5, 6, EOS]);
    }

    #[test]
    fn logits_have_one_row_per_target_in_both_injections() {
        for injection in [Injection::Prefix, Injection::Add] {
            let model = GeneratorModel::new(GeneratorConfig { injection, ..tiny(ConditionMode::GroundTruth) }, vocab()).unwrap();
            let ex = example(&model, "i am sorry", "Sympathizing");
            let (logits, loss) = model.teacher_forced(&ex).unwrap();
            assert_eq!(logits.shape(), (4, model.vocab.len()));
            assert!(loss.is_finite() && loss > 0.0);
        }
    }

    #[test]
    fn unconditioned_model_leaves_condition_table_untouched() {
        let model = GeneratorModel::new(tiny(ConditionMode::None), vocab()).unwrap();
        let g = model.gradients(&example(&model, "i am sorry", "Sympathizing")).unwrap();
        assert!(g.get(model.condition_param()).data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn conditioned_model_has_live_condition_row() {
        for injection in [Injection::Prefix, Injection::Add] {
            let model = GeneratorModel::new(GeneratorConfig { injection, ..tiny(ConditionMode::GroundTruth) }, vocab()).unwrap();
            let ex = example(&model, "i am sorry", "Sympathizing");
            let g = model.gradients(&ex).unwrap();
            let table = g.get(model.condition_param());
            assert!(table.row(ex.label.id()).iter().any(|&x| x != 0.0));
            let others: f64 = (0..NUM_LABELS).filter(|&r| r != ex.label.id()).flat_map(|r| table.row(r).to_vec()).map(f64::abs).sum();
            assert_eq!(others, 0.0);
        }
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let mut model = GeneratorModel::new(tiny(ConditionMode::GroundTruth), vocab()).unwrap();
        model.zero_output_layer();
        let ex = example(&model, "that is great !", "Agreeing");
        let ppl = model.perplexity(&[ex]).unwrap();
        assert!((ppl - model.vocab.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn generation_preconditions() {
        let mut model = GeneratorModel::new(tiny(ConditionMode::GroundTruth), vocab()).unwrap();
        let ex = example(&model, "i am sorry", "Sympathizing");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            model.generate(&ex.ctx, Some(ex.label), DecodeMode::Greedy, &mut rng),
            Err(CoreError::UntrainedModel)
        ));
        model.epochs_trained = 1;
        assert!(matches!(
            model.generate(&ex.ctx, None, DecodeMode::Greedy, &mut rng),
            Err(CoreError::MissingCondition)
        ));
        assert!(model
            .generate(&ex.ctx, Some(ex.label), DecodeMode::TopK { k: 0, temperature: 1.0 }, &mut rng)
            .is_err());
    }

    #[test]
    fn decode_length_cap() {
        let mut model = GeneratorModel::new(GeneratorConfig { max_decode_len: 1, ..tiny(ConditionMode::None) }, vocab()).unwrap();
        model.epochs_trained = 1;
        let ex = example(&model, "", "Sympathizing");
        let ids = model.generate_ids(&ex.ctx, None, DecodeMode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(ids.len() <= 1);
    }

    #[test]
    fn top_k_one_is_greedy() {
        let logits = [0.1, 2.0, 2.0, -1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(sample_top_k(&logits, 1, 0.7, &mut rng), 1);
        }
        for _ in 0..50 {
            assert!([1, 2].contains(&sample_top_k(&logits, 2, 1.0, &mut rng)));
        }
    }

    #[test]
    fn predicted_mode_cannot_train() {
        let mut model = GeneratorModel::new(tiny(ConditionMode::Predicted), vocab()).unwrap();
        let ex = example(&model, "i am sorry", "Sympathizing");
        assert!(model.train(&[ex], &[]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut model = GeneratorModel::new(tiny(ConditionMode::GroundTruth), vocab()).unwrap();
        model.epochs_trained = 3;
        let restored =
            GeneratorModel::from_checkpoint(&Checkpoint::from_text(&model.to_checkpoint().to_text(), CHECKPOINT_KIND).unwrap())
                .unwrap();
        assert_eq!(restored.params, model.params);
        assert_eq!(restored.epochs_trained, 3);
        assert_eq!(restored.config, model.config);
    }

    #[test]
    fn decode_mode_serde() {
        let m: DecodeMode = serde_json::from_str(r#"{"mode":"top_k","k":5,"temperature":0.7}"#).unwrap();
        assert_eq!(m, DecodeMode::DEMO);
    }
}
