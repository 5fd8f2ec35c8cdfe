//! Neural next-response label predictor.
//!
//! The previous turns are concatenated oldest to newest. Each token is
//! embedded as the sum of a word, position, turn-label and segment
//! (speaker/listener) embedding. A stack of transformer encoder layers
//! contextualizes the tokens, a learned-query attention pools them into one
//! vector, and a GELU hidden layer followed by a softmax scores the 41
//! labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Role, Turn};
use crate::error::{CoreError, Result};
use crate::label::{Label, NUM_LABELS};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::gradcheck::{check_gradients, GradCheckReport};
use crate::nn::layers::{EncoderLayer, LayerNorm, Linear};
use crate::nn::train::{self, Objective, Stats, TrainHistory, TrainOptions};
use crate::nn::{AdamConfig, Grads, Graph, Init, NodeId, ParamId, ParamStore};
use crate::rng::derive_seed;
use crate::tokenizer::{Vocab, DEFAULT_MAX_TOKENS, EOS};

/// Label-embedding row used for turns whose label is not known (for
/// example an incoming user turn at chat time).
pub const UNKNOWN_LABEL_ROW: usize = NUM_LABELS;
/// Rows in the input label-embedding table.
pub const LABEL_ROWS: usize = NUM_LABELS + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub max_tokens: usize,
    /// Number of previous turns fed to the model.
    pub k: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            dropout: 0.1,
            max_tokens: DEFAULT_MAX_TOKENS,
            k: 4,
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

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        validate_dims(self.d_model, self.n_heads, self.max_tokens, self.k)?;
        validate_rates(self.dropout, self.lr, self.beta1, self.beta2)
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
            seed: derive_seed(self.seed, "predictor/train"),
        }
    }
}

pub(crate) fn validate_dims(d_model: usize, n_heads: usize, max_tokens: usize, k: usize) -> Result<()> {
    if d_model == 0 || n_heads == 0 || !d_model.is_multiple_of(n_heads) {
        return Err(CoreError::InvalidArgument(format!(
            "d_model ({d_model}) must be a positive multiple of n_heads ({n_heads})"
        )));
    }
    if max_tokens == 0 || k == 0 {
        return Err(CoreError::InvalidArgument("max_tokens and k must be positive".into()));
    }
    Ok(())
}

pub(crate) fn validate_rates(dropout: f64, lr: f64, beta1: f64, beta2: f64) -> Result<()> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(CoreError::InvalidArgument(format!("dropout must be in [0, 1), got {dropout}")));
    }
    for (name, v) in [("lr", lr), ("beta1", beta1), ("beta2", beta2)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(CoreError::InvalidArgument(format!("{name} must be in (0, 1], got {v}")));
        }
    }
    Ok(())
}

/// One previous turn as model input. `label: None` selects the reserved
/// unknown-label embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextTurn<'a> {
    pub role: Role,
    pub text: &'a str,
    pub label: Option<Label>,
}

impl<'a> From<&'a Turn> for ContextTurn<'a> {
    fn from(t: &'a Turn) -> Self {
        ContextTurn {
            role: t.role,
            text: &t.text,
            label: Some(t.label),
        }
    }
}

/// Per-token model inputs; all four sequences have equal length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedContext {
    pub token_ids: Vec<usize>,
    pub position_ids: Vec<usize>,
    pub label_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
}

impl EncodedContext {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Concatenate up to `k` turns, oldest first, separated by the `<eos>`
/// token. The separator carries the label and segment of the turn it
/// closes. When the result exceeds `max_tokens`, the oldest tokens are
/// dropped.
pub fn encode_context(turns: &[ContextTurn], vocab: &Vocab, k: usize, max_tokens: usize) -> Result<EncodedContext> {
    if turns.is_empty() {
        return Err(CoreError::Empty("context needs at least one turn".into()));
    }
    if turns.len() > k {
        return Err(CoreError::InvalidArgument(format!(
            "context has {} turns, at most {k} allowed",
            turns.len()
        )));
    }
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let mut segments = Vec::new();
    for (i, turn) in turns.iter().enumerate() {
        let mut ids = vocab.encode(turn.text, usize::MAX);
        if i + 1 < turns.len() {
            ids.push(EOS);
        }
        let label = turn.label.map_or(UNKNOWN_LABEL_ROW, Label::id);
        labels.extend(std::iter::repeat_n(label, ids.len()));
        segments.extend(std::iter::repeat_n(turn.role.segment_id(), ids.len()));
        tokens.extend(ids);
    }
    let drop = tokens.len().saturating_sub(max_tokens);
    let token_ids = tokens.split_off(drop);
    Ok(EncodedContext {
        position_ids: (0..token_ids.len()).collect(),
        label_ids: labels.split_off(drop),
        segment_ids: segments.split_off(drop),
        token_ids,
    })
}

/// Word + position + label + segment embeddings followed by encoder layers.
#[derive(Debug, Clone)]
pub struct ContextEncoder {
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub label_emb: ParamId,
    pub seg_emb: ParamId,
    pub emb_ln: LayerNorm,
    pub layers: Vec<EncoderLayer>,
    vocab_size: usize,
    max_len: usize,
}

impl ContextEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        vocab_size: usize,
        max_len: usize,
        d: usize,
        n_layers: usize,
        n_heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> ContextEncoder {
        ContextEncoder {
            tok_emb: store.add(format!("{prefix}.tok_emb"), vocab_size, d, Init::Uniform(0.1), rng),
            pos_emb: store.add(format!("{prefix}.pos_emb"), max_len, d, Init::Uniform(0.1), rng),
            label_emb: store.add(format!("{prefix}.label_emb"), LABEL_ROWS, d, Init::Uniform(0.1), rng),
            seg_emb: store.add(format!("{prefix}.seg_emb"), 2, d, Init::Uniform(0.1), rng),
            emb_ln: LayerNorm::new(store, &format!("{prefix}.emb_ln"), d, rng),
            layers: (0..n_layers)
                .map(|i| EncoderLayer::new(store, &format!("{prefix}.layer{i}"), d, n_heads, rng))
                .collect(),
            vocab_size,
            max_len,
        }
    }

    pub fn check(&self, ctx: &EncodedContext) -> Result<()> {
        let n = ctx.len();
        if n == 0 || ctx.position_ids.len() != n || ctx.label_ids.len() != n || ctx.segment_ids.len() != n {
            return Err(CoreError::InvalidArgument("malformed encoded context".into()));
        }
        if let Some(&id) = ctx.token_ids.iter().find(|&&t| t >= self.vocab_size) {
            return Err(CoreError::TokenOutOfRange { id, size: self.vocab_size });
        }
        if ctx.position_ids.iter().any(|&p| p >= self.max_len)
            || ctx.label_ids.iter().any(|&l| l >= LABEL_ROWS)
            || ctx.segment_ids.iter().any(|&s| s >= 2)
        {
            return Err(CoreError::InvalidArgument("context id out of range".into()));
        }
        Ok(())
    }

    /// Token states, one row per input token.
    pub fn forward(&self, g: &mut Graph, ctx: &EncodedContext) -> NodeId {
        let tok = g.param(self.tok_emb);
        let pos = g.param(self.pos_emb);
        let lab = g.param(self.label_emb);
        let seg = g.param(self.seg_emb);
        let x = g.gather(tok, &ctx.token_ids);
        let p = g.gather(pos, &ctx.position_ids);
        let l = g.gather(lab, &ctx.label_ids);
        let s = g.gather(seg, &ctx.segment_ids);
        let x = g.add(x, p);
        let x = g.add(x, l);
        let x = g.add(x, s);
        let x = self.emb_ln.forward(g, x);
        let mut x = g.dropout(x);
        for layer in &self.layers {
            x = layer.forward(g, x);
        }
        x
    }
}

#[derive(Debug, Clone)]
struct PredictorLayout {
    encoder: ContextEncoder,
    pool_query: ParamId,
    hidden: Linear,
    out: Linear,
    d_model: usize,
}

impl PredictorLayout {
    fn new(cfg: &PredictorConfig, vocab_size: usize, store: &mut ParamStore) -> PredictorLayout {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "predictor/init"));
        let d = cfg.d_model;
        PredictorLayout {
            encoder: ContextEncoder::new(store, "encoder", vocab_size, cfg.max_tokens, d, cfg.n_layers, cfg.n_heads, &mut rng),
            pool_query: store.add("pool.query", 1, d, Init::Uniform(0.1), &mut rng),
            hidden: Linear::new(store, "hidden", d, d, &mut rng),
            out: Linear::new(store, "out", d, NUM_LABELS, &mut rng),
            d_model: d,
        }
    }

    /// 1x41 logits.
    fn logits(&self, g: &mut Graph, ctx: &EncodedContext) -> NodeId {
        let h = self.encoder.forward(g, ctx);
        let q = g.param(self.pool_query);
        let scores = g.matmul_bt(q, h);
        let scores = g.scale(scores, 1.0 / (self.d_model as f64).sqrt());
        let weights = g.softmax(scores);
        let pooled = g.matmul(weights, h);
        let hid = self.hidden.forward(g, pooled);
        let hid = g.gelu(hid);
        let hid = g.dropout(hid);
        self.out.forward(g, hid)
    }
}

/// One training example: encoded history and the label of the response.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorExample {
    pub ctx: EncodedContext,
    pub gold: Label,
}

struct PredictorObjective<'a> {
    layout: &'a PredictorLayout,
    dropout: f64,
}

impl Objective for PredictorObjective<'_> {
    type Example = PredictorExample;

    fn run(
        &self,
        params: &ParamStore,
        ex: &PredictorExample,
        dropout_rng: Option<ChaCha8Rng>,
        grads: Option<&mut Grads>,
    ) -> Stats {
        let mut g = match dropout_rng {
            Some(rng) => Graph::training(params, self.dropout, rng),
            None => Graph::new(params),
        };
        let logits = self.layout.logits(&mut g, &ex.ctx);
        let pred = argmax(&g.value(logits).data);
        let loss = g.cross_entropy(logits, &[ex.gold.id()]);
        if let Some(grads) = grads {
            g.backward_into(loss, grads);
        }
        Stats {
            loss: g.value(loss).data[0],
            examples: 1,
            correct: usize::from(pred == ex.gold.id()),
            predictions: 1,
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct PredictorModel {
    pub config: PredictorConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    /// Optimization epochs applied so far.
    pub epochs_trained: usize,
    layout: PredictorLayout,
}

pub const CHECKPOINT_KIND: &str = "predictor";

impl PredictorModel {
    pub fn new(config: PredictorConfig, vocab: Vocab) -> Result<PredictorModel> {
        config.validate()?;
        let mut params = ParamStore::new();
        let layout = PredictorLayout::new(&config, vocab.len(), &mut params);
        Ok(PredictorModel {
            config,
            vocab,
            params,
            epochs_trained: 0,
            layout,
        })
    }

    /// Encode the turns preceding a response.
    pub fn encode(&self, turns: &[ContextTurn]) -> Result<EncodedContext> {
        encode_context(turns, &self.vocab, self.config.k, self.config.max_tokens)
    }

    /// Label probabilities. Dropout is applied only when `dropout_rng` is
    /// given.
    pub fn forward(&self, ctx: &EncodedContext, dropout_rng: Option<ChaCha8Rng>) -> Result<Vec<f64>> {
        self.layout.encoder.check(ctx)?;
        let mut g = match dropout_rng {
            Some(rng) => Graph::training(&self.params, self.config.dropout, rng),
            None => Graph::new(&self.params),
        };
        let logits = self.layout.logits(&mut g, ctx);
        let probs = g.softmax(logits);
        Ok(g.value(probs).data.clone())
    }

    /// Most probable label; ties go to the lowest label id.
    pub fn predict_label(&self, ctx: &EncodedContext) -> Result<Label> {
        let probs = self.forward(ctx, None)?;
        Ok(Label::from_id(argmax(&probs)).expect("41 outputs"))
    }

    /// Mini-batch Adam training with best-validation-loss selection.
    pub fn train(&mut self, train: &[PredictorExample], val: &[PredictorExample]) -> Result<TrainHistory> {
        for ex in train.iter().chain(val) {
            self.layout.encoder.check(&ex.ctx)?;
        }
        let obj = PredictorObjective {
            layout: &self.layout,
            dropout: self.config.dropout,
        };
        let opts = self.config.train_options();
        let history = train::train(&obj, &mut self.params, train, val, &opts)?;
        self.epochs_trained += opts.epochs;
        Ok(history)
    }

    /// Mean loss and accuracy without dropout.
    pub fn evaluate(&self, examples: &[PredictorExample]) -> Stats {
        let obj = PredictorObjective {
            layout: &self.layout,
            dropout: 0.0,
        };
        train::evaluate(&obj, &self.params, examples)
    }

    /// Analytic gradients of the cross-entropy of one example.
    pub fn gradients(&self, example: &PredictorExample) -> Grads {
        let obj = PredictorObjective {
            layout: &self.layout,
            dropout: 0.0,
        };
        let mut grads = self.params.zero_grads();
        obj.run(&self.params, example, None, Some(&mut grads));
        grads
    }

    /// Largest relative error between analytic and central-difference
    /// gradients over a random subset of coordinates covering every
    /// parameter tensor. Dropout is off.
    pub fn grad_check(&self, example: &PredictorExample, epsilon: f64, seed: u64) -> Result<GradCheckReport> {
        self.layout.encoder.check(&example.ctx)?;
        let obj = PredictorObjective {
            layout: &self.layout,
            dropout: 0.0,
        };
        let analytic = self.gradients(example);
        let loss = |p: &ParamStore| obj.run(p, example, None, None).loss;
        check_gradients(&self.params, &analytic, loss, epsilon, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Zero the output projection so every class gets probability 1/41.
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

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<PredictorModel> {
        let config: PredictorConfig = ckpt.config()?;
        let vocab = Vocab::with_words(ckpt.vocab.iter().skip(crate::tokenizer::NUM_RESERVED))?;
        let mut model = PredictorModel::new(config, vocab)?;
        ckpt.restore(&mut model.params)?;
        model.epochs_trained = ckpt.epochs_trained;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<PredictorModel> {
        PredictorModel::from_checkpoint(&Checkpoint::load(path, CHECKPOINT_KIND)?)
    }
}

/// 0-based indices of listener turns.
pub fn listener_positions(turns: &[Turn]) -> impl Iterator<Item = usize> + '_ {
    (1..turns.len()).step_by(2)
}

/// The up-to-`k` turns preceding position `i`.
pub fn history_before(turns: &[Turn], i: usize, k: usize) -> &[Turn] {
    &turns[i.saturating_sub(k)..i]
}

/// One example per listener turn of every dialogue.
pub fn predictor_examples(corpus: &Corpus, model: &PredictorModel) -> Result<Vec<PredictorExample>> {
    let mut out = Vec::new();
    for d in &corpus.dialogues {
        for i in listener_positions(&d.turns) {
            let history: Vec<ContextTurn> = history_before(&d.turns, i, model.config.k).iter().map(Into::into).collect();
            out.push(PredictorExample {
                ctx: model.encode(&history)?,
                gold: d.turns[i].label,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::with_words(["i", "am", "sad", "oh", "no", "why", "?"]).unwrap()
    }

    fn tiny_config() -> PredictorConfig {
        PredictorConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            max_tokens: 16,
            dropout: 0.0,
            ..Default::default()
        }
    }

    fn turn(role: Role, text: &str, label: &str) -> ContextTurn<'static> {
        let text: &'static str = Box::leak(text.to_string().into_boxed_str());
        ContextTurn {
            role,
            text,
            label: Label::parse(label),
        }
    }

    #[test]
    fn single_speaker_turn() {
        let ctx = encode_context(&[turn(Role::Speaker, "i am sad", "Sad")], &vocab(), 4, 100).unwrap();
        assert_eq!(ctx.len(), 3);
        assert!(ctx.segment_ids.iter().all(|&s| s == 0));
        assert!(ctx.label_ids.iter().all(|&l| l == Label::parse("Sad").unwrap().id()));
        assert_eq!(ctx.position_ids, [0, 1, 2]);
    }

    #[test]
    fn segments_flip_after_separator() {
        let ctx = encode_context(
            &[turn(Role::Speaker, "i am sad", "Sad"), turn(Role::Listener, "why ?", "Questioning")],
            &vocab(),
            4,
            100,
        )
        .unwrap();
        assert_eq!(ctx.token_ids[3], EOS);
        assert_eq!(ctx.segment_ids, [0, 0, 0, 0, 1, 1]);
        assert_eq!(ctx.label_ids[4], Label::parse("Questioning").unwrap().id());
    }

    #[test]
    fn truncation_keeps_recent_tokens() {
        // 70 + separator + 49 = 120 tokens; the first 20 of the older turn go.
        let older = "i ".repeat(70);
        let newer = "am ".repeat(49);
        let ctx = encode_context(
            &[
                ContextTurn { role: Role::Speaker, text: &older, label: Label::parse("Sad") },
                ContextTurn { role: Role::Listener, text: &newer, label: Label::parse("Consoling") },
            ],
            &vocab(),
            4,
            100,
        )
        .unwrap();
        assert_eq!(ctx.len(), 100);
        assert_eq!(ctx.token_ids.iter().filter(|&&t| t == 4).count(), 50);
        assert_eq!(ctx.token_ids[50], EOS);
        assert_eq!(ctx.position_ids[99], 99);
    }

    #[test]
    fn unknown_label_uses_reserved_row() {
        let ctx = encode_context(
            &[ContextTurn { role: Role::Speaker, text: "oh no", label: None }],
            &vocab(),
            4,
            100,
        )
        .unwrap();
        assert!(ctx.label_ids.iter().all(|&l| l == UNKNOWN_LABEL_ROW));
    }

    #[test]
    fn context_size_errors() {
        assert!(encode_context(&[], &vocab(), 4, 100).is_err());
        let t = turn(Role::Speaker, "i", "Sad");
        assert!(encode_context(&[t; 5], &vocab(), 4, 100).is_err());
    }

    #[test]
    fn forward_is_a_distribution() {
        let model = PredictorModel::new(tiny_config(), vocab()).unwrap();
        let ctx = model.encode(&[turn(Role::Speaker, "i am sad", "Sad")]).unwrap();
        let p = model.forward(&ctx, None).unwrap();
        assert_eq!(p.len(), NUM_LABELS);
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(p, model.forward(&ctx, None).unwrap());
    }

    #[test]
    fn zero_output_layer_gives_uniform() {
        let mut model = PredictorModel::new(tiny_config(), vocab()).unwrap();
        model.zero_output_layer();
        let ctx = model.encode(&[turn(Role::Speaker, "i am sad", "Sad")]).unwrap();
        for p in model.forward(&ctx, None).unwrap() {
            assert!((p - 1.0 / 41.0).abs() < 1e-12);
        }
        assert_eq!(model.predict_label(&ctx).unwrap().id(), 0);
    }

    #[test]
    fn dropout_changes_training_forward_only() {
        let cfg = PredictorConfig { dropout: 0.3, ..tiny_config() };
        let model = PredictorModel::new(cfg, vocab()).unwrap();
        let ctx = model.encode(&[turn(Role::Speaker, "i am sad", "Sad")]).unwrap();
        let eval = model.forward(&ctx, None).unwrap();
        let trained = model.forward(&ctx, Some(ChaCha8Rng::seed_from_u64(1))).unwrap();
        assert_ne!(eval, trained);
        assert!((trained.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn out_of_vocab_id_is_rejected() {
        let model = PredictorModel::new(tiny_config(), vocab()).unwrap();
        let mut ctx = model.encode(&[turn(Role::Speaker, "i", "Sad")]).unwrap();
        ctx.token_ids[0] = 999;
        assert!(matches!(model.forward(&ctx, None), Err(CoreError::TokenOutOfRange { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(PredictorConfig { d_model: 10, n_heads: 3, ..Default::default() }.validate().is_err());
        assert!(PredictorConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        assert!(PredictorConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(PredictorConfig::default().validate().is_ok());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let model = PredictorModel::new(tiny_config(), vocab()).unwrap();
        let text = model.to_checkpoint().to_text();
        let restored = PredictorModel::from_checkpoint(&Checkpoint::from_text(&text, CHECKPOINT_KIND).unwrap()).unwrap();
        assert_eq!(restored.params, model.params);
        let ctx = model.encode(&[turn(Role::Speaker, "i am sad", "Sad")]).unwrap();
        let a = model.forward(&ctx, None).unwrap();
        let b = restored.forward(&ctx, None).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(Checkpoint::from_text(&text, "generator").is_err());
    }
}
