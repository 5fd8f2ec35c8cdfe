use std::path::{Path, PathBuf};

use empathic::corpus::{load_corpus, Corpus, CorpusFormat, Role};
use empathic::generator::{
    generator_examples, ConditionMode, DecodeMode, GeneratorConfig, GeneratorExample, GeneratorModel, Injection,
};
use empathic::nn::train::SplitName;
use empathic::predictor::{predictor_examples, ContextTurn, PredictorConfig, PredictorExample, PredictorModel};
use empathic::tokenizer::{build_vocab, Vocab};
use empathic::Label;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn micro() -> Corpus {
    load_corpus(&fixture("micro.jsonl"), CorpusFormat::Jsonl).unwrap()
}

fn l(name: &str) -> Label {
    Label::parse(name).unwrap()
}

fn small_vocab() -> Vocab {
    Vocab::with_words(["i", "am", "sorry", "sad", "lost", "my", "dog", "that", "is", "great", "!", "so", "happy", "?"])
        .unwrap()
}

fn context() -> Vec<ContextTurn<'static>> {
    vec![
        ContextTurn { role: Role::Speaker, text: "i lost my dog", label: Some(l("Sad")) },
        ContextTurn { role: Role::Listener, text: "i am so sorry", label: Some(l("Sympathizing")) },
        ContextTurn { role: Role::Speaker, text: "i am sad !", label: None },
    ]
}

fn toy_predictor(seed: u64) -> PredictorModel {
    let cfg = PredictorConfig { d_model: 16, n_layers: 2, n_heads: 2, dropout: 0.0, seed, ..Default::default() };
    PredictorModel::new(cfg, small_vocab()).unwrap()
}

fn toy_generator(condition: ConditionMode, injection: Injection) -> GeneratorModel {
    let cfg = GeneratorConfig {
        d_model: 16,
        n_layers: 2,
        n_dec_layers: 2,
        n_heads: 2,
        dropout: 0.0,
        condition,
        injection,
        ..Default::default()
    };
    GeneratorModel::new(cfg, small_vocab()).unwrap()
}

fn generator_example(model: &GeneratorModel, response: &str, label: &str) -> GeneratorExample {
    GeneratorExample {
        ctx: model.encode(&context()).unwrap(),
        response: model.encode_response(response),
        label: l(label),
    }
}

#[test]
fn predictor_gradients_match_finite_differences() {
    let model = toy_predictor(1);
    let ex = PredictorExample { ctx: model.encode(&context()).unwrap(), gold: l("Consoling") };
    let report = model.grad_check(&ex, 1e-5, 7).unwrap();
    assert_eq!(report.groups_checked, model.params.len());
    assert!(report.checked >= 200);
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn generator_gradients_match_finite_differences() {
    for injection in [Injection::Prefix, Injection::Add] {
        for condition in [ConditionMode::GroundTruth, ConditionMode::None] {
            let model = toy_generator(condition, injection);
            let ex = generator_example(&model, "that is great !", "Agreeing");
            let report = model.grad_check(&ex, 1e-5, 3).unwrap();
            assert_eq!(report.groups_checked, model.params.len());
            assert!(report.max_rel_error < 1e-4, "{injection:?} {condition:?}: {report:?}");
        }
    }
}

#[test]
fn predictor_overfits_fifty_examples() {
    let corpus = micro();
    let vocab = build_vocab(&corpus, 1, 10_000).unwrap();
    let cfg = PredictorConfig { d_model: 32, n_layers: 1, epochs: 200, batch_size: 10, ..Default::default() };
    let mut model = PredictorModel::new(cfg, vocab).unwrap();
    let examples: Vec<_> = predictor_examples(&corpus, &model).unwrap().into_iter().take(50).collect();
    assert_eq!(examples.len(), 50);
    model.train(&examples, &[]).unwrap();
    let acc = model.evaluate(&examples).accuracy();
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn constant_label_loss_goes_to_zero() {
    let mut model = toy_predictor(2);
    model.config.epochs = 100;
    model.config.lr = 5e-3;
    let contexts = ["i am sad", "i lost my dog", "that is great !", "so happy"];
    let examples: Vec<PredictorExample> = contexts
        .iter()
        .map(|t| PredictorExample {
            ctx: model.encode(&[ContextTurn { role: Role::Speaker, text: t, label: Some(l("Sad")) }]).unwrap(),
            gold: l("Consoling"),
        })
        .collect();
    let history = model.train(&examples, &[]).unwrap();
    let loss = history.last(SplitName::Train).unwrap().loss;
    assert!(loss < 0.01, "loss {loss}");
}

#[test]
fn training_is_deterministic() {
    let corpus = micro();
    let vocab = build_vocab(&corpus, 1, 10_000).unwrap();
    let run = || {
        let cfg = PredictorConfig { d_model: 16, n_layers: 1, epochs: 3, batch_size: 8, ..Default::default() };
        let mut model = PredictorModel::new(cfg, vocab.clone()).unwrap();
        let examples = predictor_examples(&corpus, &model).unwrap();
        let history = model.train(&examples[..40], &examples[40..]).unwrap();
        (history, model.params)
    };
    let (h1, p1) = run();
    let (h2, p2) = run();
    assert_eq!(h1.to_csv(), h2.to_csv());
    let bits = |h: &empathic::nn::train::TrainHistory| h.records.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&h1), bits(&h2));
    assert_eq!(p1, p2);
}

#[test]
fn swapping_turns_changes_the_prediction() {
    let model = toy_predictor(3);
    let turns = context();
    let mut swapped = turns.clone();
    swapped.swap(0, 2);
    let a = model.forward(&model.encode(&turns).unwrap(), None).unwrap();
    let b = model.forward(&model.encode(&swapped).unwrap(), None).unwrap();
    assert_ne!(a, b);
}

#[test]
fn predictor_checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("predictor.ckpt");
    let model = toy_predictor(4);
    model.save(&path).unwrap();
    let loaded = PredictorModel::load(&path).unwrap();
    let ctx = model.encode(&context()).unwrap();
    let a = model.forward(&ctx, None).unwrap();
    let b = loaded.forward(&ctx, None).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(GeneratorModel::load(&path).is_err());
}

#[test]
fn fine_tuning_continues_from_a_checkpoint() {
    let corpus = micro();
    let vocab = build_vocab(&corpus, 1, 10_000).unwrap();
    let cfg = PredictorConfig { d_model: 16, n_layers: 1, epochs: 5, batch_size: 8, dropout: 0.0, ..Default::default() };
    let mut model = PredictorModel::new(cfg, vocab).unwrap();
    let examples = predictor_examples(&corpus, &model).unwrap();
    let first = model.train(&examples, &[]).unwrap();
    let trained_loss = model.evaluate(&examples).mean_loss();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stage1.ckpt");
    model.save(&path).unwrap();

    let mut resumed = PredictorModel::load(&path).unwrap();
    assert_eq!(resumed.epochs_trained, 5);
    let second = resumed.train(&examples, &[]).unwrap();
    // Epoch 0 of the second stage evaluates the loaded parameters.
    assert_eq!(second.records[0].loss.to_bits(), trained_loss.to_bits());
    assert!(second.records[0].loss < first.records[0].loss);
    assert_eq!(resumed.epochs_trained, 10);
}

#[test]
fn generator_memorizes_a_single_pair() {
    let cfg = GeneratorConfig {
        d_model: 16,
        n_layers: 1,
        n_dec_layers: 1,
        dropout: 0.0,
        lr: 3e-3,
        epochs: 200,
        batch_size: 1,
        ..Default::default()
    };
    let mut model = GeneratorModel::new(cfg, small_vocab()).unwrap();
    let ex = generator_example(&model, "i am sorry", "Sympathizing");
    model.train(std::slice::from_ref(&ex), &[]).unwrap();
    let (_, loss) = model.teacher_forced(&ex).unwrap();
    assert!(loss < 0.01, "loss {loss}");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(model.generate(&ex.ctx, Some(ex.label), DecodeMode::Greedy, &mut rng).unwrap(), "i am sorry");
    let ppl = model.perplexity(std::slice::from_ref(&ex)).unwrap();
    assert!((1.0..1.02).contains(&ppl), "perplexity {ppl}");
}

fn two_label_model(injection: Injection) -> (GeneratorModel, [GeneratorExample; 2]) {
    let mut model = toy_generator(ConditionMode::GroundTruth, injection);
    model.config.epochs = 150;
    model.config.batch_size = 2;
    let pair = [
        generator_example(&model, "i am so sorry", "Sympathizing"),
        generator_example(&model, "that is great !", "Agreeing"),
    ];
    model.train(&pair, &[]).unwrap();
    (model, pair)
}

#[test]
fn condition_label_steers_generation() {
    for injection in [Injection::Prefix, Injection::Add] {
        let (model, pair) = two_label_model(injection);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = model.generate(&pair[0].ctx, Some(pair[0].label), DecodeMode::Greedy, &mut rng).unwrap();
        let b = model.generate(&pair[1].ctx, Some(pair[1].label), DecodeMode::Greedy, &mut rng).unwrap();
        assert_eq!(a, "i am so sorry", "{injection:?}");
        assert_eq!(b, "that is great !", "{injection:?}");
    }
}

#[test]
fn teacher_forced_loss_matches_cross_entropy_oracle() {
    let model = toy_generator(ConditionMode::GroundTruth, Injection::Prefix);
    let ex = generator_example(&model, "i am sorry", "Sympathizing");
    let (logits, loss) = model.teacher_forced(&ex).unwrap();
    let mut targets = ex.response.clone();
    targets.push(empathic::tokenizer::EOS);
    let mut oracle = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        oracle += log_z - row[t];
    }
    oracle /= targets.len() as f64;
    assert!((loss - oracle).abs() < 1e-10);
}

#[test]
fn uniform_generator_perplexity_is_vocab_size() {
    let words: Vec<String> = (0..96).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::with_words(&words).unwrap();
    assert_eq!(vocab.len(), 100);
    let cfg = GeneratorConfig { d_model: 8, n_layers: 1, n_dec_layers: 1, dropout: 0.0, ..Default::default() };
    let mut model = GeneratorModel::new(cfg, vocab).unwrap();
    model.zero_output_layer();
    let ctx = model.encode(&[ContextTurn { role: Role::Speaker, text: "w1 w2", label: Some(l("Sad")) }]).unwrap();
    let ex = GeneratorExample { ctx, response: model.encode_response("w3 w4 w5"), label: l("Consoling") };
    assert!((model.perplexity(&[ex]).unwrap() - 100.0).abs() < 1e-6);
}

#[test]
fn decoding_is_deterministic() {
    let (model, pair) = two_label_model(Injection::Prefix);
    let ctx = &pair[0].ctx;
    let greedy = |seed| model.generate(ctx, Some(l("Consoling")), DecodeMode::Greedy, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    assert_eq!(greedy(1), greedy(2));
    let sampled = |seed| model.generate(ctx, Some(l("Consoling")), DecodeMode::DEMO, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    assert_eq!(sampled(5), sampled(5));
}

#[test]
fn unconditioned_training_leaves_condition_table_unchanged() {
    let mut model = toy_generator(ConditionMode::None, Injection::Prefix);
    model.config.epochs = 3;
    let before = model.params.get(model.condition_param()).clone();
    let ex = generator_example(&model, "i am sorry", "Sympathizing");
    model.train(&[ex], &[]).unwrap();
    assert_eq!(model.params.get(model.condition_param()), &before);
}

#[test]
fn conditioning_gradient_is_live_on_the_corpus() {
    let corpus = micro();
    let vocab = build_vocab(&corpus, 1, 10_000).unwrap();
    let cfg = GeneratorConfig { d_model: 16, n_layers: 1, n_dec_layers: 1, dropout: 0.0, ..Default::default() };
    let model = GeneratorModel::new(cfg, vocab).unwrap();
    let examples = generator_examples(&corpus, &model).unwrap();
    let live = examples.iter().any(|ex| {
        let g = model.gradients(ex).unwrap();
        g.get(model.condition_param()).row(ex.label.id()).iter().any(|&x| x != 0.0)
    });
    assert!(live);
}

#[test]
fn generator_checkpoint_round_trip() {
    let (model, pair) = two_label_model(Injection::Add);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("generator.ckpt");
    model.save(&path).unwrap();
    let loaded = GeneratorModel::load(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = model.generate(&pair[1].ctx, Some(pair[1].label), DecodeMode::Greedy, &mut rng).unwrap();
    let b = loaded.generate(&pair[1].ctx, Some(pair[1].label), DecodeMode::Greedy, &mut rng).unwrap();
    assert_eq!(a, b);
    assert_eq!(loaded.config.injection, Injection::Add);
    assert!(PredictorModel::load(&path).is_err());
}
