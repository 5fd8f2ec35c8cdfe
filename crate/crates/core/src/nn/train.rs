//! Mini-batch Adam training loop shared by the predictor and generator.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig};
use super::params::{Grads, ParamStore};
use crate::error::{CoreError, Result};
use crate::rng::derive_seed;

/// Examples per parallel work unit. Fixed so that gradient summation order
/// does not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub dropout: f64,
    /// Global gradient-norm clipping threshold; `0` disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

/// Loss, correct predictions and prediction count for one or more examples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub loss: f64,
    pub examples: usize,
    pub correct: usize,
    pub predictions: usize,
}

impl Stats {
    pub fn merge(&mut self, other: Stats) {
        self.loss += other.loss;
        self.examples += other.examples;
        self.correct += other.correct;
        self.predictions += other.predictions;
    }

    pub fn mean_loss(&self) -> f64 {
        if self.examples == 0 {
            f64::NAN
        } else {
            self.loss / self.examples as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.predictions == 0 {
            0.0
        } else {
            self.correct as f64 / self.predictions as f64
        }
    }
}

/// A differentiable per-example loss.
pub trait Objective: Sync {
    type Example: Sync;

    /// Loss of one example; with `grads`, also accumulates its gradient.
    /// `dropout_rng` is `Some` in training mode.
    fn run(
        &self,
        params: &ParamStore,
        example: &Self::Example,
        dropout_rng: Option<ChaCha8Rng>,
        grads: Option<&mut Grads>,
    ) -> Stats;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitName {
    Train,
    Val,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: SplitName,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 = the initial parameters).
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn losses(&self, split: SplitName) -> Vec<f64> {
        self.records.iter().filter(|r| r.split == split).map(|r| r.loss).collect()
    }

    pub fn last(&self, split: SplitName) -> Option<&EpochRecord> {
        self.records.iter().rev().find(|r| r.split == split)
    }

    /// `epoch,split,loss,accuracy` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,loss,accuracy\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.split, r.loss, r.accuracy));
        }
        out
    }
}

/// Evaluate without dropout or gradients.
pub fn evaluate<O: Objective>(obj: &O, params: &ParamStore, examples: &[O::Example]) -> Stats {
    let parts: Vec<Stats> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = Stats::default();
            for ex in chunk {
                s.merge(obj.run(params, ex, None, None));
            }
            s
        })
        .collect();
    let mut total = Stats::default();
    for p in parts {
        total.merge(p);
    }
    total
}

/// Train `params` in place. Epoch 0 records the starting point. When
/// validation examples are given, the parameters with the lowest
/// validation loss are kept; otherwise the final parameters are kept.
pub fn train<O: Objective>(
    obj: &O,
    params: &mut ParamStore,
    train: &[O::Example],
    val: &[O::Example],
    opts: &TrainOptions,
) -> Result<TrainHistory> {
    if train.is_empty() {
        return Err(CoreError::Empty("no training examples".into()));
    }
    let batch_size = opts.batch_size.max(1);
    let mut history = TrainHistory::default();
    let mut adam = Adam::new(opts.adam, params);

    let start = evaluate(obj, params, train);
    history.records.push(EpochRecord {
        epoch: 0,
        split: SplitName::Train,
        loss: start.mean_loss(),
        accuracy: start.accuracy(),
    });
    let mut best: Option<(f64, ParamStore, usize)> = None;
    if !val.is_empty() {
        let v = evaluate(obj, params, val);
        history.records.push(EpochRecord {
            epoch: 0,
            split: SplitName::Val,
            loss: v.mean_loss(),
            accuracy: v.accuracy(),
        });
        best = Some((v.mean_loss(), params.clone(), 0));
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &format!("shuffle/{epoch}"))));
        let mut epoch_stats = Stats::default();
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let parts: Vec<(Grads, Stats)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grads = params.zero_grads();
                    let mut stats = Stats::default();
                    for &i in chunk {
                        let rng = ChaCha8Rng::seed_from_u64(derive_seed(
                            opts.seed,
                            &format!("dropout/{epoch}/{i}"),
                        ));
                        stats.merge(obj.run(params, &train[i], Some(rng), Some(&mut grads)));
                    }
                    (grads, stats)
                })
                .collect();
            let mut grads = params.zero_grads();
            let mut batch_stats = Stats::default();
            for (g, s) in parts {
                grads.add_assign(&g);
                batch_stats.merge(s);
            }
            if !batch_stats.loss.is_finite() {
                return Err(CoreError::NonFiniteLoss {
                    epoch,
                    example: b * batch_size,
                    loss: batch_stats.loss,
                });
            }
            grads.scale(1.0 / batch.len() as f64);
            if opts.clip_norm > 0.0 {
                let norm = grads.norm();
                if norm > opts.clip_norm {
                    grads.scale(opts.clip_norm / norm);
                }
            }
            adam.step(params, &grads);
            epoch_stats.merge(batch_stats);
        }
        if !params.all_finite() {
            return Err(CoreError::NonFiniteLoss {
                epoch,
                example: train.len(),
                loss: f64::NAN,
            });
        }
        history.records.push(EpochRecord {
            epoch,
            split: SplitName::Train,
            loss: epoch_stats.mean_loss(),
            accuracy: epoch_stats.accuracy(),
        });
        if !val.is_empty() {
            let v = evaluate(obj, params, val);
            let loss = v.mean_loss();
            history.records.push(EpochRecord {
                epoch,
                split: SplitName::Val,
                loss,
                accuracy: v.accuracy(),
            });
            log::info!("epoch {epoch}: train loss {:.4}, val loss {loss:.4}", epoch_stats.mean_loss());
            if best.as_ref().is_none_or(|(b, _, _)| loss < *b) {
                best = Some((loss, params.clone(), epoch));
            }
        } else {
            log::info!("epoch {epoch}: train loss {:.4}", epoch_stats.mean_loss());
        }
    }

    history.best_epoch = match best {
        Some((_, best_params, epoch)) => {
            *params = best_params;
            epoch
        }
        None => opts.epochs,
    };
    Ok(history)
}
