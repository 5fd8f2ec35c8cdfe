//! Next-response emotion/intent prediction and label-conditioned empathetic
//! response generation.
//!
//! The crate covers the whole pipeline: a closed 41-label taxonomy and
//! dialogue corpora ([`corpus`]), a word-level [`tokenizer`], a prefix-trie
//! decision-tree policy ([`policy_tree`]), a from-scratch transformer
//! next-label classifier ([`predictor`]), a label-conditioned
//! encoder-decoder ([`generator`]), the automatic evaluation metrics
//! ([`metrics`]) and the glue that runs every prediction method end to end
//! ([`pipeline`]).

pub mod corpus;
pub mod error;
pub mod generator;
pub mod label;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod policy_tree;
pub mod predictor;
pub mod rng;
pub mod synthetic;
pub mod tokenizer;

pub use error::{CoreError, Result};
pub use label::{Label, LabelKind, NUM_LABELS};
