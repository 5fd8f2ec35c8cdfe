//! Minimal tensor autograd, layers and optimizer for the from-scratch
//! predictor and generator.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod train;

pub use graph::{Graph, NodeId};
pub use optim::{Adam, AdamConfig};
pub use params::{Grads, Init, ParamId, ParamStore};
pub use tensor::Tensor;
