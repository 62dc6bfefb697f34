//! Training kit for convolutional networks with the AReLU activation.
//!
//! Everything is implemented from first principles: dense tensors, layers with
//! hand-derived backward passes, optimizers, an IDX dataset reader, a
//! finite-difference gradient checker, and an experiment harness that writes
//! per-epoch metrics as CSV.

pub mod activations;
pub mod data;
mod error;
pub mod experiment;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;
pub mod param;
pub mod tensor;

pub use activations::{AReLUState, ActivationKind, Mode};
pub use data::Dataset;
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, MetricsRecord};
pub use model::{build_mnist_conv, MnistConvSpec, SequentialModel};
pub use optim::{OptimConfig, Optimizer, OptimizerKind};
pub use tensor::{Real, Shape, Tensor};
