//! Tree neural networks over first-order terms.
//!
//! One small dense network per operator computes term embeddings bottom-up;
//! a head network decodes the root embedding. Includes the arithmetic
//! (value mod 16) and propositional (entailment) benchmark tasks.

pub mod dataset;
pub mod error;
pub mod network;
pub mod tasks;
pub mod term;
pub mod tnn;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use network::{init_dense, Activation, ActivationTrace, DenseNetwork, Layer, NetGradient};
pub use term::{collect_signatures, index_variables, parse_term, print_term, Term};
pub use tnn::{
    loss, random_tnn, signatures_for, Example, GradientStore, Objective, OperatorNet, OperatorSignature, Tnn,
    DEFAULT_HEAD,
};
pub use train::{
    evaluate_accuracy, train_tnn, train_tnn_with, Accuracy, Criterion, Phase, Schedule, TrainOptions, TrainReport,
};
pub use weights::{load_tnn, save_tnn};
