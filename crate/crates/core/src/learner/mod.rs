//! Unsupervised learners: network, relaxed objective, training and inference.

pub mod checkpoint;
pub mod features;
pub mod gumbel;
pub mod infer;
pub mod network;
pub mod objective;
pub mod optim;
pub mod train;

pub use infer::{infer, Inferred, Model};
pub use objective::Objective;
pub use train::{default_gamma, train, MetricsRow, TrainConfig, TrainState};
