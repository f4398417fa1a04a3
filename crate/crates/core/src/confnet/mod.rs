//! Confidence model `Φ(e; θ)` and its loser-takes-all training.
//!
//! The model is a small perceptron (ReLU hidden layers, sigmoid output).
//! For a mated pair with score `y`, only the less confident image is
//! regressed onto `y`: `L = (min(s1, s2) − y)²`.

mod io;
mod loss;
mod model;
mod train;

pub use io::{read_checkpoint, write_checkpoint, ModelSidecar, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{loss, loss_gradient};
pub use model::{ConfidenceModel, FeatureTable, Gradient, Layer};
pub use train::{train, LrEvent, StopReason, TrainConfig, TrainReport};
