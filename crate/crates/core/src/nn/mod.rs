//! Feature-learning CNN: a minimal reverse-mode differentiation engine,
//! training (plain, ensemble-adversarial, saddle-point), and the gradient
//! entry points the attacks build on.

mod checkpoint;
mod net;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use net::{softmax, softmax_cross_entropy, LayerSpec, NetSpec, Shape, TrainedNet};
pub use tensor::Tensor;
pub use train::{
    fgm_perturb, input_gradient, param_gradients, pgd_l2, train_classifier, train_ens_adv, train_madry,
    Defense, InputObjective, Optimizer, TrainConfig, TrainReport,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network spec: {0}")]
    BadSpec(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("gradient vanished (zero norm)")]
    ZeroGradient,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dataset must contain at least two classes")]
    TooFewClasses,
    #[error("empty batch")]
    EmptyBatch,
    #[error("defense config mismatch: {0}")]
    DefenseMismatch(String),
    #[error("image error: {0}")]
    Image(#[from] crate::imageproc::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
}
