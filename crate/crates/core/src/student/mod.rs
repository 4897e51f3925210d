//! Distillation pipeline: frame tensors, label normalization, a compact
//! regression network with explicit gradients, the training recipe, and
//! teacher-rollout dataset generation.

mod adam;
mod augment;
mod dataset;
mod infer;
mod layers;
mod net;
mod norm;
mod tensor;
mod train;
mod weights_io;

pub use adam::Adam;
pub use augment::augment;
pub use dataset::{distill, load_dataset, save_dataset, DistillDataset, DistillSample};
pub use infer::InferenceNet;
pub use layers::{BatchNorm, Conv2d, Elem, Linear};
pub use net::{ArchSpec, BlockSpec, StudentNet};
pub use norm::{denormalize, normalize, NormalizationBounds};
pub use tensor::{downsample_area, render_input, FrameTensor};
pub use train::{evaluate, mse_grad, mse_loss, split_episodes, train, train_from, EpochStats, TrainConfig, TrainHistory};
pub use weights_io::{load_weights, save_weights};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudentError {
    #[error("target projects to zero pixels; no input tensor")]
    TargetNotVisible,
    #[error("tensor shape {got:?} does not match expected {want:?}")]
    ShapeMismatch { got: (u32, u32, u32), want: (u32, u32, u32) },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("weight file malformed: {0}")]
    WeightFormat(String),
    #[error("weights do not match the architecture: {0}")]
    ArchMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
