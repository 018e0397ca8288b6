//! Network specifications, parameter accounting, checkpoints and training.

mod checkpoint;
mod model;
mod runtime;
mod spec;
mod train;

pub use checkpoint::{from_bytes, load_model, save_model, to_bytes, CheckpointError};
pub use model::{Model, StoredTensor, TensorData};
pub use runtime::Network;
pub use spec::{
    build_head, build_student, build_teacher, count_params, is_head_layer, layer_param_count,
    param_breakdown, param_shapes, running_stat_shapes, ArchConfig, HeadConfig, LayerKind,
    LayerSpec, NetworkSpec, Shape, HEAD_PREFIX,
};
pub(crate) use train::{fit, BatchLoss, Objective};
pub use train::{
    eval_logits, fine_tune, predict, stratified_split, train, Dataset, EpochRecord, History,
    Split, TrainingConfig,
};

use crate::autograd::AutogradError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetworkError {
    #[error("layer {layer} is shape-incompatible: {reason}")]
    ShapeIncompatible { layer: String, reason: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("class {0} has fewer than two samples")]
    EmptyClass(usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
}

impl From<AutogradError> for NetworkError {
    fn from(e: AutogradError) -> Self {
        match e {
            AutogradError::ShapeMismatch(m) => NetworkError::ShapeMismatch(m),
            AutogradError::InvalidProbability(p) => NetworkError::InvalidProbability(p),
        }
    }
}
