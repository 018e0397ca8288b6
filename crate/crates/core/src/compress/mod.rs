//! Model compression: structured pruning, knowledge distillation, per-tensor
//! int8 quantization of the classification head, and size accounting.

pub mod distill;
pub mod prune;
pub mod quant;
pub mod size;

pub use distill::{distill, distillation_loss, softmax_with_temperature, total_loss, DistillConfig, LossParts};
pub use prune::{channel_preserving_convs, prunable_layers, prune_layers, prune_neurons, prune_neurons_in, PruneReport, PruneStrategy};
pub use size::{quantize_head, quantized_head_size, size_report, tensor_bytes, LayerSize, QuantizeReport, SizeReport, BYTES_PER_MB, BYTES_PER_MIB};
pub use quant::{calibrate, dequantize_i8, quantize_i8, QuantParams, INT8_RANGE, QUANT_PARAMS_BYTES};

use crate::network::NetworkError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CompressError {
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("invalid quantization range: {0}")]
    InvalidQuantRange(String),
    #[error("pruning fraction {0} outside [0, 1)")]
    InvalidFraction(f64),
    #[error("temperature {0} must be positive")]
    InvalidTemperature(f64),
    #[error("invalid distillation config: {0}")]
    InvalidConfig(String),
    #[error("model has no classification head")]
    MissingHead,
    #[error(transparent)]
    Network(#[from] NetworkError),
}
