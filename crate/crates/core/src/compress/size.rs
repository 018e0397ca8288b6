//! Storage accounting and head quantization.

use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::network::{is_head_layer, Model, Network, NetworkError, StoredTensor, TensorData};

use super::quant::{calibrate, quantize_i8, INT8_RANGE, QUANT_PARAMS_BYTES};
use super::CompressError;

pub const BYTES_PER_MB: f64 = 1_000_000.0;
pub const BYTES_PER_MIB: f64 = 1_048_576.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSize {
    pub layer: String,
    pub params: usize,
    pub bytes: usize,
    pub quantized: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub params: usize,
    /// Learnable-parameter storage: 4 B per f32 value, 1 B per q8 value plus
    /// fixed per-tensor quantization metadata.
    pub param_bytes: usize,
    /// Batch-norm running statistics (f32), not learnable and listed apart.
    pub running_bytes: usize,
    pub mb: f64,
    pub mib: f64,
    pub layers: Vec<LayerSize>,
}

pub fn tensor_bytes(t: &StoredTensor) -> usize {
    match &t.data {
        TensorData::F32(v) => v.len() * 4,
        TensorData::Q8 { values, .. } => values.len() + QUANT_PARAMS_BYTES,
    }
}

fn owner(tensor_name: &str) -> &str {
    tensor_name.strip_suffix(".weight")
        .or_else(|| tensor_name.strip_suffix(".bias"))
        .or_else(|| tensor_name.strip_suffix(".bn.gamma"))
        .or_else(|| tensor_name.strip_suffix(".bn.beta"))
        .unwrap_or(tensor_name)
}

pub fn size_report(model: &Model) -> SizeReport {
    let mut layers: Vec<LayerSize> = Vec::new();
    for layer in &model.spec.layers {
        let tensors: Vec<&StoredTensor> = model
            .params
            .iter()
            .filter(|(k, _)| owner(k) == layer.name)
            .map(|(_, t)| t)
            .collect();
        if tensors.is_empty() {
            continue;
        }
        layers.push(LayerSize {
            layer: layer.name.clone(),
            params: tensors.iter().map(|t| t.numel()).sum(),
            bytes: tensors.iter().map(|t| tensor_bytes(t)).sum(),
            quantized: tensors.iter().any(|t| t.is_quantized()),
        });
    }
    let param_bytes = model.params.values().map(tensor_bytes).sum();
    SizeReport {
        params: model.params.values().map(StoredTensor::numel).sum(),
        param_bytes,
        running_bytes: model.running_stats.values().map(tensor_bytes).sum(),
        mb: param_bytes as f64 / BYTES_PER_MB,
        mib: param_bytes as f64 / BYTES_PER_MIB,
        layers,
    }
}

/// Model size after storing the head at one byte instead of four per value:
/// `total − head + head/4`, in whatever unit the inputs use.
pub fn quantized_head_size(total: f64, head: f64) -> f64 {
    total - head + head / 4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizeReport {
    pub tensors: Vec<String>,
    pub head_bytes_before: usize,
    pub head_bytes_after: usize,
    /// Largest |logit| change over the calibration inputs.
    pub max_logit_drift: f64,
    /// Fraction of calibration inputs whose predicted class is unchanged.
    pub agreement: f64,
}

/// Stores every head parameter tensor as per-tensor int8.
///
/// Ranges come from the weights themselves; the calibration batch
/// (`[N, C, H, W]`) measures how far the logits move.
pub fn quantize_head(model: &Model, calibration: &Tensor<f32>) -> Result<(Model, QuantizeReport), CompressError> {
    if calibration.is_empty() || calibration.shape().first() == Some(&0) {
        return Err(CompressError::EmptyCalibration);
    }
    let head: Vec<String> = model.params.keys().filter(|k| is_head_layer(k)).cloned().collect();
    if head.is_empty() {
        return Err(CompressError::MissingHead);
    }
    let mut out = model.clone();
    let mut before = 0;
    let mut after = 0;
    for name in &head {
        let t = out.params.get_mut(name).unwrap();
        before += tensor_bytes(t);
        if !t.is_quantized() {
            let values = t.to_f32();
            let quant = calibrate(values.iter().map(|&v| f64::from(v)), INT8_RANGE)?;
            t.data = TensorData::Q8 { values: quantize_i8(&values, &quant), quant };
        }
        after += tensor_bytes(t);
    }

    let ref_logits = Network::<f32>::from_model(model)?.infer(calibration)?;
    let q_logits = Network::<f32>::from_model(&out)?.infer(calibration)?;
    let max_logit_drift = ref_logits
        .data()
        .iter()
        .zip(q_logits.data())
        .map(|(a, b)| f64::from((a - b).abs()))
        .fold(0.0, f64::max);
    let a = crate::autograd::argmax_rows(&ref_logits).map_err(NetworkError::from)?;
    let b = crate::autograd::argmax_rows(&q_logits).map_err(NetworkError::from)?;
    let agreement = a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64;
    Ok((
        out,
        QuantizeReport { tensors: head, head_bytes_before: before, head_bytes_after: after, max_logit_drift, agreement },
    ))
}
