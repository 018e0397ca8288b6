use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{count_params, NetworkSpec};
use super::NetworkError;
use crate::compress::quant::{dequantize_i8, QuantParams};

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    Q8 { values: Vec<i8>, quant: QuantParams },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl StoredTensor {
    pub fn f32(shape: Vec<usize>, values: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, data: TensorData::F32(values) }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.data, TensorData::Q8 { .. })
    }

    pub fn quant(&self) -> Option<&QuantParams> {
        match &self.data {
            TensorData::Q8 { quant, .. } => Some(quant),
            TensorData::F32(_) => None,
        }
    }

    /// Float view; quantized tensors are dequantized.
    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            TensorData::F32(v) => v.clone(),
            TensorData::Q8 { values, quant } => dequantize_i8(values, quant),
        }
    }

    pub fn payload_bytes(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len() * 4,
            TensorData::Q8 { values, .. } => values.len(),
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self.data {
            TensorData::F32(_) => "f32",
            TensorData::Q8 { .. } => "q8",
        }
    }
}

/// Serializable network: spec plus named parameter and running-stat tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub params: BTreeMap<String, StoredTensor>,
    pub running_stats: BTreeMap<String, StoredTensor>,
    pub class_names: Vec<String>,
    /// Free-form provenance (feature settings, training config, ...).
    pub metadata: serde_json::Value,
}

impl Model {
    /// Fresh parameters: Kaiming-uniform weights, zero biases, unit BN scale.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self, NetworkError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for (name, shape) in spec.param_tensors()? {
            let n: usize = shape.iter().product();
            let values = if name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect()
            } else if name.ends_with(".bn.gamma") {
                vec![1.0; n]
            } else {
                vec![0.0; n]
            };
            params.insert(name, StoredTensor::f32(shape, values));
        }
        let running_stats = spec
            .running_tensors()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                let fill = if name.ends_with("running_var") { 1.0 } else { 0.0 };
                (name, StoredTensor::f32(shape, vec![fill; n]))
            })
            .collect();
        let class_names = (0..spec.n_classes).map(|i| format!("class{i}")).collect();
        Ok(Self { spec, params, running_stats, class_names, metadata: serde_json::Value::Null })
    }

    /// Every tensor the spec requires is present with the right shape, and
    /// nothing else is.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let check = |expected: Vec<(String, Vec<usize>)>, have: &BTreeMap<String, StoredTensor>| {
            if expected.len() != have.len() {
                return Err(NetworkError::InvalidModel(format!(
                    "{} tensors stored, spec needs {}",
                    have.len(),
                    expected.len()
                )));
            }
            for (name, shape) in expected {
                match have.get(&name) {
                    Some(t) if t.shape == shape => {
                        let len = match &t.data {
                            TensorData::F32(v) => v.len(),
                            TensorData::Q8 { values, .. } => values.len(),
                        };
                        if len != t.numel() {
                            return Err(NetworkError::InvalidModel(format!("{name}: payload length")));
                        }
                    }
                    Some(t) => {
                        return Err(NetworkError::InvalidModel(format!(
                            "{name}: shape {:?}, spec needs {shape:?}",
                            t.shape
                        )))
                    }
                    None => return Err(NetworkError::InvalidModel(format!("missing tensor {name}"))),
                }
            }
            Ok(())
        };
        check(self.spec.param_tensors()?, &self.params)?;
        check(self.spec.running_tensors(), &self.running_stats)?;
        if self.class_names.len() != self.spec.n_classes {
            return Err(NetworkError::InvalidModel(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.spec.n_classes
            )));
        }
        Ok(())
    }

    /// Learnable parameters actually stored.
    pub fn stored_param_count(&self) -> usize {
        self.params.values().map(StoredTensor::numel).sum()
    }

    /// Learnable parameters by closed form over the spec.
    pub fn count_params(&self) -> Result<usize, NetworkError> {
        count_params(&self.spec)
    }

    pub fn param(&self, name: &str) -> Option<&StoredTensor> {
        self.params.get(name)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = names;
        self
    }
}
