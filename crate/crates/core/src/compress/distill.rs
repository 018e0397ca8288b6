//! Teacher–student knowledge distillation.

use serde::{Deserialize, Serialize};

use crate::autograd::{
    cross_entropy, one_hot, softmax, softmax_cross_entropy_grad, softmax_t, Scalar, Tensor,
};
use crate::network::{
    eval_logits, fit, BatchLoss, Dataset, History, Model, Network, NetworkError, NetworkSpec,
    Objective, TrainingConfig,
};

use super::CompressError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub temperature: f64,
    /// Weight of the teacher-matching term.
    pub alpha: f64,
    /// Weight of the ground-truth term.
    pub beta: f64,
    pub training: TrainingConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { temperature: 4.0, alpha: 0.7, beta: 0.3, training: TrainingConfig::default() }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<(), CompressError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(CompressError::InvalidTemperature(self.temperature));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(CompressError::InvalidConfig(format!(
                "need alpha, beta >= 0 with alpha + beta > 0 (got {}, {})",
                self.alpha, self.beta
            )));
        }
        self.training.validate()?;
        Ok(())
    }
}

pub fn softmax_with_temperature<T: Scalar>(
    logits: &Tensor<T>,
    temperature: f64,
) -> Result<Tensor<T>, CompressError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(CompressError::InvalidTemperature(temperature));
    }
    Ok(softmax_t(logits, T::from_f64_lossy(temperature)))
}

/// Mean cross-entropy of the student's softened distribution against the
/// teacher's softened distribution.
pub fn distillation_loss<T: Scalar>(
    student_probs: &Tensor<T>,
    teacher_probs: &Tensor<T>,
) -> Result<T, CompressError> {
    Ok(cross_entropy(student_probs, teacher_probs).map_err(NetworkError::from)?)
}

/// Loss value with its two components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts<T> {
    pub total: T,
    pub distill: T,
    pub ground_truth: T,
}

/// `α·CE(softmax(z/Γ), teacher) + β·CE(softmax(z), one_hot(labels))`.
pub fn total_loss<T: Scalar>(
    student_logits: &Tensor<T>,
    labels: &[usize],
    teacher_probs: &Tensor<T>,
    alpha: f64,
    beta: f64,
    temperature: f64,
) -> Result<LossParts<T>, CompressError> {
    let k = *student_logits.shape().last().unwrap_or(&0);
    let soft = softmax_with_temperature(student_logits, temperature)?;
    let distill = distillation_loss(&soft, teacher_probs)?;
    let target = one_hot::<T>(labels, k).map_err(NetworkError::from)?;
    let ground_truth = cross_entropy(&softmax(student_logits), &target).map_err(NetworkError::from)?;
    let total = T::from_f64_lossy(alpha) * distill + T::from_f64_lossy(beta) * ground_truth;
    Ok(LossParts { total, distill, ground_truth })
}

struct DistillObjective {
    teacher_probs: Vec<f32>,
    n_classes: usize,
    alpha: f64,
    beta: f64,
    temperature: f64,
}

impl Objective for DistillObjective {
    fn evaluate(&self, logits: &Tensor<f32>, idx: &[usize], labels: &[usize]) -> Result<BatchLoss, NetworkError> {
        let k = self.n_classes;
        let mut t = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            t.extend_from_slice(&self.teacher_probs[i * k..(i + 1) * k]);
        }
        let teacher = Tensor::new(vec![idx.len(), k], t)?;
        let gamma = self.temperature as f32;

        let soft = softmax_t(logits, gamma);
        let distill = cross_entropy(&soft, &teacher)?;
        let d_grad = softmax_cross_entropy_grad(&soft, &teacher, gamma)?;

        let hard = softmax(logits);
        let target = one_hot::<f32>(labels, k)?;
        let gt = cross_entropy(&hard, &target)?;
        let g_grad = softmax_cross_entropy_grad(&hard, &target, 1.0)?;

        let (a, b) = (self.alpha as f32, self.beta as f32);
        let mut grad = g_grad;
        for (g, &d) in grad.data_mut().iter_mut().zip(d_grad.data()) {
            *g = a * d + b * *g;
        }
        let total = a * distill + b * gt;
        Ok(BatchLoss { total: f64::from(total), components: Some((f64::from(distill), f64::from(gt))), grad })
    }
}

/// Trains a fresh student against the frozen teacher's softened outputs.
///
/// Teacher probabilities are computed once, in inference mode, before
/// training starts; the teacher model is only read.
pub fn distill(
    teacher: &Model,
    student_spec: &NetworkSpec,
    data: &Dataset,
    cfg: &DistillConfig,
) -> Result<(Model, History), CompressError> {
    cfg.validate()?;
    if teacher.spec.input_shape != student_spec.input_shape || teacher.spec.n_classes != student_spec.n_classes {
        return Err(NetworkError::ShapeMismatch(format!(
            "teacher {:?}/{} vs student {:?}/{}",
            teacher.spec.input_shape, teacher.spec.n_classes, student_spec.input_shape, student_spec.n_classes
        ))
        .into());
    }
    let net = Network::<f32>::from_model(teacher)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let logits = eval_logits(&net, data, &all, cfg.training.batch_size)?;
    let teacher_probs = softmax_with_temperature(&logits, cfg.temperature)?.into_data();

    let init = Model::init(student_spec.clone(), cfg.training.seed)?
        .with_class_names(teacher.class_names.clone());
    let objective = DistillObjective {
        teacher_probs,
        n_classes: student_spec.n_classes,
        alpha: cfg.alpha,
        beta: cfg.beta,
        temperature: cfg.temperature,
    };
    Ok(fit(&init, data, &cfg.training, &objective)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn unit_temperature_is_plain_softmax() {
        let z = t(&[2, 3], &[0.1, -2.0, 3.0, 1.0, 1.0, 0.0]);
        assert_eq!(softmax_with_temperature(&z, 1.0).unwrap(), softmax(&z));
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let z = t(&[1, 4], &[10.0, -3.0, 0.5, 7.0]);
        let p = softmax_with_temperature(&z, 1e6).unwrap();
        assert!(p.data().iter().all(|&x| (x - 0.25).abs() < 1e-4));
    }

    #[test]
    fn non_positive_temperature_rejected() {
        let z = t(&[1, 2], &[0.0, 1.0]);
        assert!(matches!(softmax_with_temperature(&z, 0.0), Err(CompressError::InvalidTemperature(_))));
        assert!(softmax_with_temperature(&z, -1.0).is_err());
    }

    #[test]
    fn uniform_student_gives_ln2() {
        let teacher = softmax(&t(&[1, 2], &[2.0, 0.0]));
        let student = softmax(&t(&[1, 2], &[0.0, 0.0]));
        let l = distillation_loss(&student, &teacher).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn weights_select_components() {
        let z = t(&[2, 3], &[0.3, -1.0, 2.0, 0.0, 0.5, -0.5]);
        let teacher = softmax_with_temperature(&t(&[2, 3], &[1.0, 0.0, 2.0, 3.0, 0.0, 0.0]), 4.0).unwrap();
        let labels = [2, 0];
        let ce = cross_entropy(&softmax(&z), &one_hot(&labels, 3).unwrap()).unwrap();
        assert_eq!(total_loss(&z, &labels, &teacher, 0.0, 1.0, 4.0).unwrap().total, ce);
        let parts = total_loss(&z, &labels, &teacher, 1.0, 0.0, 4.0).unwrap();
        assert_eq!(parts.total, parts.distill);
    }

    #[test]
    fn config_validation() {
        assert!(DistillConfig::default().validate().is_ok());
        let bad = DistillConfig { alpha: 0.0, beta: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = DistillConfig { temperature: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(CompressError::InvalidTemperature(_))));
    }
}
