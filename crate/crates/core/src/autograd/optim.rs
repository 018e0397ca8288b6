use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use super::AutogradError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub lr0: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { lr0: 1e-3, rho: 0.9, eps: 1e-8 }
    }
}

/// Step learning-rate decay: `lr0 · factor^floor(epoch / interval)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub lr0: f64,
    pub factor: f64,
    pub interval: usize,
}

impl StepSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        let steps = epoch / self.interval.max(1);
        self.lr0 * self.factor.powi(steps as i32)
    }
}

/// Squared-gradient caches, one per parameter tensor, in parameter order.
#[derive(Clone, Debug, Default)]
pub struct RmsPropState<T> {
    cache: Vec<Vec<T>>,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new() -> Self {
        Self { cache: Vec::new() }
    }

    pub fn for_params(params: &[&Tensor<T>]) -> Self {
        Self { cache: params.iter().map(|p| vec![T::zero(); p.len()]).collect() }
    }
}

/// `cache ← ρ·cache + (1−ρ)·g²;  p ← p − lr·g / (sqrt(cache) + eps)`.
///
/// Parameters without an allocated gradient are skipped.
pub fn rmsprop_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    state: &mut RmsPropState<T>,
    cfg: &RmsPropConfig,
    lr: f64,
) -> Result<(), AutogradError> {
    if state.cache.is_empty() {
        state.cache = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
    }
    if state.cache.len() != params.len() {
        return Err(AutogradError::ShapeMismatch(format!(
            "rmsprop: {} caches for {} parameters",
            state.cache.len(),
            params.len()
        )));
    }
    let rho = T::from_f64_lossy(cfg.rho);
    let one_minus_rho = T::from_f64_lossy(1.0 - cfg.rho);
    let eps = T::from_f64_lossy(cfg.eps);
    let lr = T::from_f64_lossy(lr);
    for (p, cache) in params.iter_mut().zip(state.cache.iter_mut()) {
        if cache.len() != p.len() {
            return Err(AutogradError::ShapeMismatch(format!(
                "rmsprop: cache of {} for parameter {:?}",
                cache.len(),
                p.shape()
            )));
        }
        if p.grad().is_none() {
            continue;
        }
        let (value, grad) = p.value_and_grad_mut();
        for ((w, &g), c) in value.iter_mut().zip(grad.iter()).zip(cache.iter_mut()) {
            *c = rho * *c + one_minus_rho * g * g;
            *w = *w - lr * g / (c.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_every_six_epochs() {
        let s = StepSchedule { lr0: 1e-3, factor: 0.5, interval: 6 };
        assert_eq!(s.lr(0), 1e-3);
        assert_eq!(s.lr(5), 1e-3);
        assert_eq!(s.lr(6), 5e-4);
        assert_eq!(s.lr(13), 2.5e-4);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut p = Tensor::<f32>::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap().into_param();
        p.accumulate_grad(&[0.3, 0.1, -4.0]).unwrap();
        let before = p.data().to_vec();
        let mut st = RmsPropState::new();
        rmsprop_step(&mut [&mut p], &mut st, &RmsPropConfig::default(), 0.0).unwrap();
        assert_eq!(p.data(), before.as_slice());
    }

    #[test]
    fn scalar_trace_matches_manual_recurrence() {
        // p0 = 1, g = 0.5 constant, lr = 0.1, rho = 0.9, eps = 1e-8.
        // Values computed by stepping the recurrence by hand in double precision.
        let expected = [
            0.683_772_253_983_160_8,
            0.454_356_530_638_914_3,
            0.262_261_850_420_163_15,
            0.091_738_484_192_820_71,
            -0.064_528_679_890_399_54,
        ];
        let cfg = RmsPropConfig { lr0: 0.1, rho: 0.9, eps: 1e-8 };
        let mut p = Tensor::<f64>::new(vec![1], vec![1.0]).unwrap().into_param();
        let mut st = RmsPropState::new();
        for want in expected {
            p.zero_grad();
            p.accumulate_grad(&[0.5]).unwrap();
            rmsprop_step(&mut [&mut p], &mut st, &cfg, cfg.lr0).unwrap();
            assert!((p.data()[0] - want).abs() < 1e-12, "{} vs {want}", p.data()[0]);
        }
    }
}
