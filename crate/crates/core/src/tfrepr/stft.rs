use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::TfError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
    pub log_floor: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { n_fft: 1024, hop: 512, window: Window::Hann, log_floor: 1e-10 }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), TfError> {
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(TfError::InvalidConfig(format!("n_fft {} is not a power of two", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(TfError::InvalidConfig(format!("hop {} outside (0, n_fft]", self.hop)));
        }
        if !(self.log_floor > 0.0) {
            return Err(TfError::InvalidConfig("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// `1 + floor((len − n_fft)/hop)`, or 0 when the signal is shorter than a frame.
pub fn frame_count(len: usize, n_fft: usize, hop: usize) -> usize {
    if len < n_fft || hop == 0 {
        0
    } else {
        1 + (len - n_fft) / hop
    }
}

/// One-sided STFT, `n_fft/2 + 1` bins × frames, no edge padding.
pub fn stft(samples: &[f64], cfg: &StftConfig) -> Result<Array2<Complex64>, TfError> {
    cfg.validate()?;
    if samples.len() < cfg.n_fft {
        return Err(TfError::TooShort { needed: cfg.n_fft, got: samples.len() });
    }
    let frames = frame_count(samples.len(), cfg.n_fft, cfg.hop);
    let bins = cfg.n_bins();
    let window = cfg.window.coefficients(cfg.n_fft);
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let mut out = Array2::zeros((bins, frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
    for r in 0..frames {
        let frame = &samples[r * cfg.hop..r * cfg.hop + cfg.n_fft];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            out[[k, r]] = buf[k];
        }
    }
    Ok(out)
}

/// `|X|²` per bin and frame.
pub fn power(spec: &Array2<Complex64>) -> Array2<f64> {
    spec.mapv(|z| z.norm_sqr())
}

pub fn log_floor(m: &Array2<f64>, eps: f64) -> Array2<f64> {
    m.mapv(|v| v.max(eps).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| Complex64::from_polar(v, -2.0 * PI * (k * i) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::default().validate().is_ok());
        assert!(StftConfig { n_fft: 1000, ..Default::default() }.validate().is_err());
        assert!(StftConfig { hop: 0, ..Default::default() }.validate().is_err());
        assert!(StftConfig { hop: 2048, ..Default::default() }.validate().is_err());
        assert!(StftConfig { log_floor: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn matches_naive_dft() {
        let cfg = StftConfig { n_fft: 64, hop: 16, window: Window::Hann, log_floor: 1e-10 };
        let x: Vec<f64> = (0..200).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let s = stft(&x, &cfg).unwrap();
        assert_eq!(s.dim(), (33, frame_count(200, 64, 16)));
        let w = cfg.window.coefficients(64);
        for r in [0, 3, s.ncols() - 1] {
            let frame: Vec<f64> = (0..64).map(|i| x[r * 16 + i] * w[i]).collect();
            let d = naive_dft(&frame);
            for k in 0..33 {
                assert!((s[[k, r]] - d[k]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn too_short_rejected() {
        assert!(matches!(stft(&[0.0; 10], &StftConfig::default()), Err(TfError::TooShort { .. })));
    }

    #[test]
    fn zeros_give_zeros() {
        let s = stft(&[0.0; 4096], &StftConfig::default()).unwrap();
        assert!(s.iter().all(|z| z.norm() == 0.0));
    }
}
