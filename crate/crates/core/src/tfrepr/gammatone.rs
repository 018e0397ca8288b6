//! Gammatone filterbank.
//!
//! Each channel realizes the sampled impulse response
//! `h[n] = A·Re(e^{iφ}·n^{j−1}·r^n)` with `r = exp((−2πB + i·2πf_c)/fs)`
//! exactly, as a rational filter: `Σ n^k x^n = x·A_k(x)/(1 − x)^{k+1}` where
//! `A_k` is the Eulerian polynomial. The denominator runs as a cascade of
//! complex one-pole sections, which stays well conditioned for narrow bands.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TfError;

pub fn erb(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

/// ERB-rate (number of ERBs below `f`).
pub fn erb_rate(f: f64) -> f64 {
    21.4 * (4.37 * f / 1000.0 + 1.0).log10()
}

pub fn erb_rate_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammatoneConfig {
    pub n_channels: usize,
    pub f_min: f64,
    pub order: usize,
    /// B = bandwidth_scale · ERB(f_c)
    pub bandwidth_scale: f64,
    pub phase: f64,
    pub win_time: f64,
    pub hop_time: f64,
    pub log_floor: f64,
}

impl Default for GammatoneConfig {
    fn default() -> Self {
        Self {
            n_channels: 32,
            f_min: 20.0,
            order: 4,
            bandwidth_scale: 1.019,
            phase: 0.0,
            win_time: 0.025,
            hop_time: 0.010,
            log_floor: 1e-10,
        }
    }
}

impl GammatoneConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), TfError> {
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.f_min > 0.0 && self.f_min < nyquist) {
            return Err(TfError::InvalidBand(format!("f_min {} Hz not in (0, {nyquist})", self.f_min)));
        }
        if self.n_channels == 0 || self.order == 0 || !(self.bandwidth_scale > 0.0) {
            return Err(TfError::InvalidConfig("channels, order and bandwidth must be positive".into()));
        }
        if !(self.win_time > self.hop_time && self.hop_time > 0.0) {
            return Err(TfError::InvalidConfig(format!(
                "need win_time > hop_time > 0, got {} / {}",
                self.win_time, self.hop_time
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(TfError::InvalidConfig("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Centers equally spaced in ERB-rate, starting at `f_min` and stepping
    /// towards (but not reaching) the Nyquist frequency; strictly increasing.
    pub fn center_frequencies(&self, sample_rate: u32) -> Result<Vec<f64>, TfError> {
        self.validate(sample_rate)?;
        let lo = erb_rate(self.f_min);
        let hi = erb_rate(f64::from(sample_rate) / 2.0);
        let step = (hi - lo) / self.n_channels as f64;
        Ok((0..self.n_channels).map(|i| erb_rate_to_hz(lo + step * i as f64)).collect())
    }

    pub fn filters(&self, sample_rate: u32) -> Result<Vec<GammatoneFilter>, TfError> {
        Ok(self
            .center_frequencies(sample_rate)?
            .into_iter()
            .map(|fc| GammatoneFilter::new(fc, self.bandwidth_scale * erb(fc), self.order, self.phase, sample_rate))
            .collect())
    }
}

/// Eulerian number ⟨k, m⟩.
fn eulerian(k: usize, m: usize) -> f64 {
    let binom = |n: usize, r: usize| -> f64 { (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
    (0..=m)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * binom(k + 1, i) * ((m + 1 - i) as f64).powi(k as i32)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammatoneFilter {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub order: usize,
    pub phase: f64,
    /// Normalizer giving unit magnitude response at the center frequency.
    pub gain: f64,
    pole: Complex64,
    /// Coefficients of z^{-m}, m = 0..
    numerator: Vec<Complex64>,
    sample_rate: u32,
}

impl GammatoneFilter {
    pub fn new(center_hz: f64, bandwidth_hz: f64, order: usize, phase: f64, sample_rate: u32) -> Self {
        let fs = f64::from(sample_rate);
        let pole = Complex64::new(-2.0 * PI * bandwidth_hz / fs, 2.0 * PI * center_hz / fs).exp();
        let k = order - 1;
        let numerator = if k == 0 {
            vec![Complex64::new(1.0, 0.0)]
        } else {
            let mut c = vec![Complex64::new(0.0, 0.0); k + 1];
            for m in 1..=k {
                c[m] = eulerian(k, m - 1) * pole.powu(m as u32);
            }
            c
        };
        let mut f = Self { center_hz, bandwidth_hz, order, phase, gain: 1.0, pole, numerator, sample_rate };
        f.gain = 1.0 / f.response(center_hz).norm();
        f
    }

    fn complex_response(&self, omega: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -omega);
        let num: Complex64 = self.numerator.iter().enumerate().map(|(m, c)| c * zinv.powu(m as u32)).sum();
        num / (Complex64::new(1.0, 0.0) - self.pole * zinv).powu(self.order as u32)
    }

    /// Frequency response of the real filter at `hz`.
    pub fn response(&self, hz: f64) -> Complex64 {
        let omega = 2.0 * PI * hz / f64::from(self.sample_rate);
        let e = Complex64::from_polar(1.0, self.phase);
        self.gain * 0.5 * (e * self.complex_response(omega) + e.conj() * self.complex_response(-omega).conj())
    }

    /// `A·Re(e^{iφ} n^{j−1} r^n)` evaluated directly for n = 0..len.
    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let e = Complex64::from_polar(1.0, self.phase);
        (0..len)
            .map(|n| {
                let poly = (n as f64).powi(self.order as i32 - 1);
                self.gain * (e * poly * self.pole.powu(n as u32)).re
            })
            .collect()
    }

    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let n_taps = self.numerator.len();
        let mut stage: Vec<Complex64> = (0..x.len())
            .map(|n| {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..n_taps.min(n + 1) {
                    acc += self.numerator[m] * x[n - m];
                }
                acc
            })
            .collect();
        for _ in 0..self.order {
            let mut prev = Complex64::new(0.0, 0.0);
            for v in stage.iter_mut() {
                prev = *v + self.pole * prev;
                *v = prev;
            }
        }
        let e = Complex64::from_polar(1.0, self.phase);
        stage.iter().map(|v| self.gain * (e * v).re).collect()
    }
}
