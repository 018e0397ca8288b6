use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::TfError;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    /// Upper edge in Hz; `None` means the Nyquist frequency.
    pub f_max: Option<f64>,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self { n_mels: 64, f_min: 0.0, f_max: None }
    }
}

/// Triangular filters equally spaced on the mel scale, peak weight 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MelBank {
    pub n_mels: usize,
    pub n_fft: usize,
    pub sample_rate: u32,
    pub f_min: f64,
    pub f_max: f64,
    /// n_mels × (n_fft/2 + 1)
    pub weights: Array2<f64>,
}

impl MelBank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Self, TfError> {
        let nyquist = f64::from(sample_rate) / 2.0;
        if n_mels == 0 || !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(TfError::InvalidBand(format!(
                "{n_mels} mel filters over [{f_min}, {f_max}] Hz at {sample_rate} Hz"
            )));
        }
        let bins = n_fft / 2 + 1;
        let bin_hz = f64::from(sample_rate) / n_fft as f64;
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> =
            (0..n_mels + 2).map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64)).collect();
        let mut weights = Array2::zeros((n_mels, bins));
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                weights[[m, k]] = w;
            }
            // filters narrower than a bin still see their nearest bin
            if weights.row(m).iter().all(|&w| w == 0.0) {
                let k = ((mid / bin_hz).round() as usize).min(bins - 1);
                weights[[m, k]] = 1.0;
            }
        }
        Ok(Self { n_mels, n_fft, sample_rate, f_min, f_max, weights })
    }

    pub fn from_config(cfg: &MelConfig, n_fft: usize, sample_rate: u32) -> Result<Self, TfError> {
        let f_max = cfg.f_max.unwrap_or(f64::from(sample_rate) / 2.0);
        Self::new(cfg.n_mels, n_fft, sample_rate, cfg.f_min, f_max)
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    /// Center frequency of filter `m`, Hz.
    pub fn center_hz(&self, m: usize) -> f64 {
        let (lo, hi) = (hz_to_mel(self.f_min), hz_to_mel(self.f_max));
        mel_to_hz(lo + (hi - lo) * (m + 1) as f64 / (self.n_mels + 1) as f64)
    }

    /// `H · P` for a bins × frames power matrix.
    pub fn apply(&self, power: &Array2<f64>) -> Result<Array2<f64>, TfError> {
        if power.nrows() != self.n_bins() {
            return Err(TfError::ShapeMismatch(format!(
                "mel bank expects {} bins, spectrum has {}",
                self.n_bins(),
                power.nrows()
            )));
        }
        Ok(self.weights.dot(power))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trip() {
        for f in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.985).abs() < 1e-2);
    }

    #[test]
    fn filters_nonnegative_and_contiguous() {
        let bank = MelBank::new(64, 1024, 16_000, 0.0, 8000.0).unwrap();
        assert_eq!(bank.weights.dim(), (64, 513));
        for row in bank.weights.rows() {
            assert!(row.iter().all(|&w| w >= 0.0 && w <= 1.0));
            let nz: Vec<usize> = row.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(k, _)| k).collect();
            assert!(!nz.is_empty());
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len(), "support not contiguous");
        }
    }

    #[test]
    fn bad_band_rejected() {
        assert!(MelBank::new(64, 1024, 16_000, 0.0, 9000.0).is_err());
        assert!(MelBank::new(0, 1024, 16_000, 0.0, 8000.0).is_err());
        assert!(MelBank::new(8, 1024, 16_000, 500.0, 400.0).is_err());
    }

    #[test]
    fn apply_checks_bins() {
        let bank = MelBank::new(8, 64, 8000, 0.0, 4000.0).unwrap();
        assert!(matches!(bank.apply(&Array2::zeros((10, 3))), Err(TfError::ShapeMismatch(_))));
    }
}
