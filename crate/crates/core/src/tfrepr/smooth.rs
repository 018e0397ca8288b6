use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::TfError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    /// Time window in frames (odd).
    pub time: usize,
    /// Frequency window in bins (odd).
    pub freq: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { time: 5, freq: 5 }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<(), TfError> {
        if self.time == 0 || self.freq == 0 || self.time % 2 == 0 || self.freq % 2 == 0 {
            return Err(TfError::InvalidConfig(format!(
                "smoothing windows must be odd and positive, got T={} F={}",
                self.time, self.freq
            )));
        }
        Ok(())
    }
}

/// Centered moving average of width `w` along `axis`; windows shrink at the
/// borders to the samples that exist.
pub fn moving_average(m: &Array2<f64>, w: usize, axis: Axis) -> Array2<f64> {
    let r = w / 2;
    let mut out = m.clone();
    for (src, mut dst) in m.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = src.len();
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + src[i];
        }
        for i in 0..n {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(n);
            dst[i] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        }
    }
    out
}

/// Time averaging (columns are frames) followed by frequency averaging.
pub fn smooth(m: &Array2<f64>, cfg: &SmoothingConfig) -> Result<Array2<f64>, TfError> {
    cfg.validate()?;
    let (bins, frames) = m.dim();
    if cfg.time > frames || cfg.freq > bins {
        return Err(TfError::TooShort { needed: cfg.time.max(cfg.freq), got: frames.min(bins) });
    }
    let t = moving_average(m, cfg.time, Axis(1));
    Ok(moving_average(&t, cfg.freq, Axis(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_stays_constant() {
        let m = Array2::from_elem((7, 9), 2.5);
        let s = smooth(&m, &SmoothingConfig::default()).unwrap();
        assert!(s.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn impulse_spreads_over_three_frames() {
        let mut m = Array2::zeros((3, 7));
        m[[1, 3]] = 1.0;
        let s = smooth(&m, &SmoothingConfig { time: 3, freq: 1 }).unwrap();
        assert_eq!(s.row(1).to_vec(), vec![0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0]);
        assert!(s.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn borders_use_valid_neighbors() {
        let m = array![[1.0, 2.0, 3.0, 4.0]];
        let s = moving_average(&m, 3, Axis(1));
        assert_eq!(s, array![[1.5, 2.0, 3.0, 3.5]]);
    }

    #[test]
    fn rejects_even_or_oversized() {
        let m = Array2::zeros((4, 4));
        assert!(smooth(&m, &SmoothingConfig { time: 2, freq: 1 }).is_err());
        assert!(smooth(&m, &SmoothingConfig { time: 5, freq: 1 }).is_err());
    }
}
