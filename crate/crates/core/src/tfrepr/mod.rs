//! Time–frequency representations (spectrogram, mel spectrogram, smoothed
//! spectrogram, gammatone cochleagram) and their fixed-size rasters.

mod gammatone;
mod mel;
mod raster;
mod smooth;
mod stft;

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio_io::{resample, AudioClip, AudioError};

pub use gammatone::{erb, erb_rate, erb_rate_to_hz, GammatoneConfig, GammatoneFilter};
pub use mel::{hz_to_mel, mel_to_hz, MelBank, MelConfig};
pub use raster::{jet, rasterize, resize_bilinear, write_png, Raster};
pub use smooth::{moving_average, smooth, SmoothingConfig};
pub use stft::{frame_count, log_floor, power, stft, StftConfig, Window};

#[derive(Debug, thiserror::Error)]
pub enum TfError {
    #[error("signal too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed TFR file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfKind {
    Spectrogram,
    Mel,
    Smoothed,
    Cochleagram,
}

impl TfKind {
    pub const ALL: [TfKind; 4] = [TfKind::Spectrogram, TfKind::Mel, TfKind::Smoothed, TfKind::Cochleagram];

    pub fn code(self) -> u8 {
        match self {
            TfKind::Spectrogram => 0,
            TfKind::Mel => 1,
            TfKind::Smoothed => 2,
            TfKind::Cochleagram => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            TfKind::Spectrogram => "spectrogram",
            TfKind::Mel => "mel",
            TfKind::Smoothed => "smoothed",
            TfKind::Cochleagram => "cochleagram",
        }
    }
}

impl std::str::FromStr for TfKind {
    type Err = TfError;
    fn from_str(s: &str) -> Result<Self, TfError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TfError::InvalidConfig(format!("unknown representation '{s}'")))
    }
}

/// Bins (row 0 = lowest frequency) × frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TfImage {
    pub kind: TfKind,
    pub matrix: Array2<f64>,
}

impl TfImage {
    pub fn raster(&self, size: usize, channels: usize) -> Result<Raster, TfError> {
        rasterize(&self.matrix, size, channels)
    }
}

/// `ln(max(|X|², ε))`.
pub fn spectrogram(clip: &AudioClip, cfg: &StftConfig) -> Result<TfImage, TfError> {
    let p = power(&stft(&clip.samples, cfg)?);
    Ok(TfImage { kind: TfKind::Spectrogram, matrix: log_floor(&p, cfg.log_floor) })
}

/// `ln(max(H·|X|², ε))`.
pub fn mel_spectrogram(clip: &AudioClip, cfg: &StftConfig, bank: &MelBank) -> Result<TfImage, TfError> {
    if bank.n_bins() != cfg.n_bins() || bank.sample_rate != clip.sample_rate {
        return Err(TfError::ShapeMismatch(format!(
            "mel bank built for {} bins at {} Hz, STFT gives {} bins at {} Hz",
            bank.n_bins(),
            bank.sample_rate,
            cfg.n_bins(),
            clip.sample_rate
        )));
    }
    let p = power(&stft(&clip.samples, cfg)?);
    Ok(TfImage { kind: TfKind::Mel, matrix: log_floor(&bank.apply(&p)?, cfg.log_floor) })
}

/// Log spectrogram averaged over `T` frames, then over `F` bins.
pub fn smoothed_spectrogram(clip: &AudioClip, cfg: &StftConfig, smoothing: &SmoothingConfig) -> Result<TfImage, TfError> {
    let s = spectrogram(clip, cfg)?;
    Ok(TfImage { kind: TfKind::Smoothed, matrix: smooth(&s.matrix, smoothing)? })
}

/// Mean squared gammatone output per window, log-compressed; channels × frames.
pub fn cochleagram(clip: &AudioClip, cfg: &GammatoneConfig) -> Result<TfImage, TfError> {
    let filters = cfg.filters(clip.sample_rate)?;
    let sr = f64::from(clip.sample_rate);
    let win = ((cfg.win_time * sr).round() as usize).max(1);
    let hop = ((cfg.hop_time * sr).round() as usize).max(1);
    let frames = frame_count(clip.len(), win, hop);
    if frames == 0 {
        return Err(TfError::TooShort { needed: win, got: clip.len() });
    }
    let mut m = Array2::zeros((filters.len(), frames));
    for (c, f) in filters.iter().enumerate() {
        let y = f.filter(&clip.samples);
        let mut prefix = Vec::with_capacity(y.len() + 1);
        prefix.push(0.0);
        for v in &y {
            prefix.push(prefix.last().unwrap() + v * v);
        }
        for r in 0..frames {
            let e = (prefix[r * hop + win] - prefix[r * hop]) / win as f64;
            m[[c, r]] = e.max(cfg.log_floor).ln();
        }
    }
    Ok(TfImage { kind: TfKind::Cochleagram, matrix: m })
}

/// Everything needed to turn a clip into a CNN input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub kind: TfKind,
    /// Clips at other rates are resampled first.
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub smoothing: SmoothingConfig,
    pub gammatone: GammatoneConfig,
    pub raster_size: usize,
    pub channels: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: TfKind::Cochleagram,
            sample_rate: 16_000,
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            smoothing: SmoothingConfig::default(),
            gammatone: GammatoneConfig::default(),
            raster_size: 64,
            channels: 3,
        }
    }
}

impl FeatureConfig {
    pub fn compute(&self, clip: &AudioClip) -> Result<TfImage, TfError> {
        let resampled;
        let clip = if clip.sample_rate == self.sample_rate {
            clip
        } else {
            resampled = resample(clip, self.sample_rate)?;
            &resampled
        };
        match self.kind {
            TfKind::Spectrogram => spectrogram(clip, &self.stft),
            TfKind::Mel => {
                let bank = MelBank::from_config(&self.mel, self.stft.n_fft, clip.sample_rate)?;
                mel_spectrogram(clip, &self.stft, &bank)
            }
            TfKind::Smoothed => smoothed_spectrogram(clip, &self.stft, &self.smoothing),
            TfKind::Cochleagram => cochleagram(clip, &self.gammatone),
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.channels, self.raster_size, self.raster_size]
    }
}

pub const TFR_MAGIC: &[u8; 4] = b"TFR1";

/// `TFR1`, u32 rows, u32 cols, u8 kind, row-major f32 little-endian.
pub fn tfr_to_bytes(img: &TfImage) -> Vec<u8> {
    let (rows, cols) = img.matrix.dim();
    let mut out = Vec::with_capacity(13 + rows * cols * 4);
    out.extend_from_slice(TFR_MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.push(img.kind.code());
    for v in img.matrix.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn tfr_from_bytes(bytes: &[u8]) -> Result<TfImage, TfError> {
    if bytes.len() < 13 || &bytes[..4] != TFR_MAGIC {
        return Err(TfError::Malformed("missing TFR1 header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let kind = TfKind::from_code(bytes[12]).ok_or_else(|| TfError::Malformed(format!("kind code {}", bytes[12])))?;
    let body = &bytes[13..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
        return Err(TfError::Malformed(format!("{rows}×{cols} needs {} bytes, found {}", rows * cols * 4, body.len())));
    }
    let data: Vec<f64> = body.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect();
    let matrix = Array2::from_shape_vec((rows, cols), data).expect("length checked");
    Ok(TfImage { kind, matrix })
}

pub fn write_tfr(img: &TfImage, path: impl AsRef<Path>) -> Result<(), TfError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&tfr_to_bytes(img))?;
    Ok(())
}

pub fn read_tfr(path: impl AsRef<Path>) -> Result<TfImage, TfError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    tfr_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, sr: u32, n: usize, amp: f64) -> AudioClip {
        AudioClip::new((0..n).map(|i| amp * (2.0 * PI * f * i as f64 / f64::from(sr)).sin()).collect(), sr)
    }

    #[test]
    fn silence_is_log_floor() {
        let clip = AudioClip::new(vec![0.0; 4096], 16_000);
        let cfg = StftConfig::default();
        let s = spectrogram(&clip, &cfg).unwrap();
        assert!(s.matrix.iter().all(|&v| v == 1e-10f64.ln()));
        let bank = MelBank::from_config(&MelConfig::default(), 1024, 16_000).unwrap();
        let m = mel_spectrogram(&clip, &cfg, &bank).unwrap();
        assert!(m.matrix.iter().all(|&v| v == 1e-10f64.ln()));
        let c = cochleagram(&clip, &GammatoneConfig::default()).unwrap();
        assert!(c.matrix.iter().all(|&v| v == 1e-10f64.ln()));
    }

    #[test]
    fn sixty_second_dimensions() {
        assert_eq!(frame_count(960_000, 1024, 512), 1874);
        let clip = tone(440.0, 16_000, 16_000 * 3, 0.5);
        let s = spectrogram(&clip, &StftConfig::default()).unwrap();
        assert_eq!(s.matrix.dim(), (513, frame_count(48_000, 1024, 512)));
    }

    #[test]
    fn scaling_adds_log_constant() {
        let a = tone(1000.0, 16_000, 4096, 0.05);
        let b = AudioClip::new(a.samples.iter().map(|v| v * 10.0).collect(), 16_000);
        let cfg = StftConfig::default();
        let (sa, sb) = (spectrogram(&a, &cfg).unwrap(), spectrogram(&b, &cfg).unwrap());
        let floor = 1e-10f64.ln();
        for (x, y) in sa.matrix.iter().zip(sb.matrix.iter()) {
            if *x > floor + 1.0 {
                assert!((y - x - 2.0 * 10f64.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mel_bank_mismatch() {
        let clip = tone(440.0, 16_000, 4096, 0.5);
        let bank = MelBank::new(16, 512, 16_000, 0.0, 8000.0).unwrap();
        assert!(matches!(mel_spectrogram(&clip, &StftConfig::default(), &bank), Err(TfError::ShapeMismatch(_))));
    }

    #[test]
    fn cochleagram_shape() {
        let clip = tone(300.0, 16_000, 32_000, 0.5);
        let c = cochleagram(&clip, &GammatoneConfig::default()).unwrap();
        // 400-sample windows every 160 samples
        assert_eq!(c.matrix.dim(), (32, 1 + (32_000 - 400) / 160));
        assert!(c.matrix.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn tfr_round_trip_and_errors() {
        let img = TfImage {
            kind: TfKind::Smoothed,
            matrix: Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 * 0.25),
        };
        let b = tfr_to_bytes(&img);
        assert_eq!(&b[..4], b"TFR1");
        assert_eq!(b.len(), 13 + 60);
        assert_eq!(b[12], 2);
        assert_eq!(tfr_from_bytes(&b).unwrap(), img);
        assert!(tfr_from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[12] = 9;
        assert!(tfr_from_bytes(&bad).is_err());
    }

    #[test]
    fn every_kind_rasterizes() {
        let clip = tone(250.0, 22_050, 22_050, 0.3);
        for kind in TfKind::ALL {
            let cfg = FeatureConfig { kind, ..Default::default() };
            let img = cfg.compute(&clip).unwrap();
            assert_eq!(img.kind, kind);
            let r = img.raster(64, 3).unwrap();
            assert_eq!(r.data.len(), 3 * 64 * 64);
            assert_eq!(kind.name().parse::<TfKind>().unwrap(), kind);
        }
    }
}
