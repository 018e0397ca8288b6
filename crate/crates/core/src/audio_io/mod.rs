//! Audio ingestion: WAV decoding, band-limited resampling, fixed-length
//! segmentation and waveform augmentation.

mod augment;
mod resample;
mod wav;

pub use augment::{
    augment, augment_with_cap, default_augmentations, pitch_shift, speed_change, time_stretch,
    AugmentKind, AugmentSpec, SEMITONE_CAP,
};
pub use resample::{resample, resample_ratio};
pub use wav::{load_wav, write_wav};

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedHeader(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid sample rate {0}")]
    InvalidRate(f64),
    #[error("invalid augmentation: {0}")]
    InvalidFactor(String),
    #[error("audio I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono audio in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub label: Option<usize>,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate, label: None, source_id: String::new() }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self { samples, ..self.clone() }
    }
}

/// Scales the buffer down if any sample left `[-1, 1]`; non-finite values
/// become 0.
pub(crate) fn renormalize(mut x: Vec<f64>) -> Vec<f64> {
    x.iter_mut().filter(|v| !v.is_finite()).for_each(|v| *v = 0.0);
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        x.iter_mut().for_each(|v| *v /= peak);
    }
    x
}

/// Non-overlapping windows of `seconds`; a trailing partial window is dropped.
pub fn segment(clip: &AudioClip, seconds: f64) -> Vec<AudioClip> {
    let len = (seconds * f64::from(clip.sample_rate)).round() as usize;
    if !(seconds > 0.0) || len == 0 {
        return Vec::new();
    }
    clip.samples
        .chunks_exact(len)
        .enumerate()
        .map(|(i, w)| AudioClip {
            samples: w.to_vec(),
            sample_rate: clip.sample_rate,
            label: clip.label,
            source_id: format!("{}#{i}", clip.source_id),
        })
        .collect()
}
