use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::resample::resample_ratio;
use super::{renormalize, AudioClip, AudioError};

/// Default bound on |semitones| for pitch shifting.
pub const SEMITONE_CAP: f64 = 12.0;

const PV_FFT: usize = 1024;
const PV_HOP: usize = PV_FFT / 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentKind {
    /// Frequencies scale by 2^(semitones/12); duration kept.
    PitchShift { semitones: f64 },
    /// Duration scales by `factor`; pitch kept.
    TimeStretch { factor: f64 },
    /// Plays back `factor` times faster: duration / factor, pitch · factor.
    SpeedChange { factor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    pub seed: u64,
}

/// Pitch ±2 semitones, stretch 0.9/1.1, speed 0.9/1.1.
pub fn default_augmentations() -> Vec<AugmentKind> {
    vec![
        AugmentKind::PitchShift { semitones: -2.0 },
        AugmentKind::PitchShift { semitones: 2.0 },
        AugmentKind::TimeStretch { factor: 0.9 },
        AugmentKind::TimeStretch { factor: 1.1 },
        AugmentKind::SpeedChange { factor: 0.9 },
        AugmentKind::SpeedChange { factor: 1.1 },
    ]
}

fn check_factor(f: f64) -> Result<(), AudioError> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(AudioError::InvalidFactor(format!("factor {f} must be positive and finite")))
    }
}

fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * ((p + PI) / (2.0 * PI)).floor()
}

/// Phase-vocoder stretch of a raw buffer: output length `round(len·factor)`.
fn vocoder(x: &[f64], factor: f64) -> Vec<f64> {
    let out_len = (x.len() as f64 * factor).round() as usize;
    let n = PV_FFT;
    let half = n / 2;
    let window: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    // analysis positions index a signal padded by n/2 zeros on both sides
    let sample = |i: isize| -> f64 {
        let j = i - half as isize;
        if j >= 0 && (j as usize) < x.len() {
            x[j as usize]
        } else {
            0.0
        }
    };
    let ha = PV_HOP as f64 / factor;
    let n_frames = (out_len + n) / PV_HOP + 2;
    let mut out = vec![0.0; out_len + 2 * n];
    let mut norm = vec![0.0; out_len + 2 * n];
    let mut phase = vec![0.0; half + 1];
    let mut prev_arg = vec![0.0; half + 1];
    let mut prev_start = 0isize;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];

    for m in 0..n_frames {
        let start = (m as f64 * ha).round() as isize;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(sample(start + i as isize) * window[i], 0.0);
        }
        fwd.process(&mut buf);
        let delta = (start - prev_start) as f64;
        for k in 0..=half {
            let omega = 2.0 * PI * k as f64 / n as f64;
            let arg = buf[k].arg();
            if m == 0 {
                phase[k] = arg;
            } else {
                let freq = if delta > 0.0 {
                    omega + wrap_phase(arg - prev_arg[k] - omega * delta) / delta
                } else {
                    omega
                };
                phase[k] += freq * PV_HOP as f64;
            }
            prev_arg[k] = arg;
        }
        prev_start = start;
        for k in 0..=half {
            buf[k] = Complex64::from_polar(buf[k].norm(), phase[k]);
        }
        for k in 1..half {
            buf[n - k] = buf[k].conj();
        }
        inv.process(&mut buf);
        let at = m * PV_HOP;
        if at + n > out.len() {
            break;
        }
        for i in 0..n {
            out[at + i] += buf[i].re / n as f64 * window[i];
            norm[at + i] += window[i] * window[i];
        }
    }
    let peak_norm = norm.iter().cloned().fold(0.0, f64::max);
    (0..out_len)
        .map(|i| {
            let w = norm[i + half];
            if w > 1e-3 * peak_norm {
                out[i + half] / w
            } else {
                0.0
            }
        })
        .collect()
}

pub fn time_stretch(clip: &AudioClip, factor: f64) -> Result<AudioClip, AudioError> {
    check_factor(factor)?;
    if factor == 1.0 {
        return Ok(clip.clone());
    }
    Ok(clip.with_samples(renormalize(vocoder(&clip.samples, factor))))
}

pub fn speed_change(clip: &AudioClip, factor: f64) -> Result<AudioClip, AudioError> {
    check_factor(factor)?;
    if factor == 1.0 {
        return Ok(clip.clone());
    }
    Ok(clip.with_samples(renormalize(resample_ratio(&clip.samples, 1.0 / factor))))
}

/// Stretch by the pitch ratio, then play back faster by the same ratio;
/// the result is trimmed or zero-padded to the original length.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> Result<AudioClip, AudioError> {
    if !semitones.is_finite() {
        return Err(AudioError::InvalidFactor(format!("semitones {semitones}")));
    }
    if semitones == 0.0 {
        return Ok(clip.clone());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let stretched = vocoder(&clip.samples, ratio);
    let mut y = resample_ratio(&stretched, 1.0 / ratio);
    y.resize(clip.len(), 0.0);
    Ok(clip.with_samples(renormalize(y)))
}

pub fn augment_with_cap(clip: &AudioClip, spec: &AugmentSpec, semitone_cap: f64) -> Result<AudioClip, AudioError> {
    let mut out = match spec.kind {
        AugmentKind::PitchShift { semitones } => {
            if semitones.abs() > semitone_cap {
                return Err(AudioError::InvalidFactor(format!(
                    "|{semitones}| semitones exceeds cap {semitone_cap}"
                )));
            }
            pitch_shift(clip, semitones)?
        }
        AugmentKind::TimeStretch { factor } => time_stretch(clip, factor)?,
        AugmentKind::SpeedChange { factor } => speed_change(clip, factor)?,
    };
    if out != *clip {
        out.source_id = format!("{}+{}", clip.source_id, describe(&spec.kind));
    }
    Ok(out)
}

pub fn augment(clip: &AudioClip, spec: &AugmentSpec) -> Result<AudioClip, AudioError> {
    augment_with_cap(clip, spec, SEMITONE_CAP)
}

fn describe(kind: &AugmentKind) -> String {
    match kind {
        AugmentKind::PitchShift { semitones } => format!("pitch{semitones:+}"),
        AugmentKind::TimeStretch { factor } => format!("stretch{factor}"),
        AugmentKind::SpeedChange { factor } => format!("speed{factor}"),
    }
}
