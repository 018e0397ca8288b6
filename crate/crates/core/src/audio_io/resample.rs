use std::f64::consts::PI;

use super::{renormalize, AudioClip, AudioError};

/// Zero crossings of the sinc kernel on each side (at the lower of the two rates).
const ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;

/// Modified Bessel function of the first kind, order 0 (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc interpolation by `ratio` (output rate / input rate).
///
/// Output length is `round(len·ratio)`. The cutoff sits at the lower Nyquist
/// frequency. Each output's weights are normalized to sum to one, so constants
/// pass unchanged, edges included.
pub fn resample_ratio(x: &[f64], ratio: f64) -> Vec<f64> {
    let out_len = (x.len() as f64 * ratio).round() as usize;
    if x.is_empty() || out_len == 0 {
        return Vec::new();
    }
    if ratio == 1.0 {
        return x.to_vec();
    }
    let cutoff = ratio.min(1.0);
    let half = ZERO_CROSSINGS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);
    let last = x.len() as isize - 1;
    (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = ((t - half).ceil() as isize).max(0);
            let hi = ((t + half).floor() as isize).min(last);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for m in lo..=hi {
                let d = t - m as f64;
                let r = d / half;
                let win = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                let w = sinc(cutoff * d) * win;
                acc += w * x[m as usize];
                wsum += w;
            }
            if wsum.abs() > 1e-12 {
                acc / wsum
            } else {
                0.0
            }
        })
        .collect()
}

pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate(0.0));
    }
    if clip.sample_rate == 0 {
        return Err(AudioError::InvalidRate(0.0));
    }
    let ratio = f64::from(target_rate) / f64::from(clip.sample_rate);
    let mut out = clip.with_samples(renormalize(resample_ratio(&clip.samples, ratio)));
    out.sample_rate = target_rate;
    Ok(out)
}
