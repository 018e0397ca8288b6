//! Affine post-training quantization: `q = clamp(round(x/S + Z))`,
//! `x̂ = S·(q − Z)`, with one (S, Z) pair per tensor.

use serde::{Deserialize, Serialize};

use super::CompressError;

/// Signed 8-bit storage range.
pub const INT8_RANGE: (i32, i32) = (-128, 127);

/// Nominal bytes of per-tensor metadata (scale, zero point, integer range).
pub const QUANT_PARAMS_BYTES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
    pub q_min: i32,
    pub q_max: i32,
    pub x_min: f64,
    pub x_max: f64,
}

/// Round half away from zero.
fn round_half_away(v: f64) -> f64 {
    v.round()
}

impl QuantParams {
    /// Scale and zero point for a real range mapped onto `[q_min, q_max]`.
    ///
    /// The range is widened to contain 0 so that zero is exactly representable
    /// and the zero point needs no clamping. A zero-width range gets `S = 1`,
    /// `Z = q_min`.
    pub fn from_range(x_min: f64, x_max: f64, q_min: i32, q_max: i32) -> Result<Self, CompressError> {
        if q_min >= q_max {
            return Err(CompressError::InvalidQuantRange(format!("q_min {q_min} >= q_max {q_max}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max < x_min {
            return Err(CompressError::InvalidQuantRange(format!("x range [{x_min}, {x_max}]")));
        }
        let lo = x_min.min(0.0);
        let hi = x_max.max(0.0);
        if hi == lo {
            return Ok(Self { scale: 1.0, zero_point: q_min, q_min, q_max, x_min: lo, x_max: hi });
        }
        let scale = (hi - lo) / f64::from(q_max - q_min);
        let zero_point = round_half_away(f64::from(q_min) - lo / scale) as i32;
        Ok(Self {
            scale,
            zero_point: zero_point.clamp(q_min, q_max),
            q_min,
            q_max,
            x_min: lo,
            x_max: hi,
        })
    }

    pub fn quantize(&self, x: f64) -> i32 {
        let q = round_half_away(x / self.scale + f64::from(self.zero_point));
        (q.clamp(f64::from(self.q_min), f64::from(self.q_max))) as i32
    }

    pub fn dequantize(&self, q: i32) -> f64 {
        self.scale * f64::from(q - self.zero_point)
    }
}

/// Min/max calibration over a sample of values.
pub fn calibrate<I>(values: I, (q_min, q_max): (i32, i32)) -> Result<QuantParams, CompressError>
where
    I: IntoIterator<Item = f64>,
{
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut seen = false;
    for v in values {
        seen = true;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !seen {
        return Err(CompressError::EmptyCalibration);
    }
    QuantParams::from_range(lo, hi, q_min, q_max)
}

pub fn quantize_i8(values: &[f32], qp: &QuantParams) -> Vec<i8> {
    debug_assert!(qp.q_min >= i8::MIN as i32 && qp.q_max <= i8::MAX as i32);
    values.iter().map(|&v| qp.quantize(f64::from(v)) as i8).collect()
}

pub fn dequantize_i8(values: &[i8], qp: &QuantParams) -> Vec<f32> {
    values.iter().map(|&q| qp.dequantize(i32::from(q)) as f32).collect()
}
