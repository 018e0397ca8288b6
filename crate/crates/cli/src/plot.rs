//! Minimal raster line charts for training curves (no text rendering).

use std::path::Path;

use hivesig::network::History;

use crate::error::{CliError, CliResult};

const W: usize = 400;
const H: usize = 300;
const MARGIN: usize = 20;
const TRAIN: [u8; 3] = [31, 119, 180];
const VAL: [u8; 3] = [255, 127, 14];
const AXIS: [u8; 3] = [60, 60, 60];
const GRID: [u8; 3] = [225, 225, 225];

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Canvas {
    fn new(w: usize, h: usize) -> Self {
        Self { w, h, px: vec![255; w * h * 3] }
    }

    fn set(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            let i = (y as usize * self.w + x as usize) * 3;
            self.px[i..i + 3].copy_from_slice(&rgb);
        }
    }

    fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), rgb: [u8; 3]) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            // two pixels thick
            self.set(x.round() as i64, y.round() as i64, rgb);
            self.set(x.round() as i64, y.round() as i64 + 1, rgb);
        }
    }

    fn save(&self, path: &Path) -> CliResult<()> {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), self.w as u32, self.h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let to_io = |e: png::EncodingError| CliError::io(path, std::io::Error::other(e));
        enc.write_header().map_err(to_io)?.write_image_data(&self.px).map_err(to_io)
    }
}

/// Draws train (blue) and validation (orange) series into the panel whose
/// left edge is `x_off`; the y range spans both series.
fn panel(c: &mut Canvas, x_off: usize, train: &[f64], val: &[f64], fixed: Option<(f64, f64)>) {
    let (x0, x1) = ((x_off + MARGIN) as f64, (x_off + W - MARGIN) as f64);
    let (y0, y1) = ((H - MARGIN) as f64, MARGIN as f64);
    let (lo, hi) = fixed.unwrap_or_else(|| {
        let all = train.iter().chain(val).copied().filter(|v| v.is_finite());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo.is_finite() && hi > lo {
            (lo.min(0.0), hi)
        } else {
            (0.0, 1.0)
        }
    });
    for g in 1..4 {
        let y = y0 + (y1 - y0) * g as f64 / 4.0;
        c.line((x0, y), (x1, y), GRID);
    }
    c.line((x0, y0), (x1, y0), AXIS);
    c.line((x0, y0), (x0, y1), AXIS);
    let n = train.len().max(val.len());
    let px = |i: usize| x0 + (x1 - x0) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let py = |v: f64| y0 + (y1 - y0) * ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    for (series, rgb) in [(train, TRAIN), (val, VAL)] {
        for i in 1..series.len() {
            c.line((px(i - 1), py(series[i - 1])), (px(i), py(series[i])), rgb);
        }
        if series.len() == 1 {
            c.line((px(0) - 2.0, py(series[0])), (px(0) + 2.0, py(series[0])), rgb);
        }
    }
}

/// Loss (left) and accuracy on [0, 1] (right), epochs along x.
pub fn write_curves(history: &History, path: &Path) -> CliResult<()> {
    let mut c = Canvas::new(2 * W, H);
    let col = |f: fn(&hivesig::network::EpochRecord) -> f64| history.records.iter().map(f).collect::<Vec<_>>();
    panel(&mut c, 0, &col(|r| r.train_loss), &col(|r| r.val_loss), None);
    panel(&mut c, W, &col(|r| r.train_acc), &col(|r| r.val_acc), Some((0.0, 1.0)));
    c.save(path)
}
