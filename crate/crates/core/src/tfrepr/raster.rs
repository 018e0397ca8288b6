use std::path::Path;

use ndarray::Array2;

use super::TfError;

/// Fixed-size image, channel-major (`data[c][row][col]`), values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub channels: usize,
    pub size: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Bilinear resize with corners aligned.
pub fn resize_bilinear(m: &Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let (h, w) = m.dim();
    let coord = |i: usize, out: usize, src: usize| -> (usize, usize, f64) {
        if out <= 1 || src <= 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (src - 1) as f64 / (out - 1) as f64;
        let lo = (x.floor() as usize).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        (lo, hi, x - lo as f64)
    };
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let (r0, r1, fr) = coord(i, rows, h);
        let (c0, c1, fc) = coord(j, cols, w);
        let top = m[[r0, c0]] * (1.0 - fc) + m[[r0, c1]] * fc;
        let bottom = m[[r1, c0]] * (1.0 - fc) + m[[r1, c1]] * fc;
        top * (1.0 - fr) + bottom * fr
    })
}

/// Jet colormap: dark blue → cyan → yellow → dark red.
pub fn jet(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    let f = |x: f64| (1.5 - (4.0 * v - x).abs()).clamp(0.0, 1.0);
    [f(3.0), f(2.0), f(1.0)]
}

/// Resize to `size`×`size`, min–max normalize per image, and either keep the
/// single plane or map it through the jet colormap (`channels = 3`).
/// A zero-range image becomes all zeros.
pub fn rasterize(m: &Array2<f64>, size: usize, channels: usize) -> Result<Raster, TfError> {
    if m.is_empty() {
        return Err(TfError::EmptyMatrix);
    }
    if size == 0 || !(channels == 1 || channels == 3) {
        return Err(TfError::InvalidConfig(format!("raster {size}×{size}×{channels}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(TfError::InvalidConfig("matrix contains non-finite values".into()));
    }
    let r = resize_bilinear(m, size, size);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm: Vec<f64> = if hi > lo {
        r.iter().map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; size * size]
    };
    let data = if channels == 1 {
        norm.iter().map(|&v| v as f32).collect()
    } else {
        let mut d = vec![0.0f32; 3 * size * size];
        for (i, &v) in norm.iter().enumerate() {
            for (c, x) in jet(v).into_iter().enumerate() {
                d[c * size * size + i] = x as f32;
            }
        }
        d
    };
    Ok(Raster { channels, size, data })
}

/// 8-bit PNG with row 0 (lowest frequency) at the bottom.
pub fn write_png(raster: &Raster, path: impl AsRef<Path>) -> Result<(), TfError> {
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), raster.size as u32, raster.size as u32);
    enc.set_color(if raster.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
    enc.set_depth(png::BitDepth::Eight);
    let n = raster.size;
    let mut bytes = Vec::with_capacity(n * n * raster.channels);
    for row in (0..n).rev() {
        for col in 0..n {
            for c in 0..raster.channels {
                let v = raster.plane(c)[row * n + col];
                bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let mut w = enc.write_header().map_err(|e| TfError::Io(std::io::Error::other(e)))?;
    w.write_image_data(&bytes).map_err(|e| TfError::Io(std::io::Error::other(e)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_matrix_is_zero() {
        let r = rasterize(&Array2::from_elem((10, 30), 4.2), 64, 3).unwrap();
        assert_eq!(r.data.len(), 3 * 64 * 64);
        // jet(0) is dark blue: only the blue plane is non-zero
        assert!(r.plane(0).iter().all(|&v| v == 0.0));
        let g = rasterize(&Array2::from_elem((10, 30), 4.2), 64, 1).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_and_range() {
        let m = Array2::from_shape_fn((513, 61), |(i, j)| ((i * j) as f64).sin() * 10.0 - 3.0);
        for ch in [1, 3] {
            let r = rasterize(&m, 64, ch).unwrap();
            assert_eq!((r.size, r.channels, r.data.len()), (64, ch, ch * 4096));
            assert!(r.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn idempotent_on_grayscale() {
        let m = Array2::from_shape_fn((64, 64), |(i, j)| ((i + 2 * j) % 17) as f64 / 16.0);
        let r = rasterize(&m, 64, 1).unwrap();
        let again = rasterize(&Array2::from_shape_vec((64, 64), r.data.iter().map(|&v| f64::from(v)).collect()).unwrap(), 64, 1)
            .unwrap();
        assert_eq!(r, again);
        let expected: Vec<f32> = m.iter().map(|&v| v as f32).collect();
        assert_eq!(r.data, expected);
    }

    #[test]
    fn bilinear_corners_and_midpoints() {
        let m = ndarray::array![[0.0, 2.0], [4.0, 6.0]];
        let r = resize_bilinear(&m, 3, 3);
        assert_eq!(r, ndarray::array![[0.0, 1.0, 2.0], [2.0, 3.0, 4.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(rasterize(&Array2::zeros((0, 5)), 64, 1), Err(TfError::EmptyMatrix)));
    }

    #[test]
    fn png_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.png");
        let r = rasterize(&Array2::from_shape_fn((8, 8), |(i, j)| (i + j) as f64), 16, 3).unwrap();
        write_png(&r, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
