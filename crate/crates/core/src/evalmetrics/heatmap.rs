use std::path::Path;

use super::{ConfusionMatrix, MetricsError};

const CELL: usize = 48;
const GRID: usize = 2;

/// Row-normalized heatmap (white → dark blue); one square per cell.
pub fn write_confusion_png(cm: &ConfusionMatrix, path: impl AsRef<Path>) -> Result<(), MetricsError> {
    let k = cm.k().max(1);
    let side = k * CELL + (k + 1) * GRID;
    let mut px = vec![200u8; side * side * 3];
    for (t, row) in cm.counts.iter().enumerate() {
        let support: u64 = row.iter().sum();
        for (p, &n) in row.iter().enumerate() {
            let frac = if support == 0 { 0.0 } else { n as f64 / support as f64 };
            let rgb = [
                (255.0 * (1.0 - 0.9 * frac)) as u8,
                (255.0 * (1.0 - 0.75 * frac)) as u8,
                (255.0 * (1.0 - 0.45 * frac)) as u8,
            ];
            let (y0, x0) = (GRID + t * (CELL + GRID), GRID + p * (CELL + GRID));
            for y in y0..y0 + CELL {
                for x in x0..x0 + CELL {
                    px[(y * side + x) * 3..(y * side + x) * 3 + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), side as u32, side as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| std::io::Error::other(e))?;
    w.write_image_data(&px).map_err(|e| std::io::Error::other(e))?;
    Ok(())
}
