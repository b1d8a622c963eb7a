//! Binary PGM (P5) image grids.

use std::io::Write;
use std::path::Path;

use crate::error::{HarnessError, Result};

/// Encodes `images` (each `rows × cols`, intensities in [0, 1]) as a grid
/// with `per_row` tiles per row and a one-pixel black border between tiles.
pub fn encode_grid(images: &[Vec<f64>], rows: usize, cols: usize, per_row: usize) -> Result<Vec<u8>> {
    if images.is_empty() || per_row == 0 {
        return Err(HarnessError::Usage("image grid needs images and a positive row length".into()));
    }
    if let Some(i) = images.iter().position(|im| im.len() != rows * cols) {
        return Err(HarnessError::Usage(format!(
            "image {i} has {} pixels, expected {}",
            images[i].len(),
            rows * cols
        )));
    }
    let per_row = per_row.min(images.len());
    let grid_rows = images.len().div_ceil(per_row);
    let width = per_row * (cols + 1) + 1;
    let height = grid_rows * (rows + 1) + 1;
    let mut px = vec![0u8; width * height];
    for (k, im) in images.iter().enumerate() {
        let (gy, gx) = (k / per_row, k % per_row);
        for r in 0..rows {
            for c in 0..cols {
                let v = (im[r * cols + c].clamp(0.0, 1.0) * 255.0).round() as u8;
                let y = 1 + gy * (rows + 1) + r;
                let x = 1 + gx * (cols + 1) + c;
                px[y * width + x] = v;
            }
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(px);
    Ok(out)
}

pub fn write_grid(path: &Path, images: &[Vec<f64>], rows: usize, cols: usize, per_row: usize) -> Result<()> {
    let bytes = encode_grid(images, rows, cols, per_row)?;
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| HarnessError::io(path, e))
}
