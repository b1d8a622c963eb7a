//! IDX image and label files (big-endian header, unsigned-byte payload).

use std::path::Path;

use crate::error::{HarnessError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Intensities in [0, 1], image-major then row-major.
    pub pixels: Vec<f64>,
}

impl ImageBatch {
    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn flattened(&self) -> Vec<Vec<f64>> {
        (0..self.count).map(|i| self.image(i).to_vec()).collect()
    }
}

fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(HarnessError::parse(
            path,
            format!("truncated header: {} bytes, need {need}", bytes.len()),
        ));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != magic {
        return Err(HarnessError::parse(
            path,
            format!("bad magic 0x{:08x}, expected 0x{magic:08x}", word(0)),
        ));
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<ImageBatch> {
    let d = header(path, bytes, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (d[0], d[1], d[2]);
    let body = &bytes[16..];
    let expected = count * rows * cols;
    if body.len() != expected {
        return Err(HarnessError::parse(
            path,
            format!("payload has {} bytes, header implies {expected}", body.len()),
        ));
    }
    Ok(ImageBatch {
        count,
        rows,
        cols,
        pixels: body.iter().map(|&b| b as f64 / 255.0).collect(),
    })
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    let d = header(path, bytes, LABELS_MAGIC, 1)?;
    let body = &bytes[8..];
    if body.len() != d[0] {
        return Err(HarnessError::parse(
            path,
            format!("payload has {} bytes, header implies {}", body.len(), d[0]),
        ));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

pub fn load_idx(path: &Path) -> Result<ImageBatch> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    parse_images(path, &bytes)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    parse_labels(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_endpoints_and_errors() {
        let p = Path::new("mem");
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2];
        b.extend([0u8, 255]);
        let img = parse_images(p, &b).unwrap();
        assert_eq!(img.pixels, vec![0.0, 1.0]);
        assert!(parse_images(p, &[]).is_err());
        assert!(parse_images(p, &b[..17]).is_err());
        b[3] = 1;
        assert!(parse_images(p, &b).is_err());
    }
}
