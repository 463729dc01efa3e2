//! IDX image-file parsing (the MNIST container format).

use crate::error::{HtoptError, Result};
use ndarray::Array1;
use std::path::Path;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone)]
pub struct IdxImages {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major pixel bytes, one vector per image.
    pub images: Vec<Vec<u8>>,
}

fn be_u32(buf: &[u8], pos: usize) -> Result<u32> {
    if pos + 4 > buf.len() {
        return Err(HtoptError::Format("truncated IDX header".into()));
    }
    Ok(u32::from_be_bytes(buf[pos..pos + 4].try_into().unwrap()))
}

/// Parse an IDX image file: big-endian magic 0x00000803, then count, rows,
/// cols as big-endian 32-bit integers, then row-major unsigned bytes. The
/// declared element count must agree exactly with the byte length.
pub fn parse_idx_images(buf: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(buf, 0)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(HtoptError::Format(format!(
            "bad IDX magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"
        )));
    }
    let count = be_u32(buf, 4)? as usize;
    let n_rows = be_u32(buf, 8)? as usize;
    let n_cols = be_u32(buf, 12)? as usize;
    let pixels = count
        .checked_mul(n_rows)
        .and_then(|v| v.checked_mul(n_cols))
        .ok_or_else(|| HtoptError::Format("IDX dimensions overflow".into()))?;
    if buf.len() != 16 + pixels {
        return Err(HtoptError::Format(format!(
            "IDX declares {count} images of {n_rows}x{n_cols} = {} bytes, file has {}",
            16 + pixels,
            buf.len()
        )));
    }
    let stride = n_rows * n_cols;
    let images = (0..count)
        .map(|i| buf[16 + i * stride..16 + (i + 1) * stride].to_vec())
        .collect();
    Ok(IdxImages {
        n_rows,
        n_cols,
        images,
    })
}

pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    let buf = std::fs::read(path)?;
    parse_idx_images(&buf)
}

/// Scale pixels to [0,1] and normalize the flattened image to unit
/// Euclidean norm so it can serve as a feasible ground-truth signal.
pub fn image_to_signal(pixels: &[u8]) -> Array1<f64> {
    let v: Array1<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        v
    } else {
        v / norm
    }
}

/// Assemble an IDX byte buffer; shared by tests and the synthetic fixtures.
pub fn encode_idx_images(n_rows: usize, n_cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + images.len() * n_rows * n_cols);
    buf.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(images.len() as u32).to_be_bytes());
    buf.extend_from_slice(&(n_rows as u32).to_be_bytes());
    buf.extend_from_slice(&(n_cols as u32).to_be_bytes());
    for img in images {
        assert_eq!(img.len(), n_rows * n_cols);
        buf.extend_from_slice(img);
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_two_by_two() {
        let buf = encode_idx_images(2, 2, &[vec![0, 255, 0, 255]]);
        let idx = parse_idx_images(&buf).unwrap();
        assert_eq!(idx.images.len(), 1);
        let sig = image_to_signal(&idx.images[0]);
        let r = 1.0 / 2.0_f64.sqrt();
        for (got, want) in sig.iter().zip([0.0, r, 0.0, r]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn label_magic_rejected() {
        let mut buf = encode_idx_images(2, 2, &[vec![1, 2, 3, 4]]);
        buf[..4].copy_from_slice(&0x0000_0801u32.to_be_bytes());
        assert!(matches!(
            parse_idx_images(&buf),
            Err(HtoptError::Format(_))
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut buf = encode_idx_images(2, 2, &[vec![1, 2, 3, 4]]);
        buf.pop();
        assert!(matches!(
            parse_idx_images(&buf),
            Err(HtoptError::Format(_))
        ));
        let mut padded = encode_idx_images(2, 2, &[vec![1, 2, 3, 4]]);
        padded.push(0);
        assert!(matches!(
            parse_idx_images(&padded),
            Err(HtoptError::Format(_))
        ));
    }

    #[test]
    fn zero_image_normalizes_to_zero() {
        let sig = image_to_signal(&[0, 0, 0]);
        assert!(sig.iter().all(|v| *v == 0.0));
    }
}
