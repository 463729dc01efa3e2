//! Flat binary container for matrices: 8-byte magic `HTOPT001`, a u64 matrix
//! count, then per matrix u64 rows, u64 cols and row-major little-endian f64
//! data. Used for instance persistence and for `final_states.bin`.

use crate::error::{HtoptError, Result};
use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"HTOPT001";

pub fn write_matrices<W: Write>(mut w: W, mats: &[&Array2<f64>]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(mats.len() as u64).to_le_bytes())?;
    for m in mats {
        w.write_all(&(m.nrows() as u64).to_le_bytes())?;
        w.write_all(&(m.ncols() as u64).to_le_bytes())?;
        for v in m.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrices<R: Read>(mut r: R) -> Result<Vec<Array2<f64>>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 16 {
        return Err(HtoptError::Format("container shorter than its header".into()));
    }
    if &buf[..8] != MAGIC {
        return Err(HtoptError::Format(format!(
            "bad magic {:02x?}, expected {MAGIC:02x?}",
            &buf[..8]
        )));
    }
    let mut pos = 8usize;
    let take_u64 = |buf: &[u8], pos: &mut usize| -> Result<u64> {
        if *pos + 8 > buf.len() {
            return Err(HtoptError::Format("truncated container".into()));
        }
        let v = u64::from_le_bytes(buf[*pos..*pos + 8].try_into().unwrap());
        *pos += 8;
        Ok(v)
    };
    let count = take_u64(&buf, &mut pos)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = take_u64(&buf, &mut pos)? as usize;
        let cols = take_u64(&buf, &mut pos)? as usize;
        let need = rows
            .checked_mul(cols)
            .and_then(|e| e.checked_mul(8))
            .ok_or_else(|| HtoptError::Format("matrix dimensions overflow".into()))?;
        if pos + need > buf.len() {
            return Err(HtoptError::Format(format!(
                "declared {rows}x{cols} matrix disagrees with remaining byte length"
            )));
        }
        let data: Vec<f64> = buf[pos..pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += need;
        out.push(
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| HtoptError::Format(e.to_string()))?,
        );
    }
    if pos != buf.len() {
        return Err(HtoptError::Format(format!(
            "{} trailing bytes after the declared matrices",
            buf.len() - pos
        )));
    }
    Ok(out)
}

pub fn write_matrices_file(path: &Path, mats: &[&Array2<f64>]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_matrices(std::io::BufWriter::new(f), mats)
}

pub fn read_matrices_file(path: &Path) -> Result<Vec<Array2<f64>>> {
    let f = std::fs::File::open(path)?;
    read_matrices(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn roundtrip() {
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, -0.5]];
        let b = array![[0.25_f64]];
        let mut buf = Vec::new();
        write_matrices(&mut buf, &[&a, &b]).unwrap();
        let out = read_matrices(&buf[..]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], a);
        assert_eq!(out[1], b);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let a = array![[1.0, 2.0]];
        let mut buf = Vec::new();
        write_matrices(&mut buf, &[&a]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_matrices(&bad[..]),
            Err(HtoptError::Format(_))
        ));
        let truncated = &buf[..buf.len() - 4];
        assert!(matches!(
            read_matrices(truncated),
            Err(HtoptError::Format(_))
        ));
        let mut padded = buf.clone();
        padded.extend_from_slice(&[0u8; 3]);
        assert!(matches!(
            read_matrices(&padded[..]),
            Err(HtoptError::Format(_))
        ));
    }
}
