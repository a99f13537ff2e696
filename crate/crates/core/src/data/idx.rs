use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::Dataset;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            message: format!("file ends inside a header word ({} bytes total)", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let got = be_u32(bytes, 0)?;
    if got != want {
        return Err(Error::Format {
            offset: 0,
            message: format!("magic 0x{got:08x}, expected 0x{want:08x}"),
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    bytes.get(start..start + len).ok_or_else(|| Error::Format {
        offset: bytes.len() as u64,
        message: format!("truncated: header promises {len} payload bytes from offset {start}"),
    })
}

/// Parses an IDX3 image file into one row per image with pixels in
/// row-major order. At most `limit` images are decoded.
pub fn parse_idx_images(bytes: &[u8], limit: Option<usize>) -> Result<Matrix> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let pixels = rows * cols;
    let n = limit.map_or(n, |l| l.min(n));
    let data = payload(bytes, 16, n * pixels)?;
    Matrix::from_vec(n, pixels, data.iter().map(|&b| b as f64).collect())
}

/// Parses an IDX1 label file. At most `limit` labels are decoded.
pub fn parse_idx_labels(bytes: &[u8], limit: Option<usize>) -> Result<Vec<i64>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let n = limit.map_or(n, |l| l.min(n));
    Ok(payload(bytes, 8, n)?.iter().map(|&b| b as i64).collect())
}

fn declared_count(bytes: &[u8]) -> Result<u32> {
    be_u32(bytes, 4)
}

/// Loads an image/label IDX pair.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    load_idx_head(images_path, labels_path, None)
}

/// Loads the first `limit` samples of an image/label IDX pair.
pub fn load_idx_head(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    check_magic(&images, IDX_IMAGES_MAGIC)?;
    check_magic(&labels, IDX_LABELS_MAGIC)?;
    let (ni, nl) = (declared_count(&images)?, declared_count(&labels)?);
    if ni != nl {
        return Err(Error::Format {
            offset: 4,
            message: format!("{ni} images but {nl} labels"),
        });
    }
    let features = parse_idx_images(&images, limit)?;
    let labels = parse_idx_labels(&labels, limit)?;
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(features, labels, name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_header(n: u32, r: u32, c: u32) -> Vec<u8> {
        let mut v = vec![0, 0, 8, 3];
        for x in [n, r, c] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v
    }

    #[test]
    fn images_flatten_row_major() {
        let mut b = image_header(2, 28, 28);
        b.extend((0..2 * 784).map(|i| (i % 256) as u8));
        let m = parse_idx_images(&b, None).unwrap();
        assert_eq!(m.shape(), (2, 784));
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 0)], (784 % 256) as f64);
        assert_eq!(parse_idx_images(&b, Some(1)).unwrap().rows(), 1);
    }

    #[test]
    fn labels() {
        let mut b = vec![0, 0, 8, 1, 0, 0, 0, 3];
        b.extend([7, 0, 9]);
        assert_eq!(parse_idx_labels(&b, None).unwrap(), vec![7, 0, 9]);
    }

    #[test]
    fn format_errors_carry_offsets() {
        let b = vec![0, 0, 8, 1, 0, 0, 0, 3, 1];
        assert!(matches!(parse_idx_images(&b, None), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse_idx_labels(&b, None), Err(Error::Format { offset: 9, .. })));
        assert!(matches!(parse_idx_labels(&b[..6], None), Err(Error::Format { offset: 4, .. })));
    }
}
