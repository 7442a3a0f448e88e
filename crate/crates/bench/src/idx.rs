//! Reader for the big-endian IDX container used by MNIST.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const ROWS: usize = 28;
pub const COLS: usize = 28;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdxError {
    #[error("{path}: magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: file holds {actual} bytes, header declares {expected}")]
    TruncatedFile { path: PathBuf, expected: u64, actual: u64 },
    #[error("{path}: images are {rows}x{cols}, expected 28x28")]
    DimMismatch { path: PathBuf, rows: u32, cols: u32 },
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
}

/// Grayscale images with pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    /// One 28×28 matrix per image.
    pub images: Vec<DMatrix<f64>>,
    pub source: PathBuf,
}

impl ImageSet {
    pub fn count(&self) -> usize {
        self.images.len()
    }

    /// Image `k` flattened row by row.
    pub fn vectorized(&self, k: usize) -> DVector<f64> {
        let img = &self.images[k];
        DVector::from_iterator(ROWS * COLS, img.transpose().iter().copied())
    }

    /// Fraction of nonzero pixels over the first `count` images.
    pub fn active_fraction(&self, count: usize) -> f64 {
        let imgs = &self.images[..count.min(self.images.len())];
        let total = imgs.len() * ROWS * COLS;
        if total == 0 {
            return 0.0;
        }
        let active: usize = imgs.iter().map(|m| m.iter().filter(|v| **v > 0.0).count()).sum();
        active as f64 / total as f64
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("four bytes"))
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|e| IdxError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn truncated(path: &Path, expected: u64, actual: usize) -> IdxError {
    IdxError::TruncatedFile {
        path: path.to_path_buf(),
        expected,
        actual: actual as u64,
    }
}

pub fn load_idx_images(path: &Path) -> Result<ImageSet, IdxError> {
    parse_idx_images(&read(path)?, path)
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<ImageSet, IdxError> {
    if bytes.len() < 4 {
        return Err(truncated(path, 16, bytes.len()));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    if bytes.len() < 16 {
        return Err(truncated(path, 16, bytes.len()));
    }
    let (count, rows, cols) = (be_u32(bytes, 4), be_u32(bytes, 8), be_u32(bytes, 12));
    if rows as usize != ROWS || cols as usize != COLS {
        return Err(IdxError::DimMismatch {
            path: path.to_path_buf(),
            rows,
            cols,
        });
    }
    let expected = 16 + count as u64 * (ROWS * COLS) as u64;
    if (bytes.len() as u64) < expected {
        return Err(truncated(path, expected, bytes.len()));
    }
    let images = bytes[16..expected as usize]
        .chunks_exact(ROWS * COLS)
        .map(|px| DMatrix::from_row_iterator(ROWS, COLS, px.iter().map(|b| f64::from(*b) / 255.0)))
        .collect();
    Ok(ImageSet {
        images,
        source: path.to_path_buf(),
    })
}

/// Labels from an IDX1 file (magic `0x801`).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    let bytes = read(path)?;
    if bytes.len() < 8 {
        return Err(truncated(path, 8, bytes.len()));
    }
    let magic = be_u32(&bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: LABEL_MAGIC,
        });
    }
    let expected = 8 + be_u32(&bytes, 4) as u64;
    if (bytes.len() as u64) < expected {
        return Err(truncated(path, expected, bytes.len()));
    }
    Ok(bytes[8..expected as usize].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, count: u32, rows: u32, cols: u32) -> Vec<u8> {
        [magic, count, rows, cols].iter().flat_map(|v| v.to_be_bytes()).collect()
    }

    #[test]
    fn single_zero_image() {
        let mut bytes = header(IMAGE_MAGIC, 1, 28, 28);
        bytes.extend(std::iter::repeat(0u8).take(784));
        let set = parse_idx_images(&bytes, Path::new("mem")).unwrap();
        assert_eq!(set.count(), 1);
        assert_eq!(set.images[0], DMatrix::zeros(28, 28));
    }

    #[test]
    fn pixels_are_scaled_row_major() {
        let mut bytes = header(IMAGE_MAGIC, 1, 28, 28);
        let mut px = vec![0u8; 784];
        px[1] = 255;
        px[28] = 51;
        bytes.extend(px);
        let set = parse_idx_images(&bytes, Path::new("mem")).unwrap();
        assert_eq!(set.images[0][(0, 1)], 1.0);
        assert_eq!(set.images[0][(1, 0)], 0.2);
        let v = set.vectorized(0);
        assert_eq!(v[1], 1.0);
        assert_eq!(v[28], 0.2);
        assert_eq!(set.active_fraction(1), 2.0 / 784.0);
    }

    #[test]
    fn label_magic_is_rejected() {
        let mut bytes = header(LABEL_MAGIC, 1, 28, 28);
        bytes.extend([0u8; 784]);
        let err = parse_idx_images(&bytes, Path::new("mem")).unwrap_err();
        assert!(matches!(err, IdxError::BadMagic { found: LABEL_MAGIC, .. }));
    }

    #[test]
    fn short_payload_is_truncated() {
        let mut bytes = header(IMAGE_MAGIC, 2, 28, 28);
        bytes.extend([0u8; 784 + 10]);
        let err = parse_idx_images(&bytes, Path::new("mem")).unwrap_err();
        assert!(matches!(err, IdxError::TruncatedFile { expected: 1584, actual: 810, .. }));
        let err = parse_idx_images(&bytes[..9], Path::new("mem")).unwrap_err();
        assert!(matches!(err, IdxError::TruncatedFile { .. }));
    }

    #[test]
    fn other_sizes_mismatch() {
        let mut bytes = header(IMAGE_MAGIC, 1, 32, 32);
        bytes.extend([0u8; 1024]);
        let err = parse_idx_images(&bytes, Path::new("mem")).unwrap_err();
        assert!(matches!(err, IdxError::DimMismatch { rows: 32, cols: 32, .. }));
    }
}
