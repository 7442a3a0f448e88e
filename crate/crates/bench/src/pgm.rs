//! Plain-text portable graymap (P2) output.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{BenchError, Result};

/// Renders a row-major `rows × cols` image. Values are clamped to `[0, 1]`
/// and mapped to `0..=255`.
pub fn to_pgm(pixels: &DVector<f64>, rows: usize, cols: usize) -> String {
    assert_eq!(pixels.len(), rows * cols);
    let mut out = format!("P2\n{cols} {rows}\n255\n");
    for r in 0..rows {
        let line: Vec<String> = (0..cols)
            .map(|c| {
                let v = pixels[r * cols + c];
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                ((v * 255.0).round() as u8).to_string()
            })
            .collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn write_pgm(path: &Path, pixels: &DVector<f64>, rows: usize, cols: usize) -> Result<()> {
    std::fs::write(path, to_pgm(pixels, rows, cols)).map_err(|e| BenchError::io(path, e))
}
