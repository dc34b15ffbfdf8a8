//! Headerless `.f32` matrix files: little-endian IEEE-754 single precision,
//! row-major, `rows * cols * 4` bytes.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::StoreError;

/// Reference to a matrix file as it appears inside a JSON manifest.
///
/// Relative paths are resolved against the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRef {
    pub path: PathBuf,
    pub rows: usize,
    pub cols: usize,
}

impl MatrixRef {
    pub fn new(path: impl Into<PathBuf>, rows: usize, cols: usize) -> Self {
        MatrixRef {
            path: path.into(),
            rows,
            cols,
        }
    }

    pub fn resolve(&self, base: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        }
    }

    /// Reads and validates the referenced matrix. `name` is used in error messages.
    pub fn load(&self, base: &Path, name: &str) -> Result<Array2<f32>, StoreError> {
        read_matrix(&self.resolve(base), self.rows, self.cols, name)
    }
}

pub fn read_matrix(
    path: &Path,
    rows: usize,
    cols: usize,
    name: &str,
) -> Result<Array2<f32>, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(StoreError::ShapeMismatch {
            name: name.to_string(),
            rows,
            cols,
            expected_bytes: expected,
            actual_bytes: bytes.len(),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(StoreError::NonFinite {
            name: name.to_string(),
            row: pos / cols.max(1),
            col: pos % cols.max(1),
        });
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn write_matrix(path: &Path, matrix: &Array2<f32>) -> Result<(), StoreError> {
    let mut bytes = Vec::with_capacity(matrix.len() * 4);
    // iter() on a standard-layout or not, always yields logical row-major order
    for v in matrix.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `matrix` to `dir/file_name` and returns a relative reference to it.
pub fn write_matrix_ref(
    dir: &Path,
    file_name: &str,
    matrix: &Array2<f32>,
) -> Result<MatrixRef, StoreError> {
    write_matrix(&dir.join(file_name), matrix)?;
    Ok(MatrixRef::new(file_name, matrix.nrows(), matrix.ncols()))
}
