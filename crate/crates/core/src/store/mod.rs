//! On-disk datasets that stand in for live feature extraction: the target
//! pool/test embeddings, the source-task snapshot, splitting, and a synthetic
//! transfer-task generator.

mod dataset;
mod matrix;
mod source;
mod split;
mod synth;

use std::path::PathBuf;

pub use dataset::{load_manifest, DatasetManifest, EmbeddingDataset, PROB_TOLERANCE};
pub use matrix::{read_matrix, write_matrix, write_matrix_ref, MatrixRef};
pub use source::{load_source, SourceData, SourceInput, SourceSnapshot};
pub use split::{split_indices, split_pool};
pub use synth::{generate_synthetic_task, SyntheticConfig, SyntheticTask};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("matrix {name}: declared {rows}x{cols} needs {expected_bytes} bytes, file has {actual_bytes}")]
    ShapeMismatch {
        name: String,
        rows: usize,
        cols: usize,
        expected_bytes: usize,
        actual_bytes: usize,
    },
    #[error("matrix {name}: declared shape {declared:?} does not match expected {expected:?}")]
    DeclaredShape {
        name: String,
        declared: (usize, usize),
        expected: (usize, usize),
    },
    #[error("matrix {name}: non-finite value at row {row}, col {col}")]
    NonFinite { name: String, row: usize, col: usize },
    #[error("matrix {name}: negative probability at row {row}, col {col}")]
    NegativeProbability { name: String, row: usize, col: usize },
    #[error("matrix {name}: row {row} not normalized (sum {sum})")]
    RowNotNormalized { name: String, row: usize, sum: f64 },
    #[error("{field} has {got} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("label {label} at index {index} is outside [0, {classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("dataset has no labels")]
    MissingLabels,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
