use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::matrix::{write_matrix_ref, MatrixRef};
use super::StoreError;

/// Allowed deviation of an exported probability row sum from 1.
pub const PROB_TOLERANCE: f64 = 1e-5;

/// JSON manifest describing one dataset on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n_instances: usize,
    #[serde(rename = "dim_A")]
    pub dim_a: usize,
    #[serde(rename = "dim_B")]
    pub dim_b: usize,
    #[serde(rename = "K_source")]
    pub k_source: usize,
    #[serde(rename = "K_target")]
    pub k_target: usize,
    #[serde(rename = "layer_A")]
    pub layer_a: MatrixRef,
    /// Additional start layers (A2, A3, ...) for multi-pattern scoring.
    #[serde(rename = "layer_A_extra", default, skip_serializing_if = "Vec::is_empty")]
    pub layer_a_extra: Vec<MatrixRef>,
    #[serde(rename = "layer_B")]
    pub layer_b: MatrixRef,
    pub source_probs: MatrixRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_refs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

/// Per-instance layer outputs of the pre-trained model over the target data.
///
/// Rows are instances. `layer_a` is the primary start layer; `layer_a_extra`
/// holds further start layers paired with the same end layer `layer_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    pub name: String,
    pub layer_a: Array2<f32>,
    pub layer_a_extra: Vec<Array2<f32>>,
    pub layer_b: Array2<f32>,
    /// Source-model class probabilities, `n × K_source`.
    pub source_probs: Array2<f32>,
    pub k_target: usize,
    pub labels: Option<Vec<usize>>,
    pub item_refs: Option<Vec<String>>,
    pub class_names: Option<Vec<String>>,
}

impl EmbeddingDataset {
    pub fn len(&self) -> usize {
        self.layer_b.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn k_source(&self) -> usize {
        self.source_probs.ncols()
    }

    pub fn dim_a(&self) -> usize {
        self.layer_a.ncols()
    }

    pub fn dim_b(&self) -> usize {
        self.layer_b.ncols()
    }

    /// Number of start layers (primary plus extras).
    pub fn start_layers(&self) -> usize {
        1 + self.layer_a_extra.len()
    }

    /// Start layer by index: 0 is `layer_A`, `i > 0` is `layer_A_extra[i - 1]`.
    pub fn start_layer(&self, index: usize) -> Option<&Array2<f32>> {
        match index {
            0 => Some(&self.layer_a),
            i => self.layer_a_extra.get(i - 1),
        }
    }

    pub fn labels(&self) -> Result<&[usize], StoreError> {
        self.labels.as_deref().ok_or(StoreError::MissingLabels)
    }

    pub fn item_ref(&self, index: usize) -> String {
        self.item_refs
            .as_ref()
            .and_then(|refs| refs.get(index).cloned())
            .unwrap_or_else(|| index.to_string())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.class_names
            .clone()
            .unwrap_or_else(|| (0..self.k_target).map(|k| k.to_string()).collect())
    }

    /// Checks every dataset invariant: shapes, finiteness, probability rows
    /// and label ranges.
    pub fn validate(&self) -> Result<(), StoreError> {
        let n = self.len();
        if n == 0 {
            return Err(StoreError::EmptyDataset);
        }
        check_rows("layer_A", &self.layer_a, n)?;
        for (i, m) in self.layer_a_extra.iter().enumerate() {
            check_rows(&format!("layer_A_extra[{i}]"), m, n)?;
        }
        check_rows("source_probs", &self.source_probs, n)?;
        check_finite("layer_A", &self.layer_a)?;
        for (i, m) in self.layer_a_extra.iter().enumerate() {
            check_finite(&format!("layer_A_extra[{i}]"), m)?;
        }
        check_finite("layer_B", &self.layer_b)?;
        check_finite("source_probs", &self.source_probs)?;
        check_distribution_rows("source_probs", &self.source_probs)?;
        if self.k_target == 0 {
            return Err(StoreError::InvalidConfig("K_target must be positive".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(StoreError::LengthMismatch {
                    field: "labels",
                    expected: n,
                    got: labels.len(),
                });
            }
            if let Some((index, &label)) =
                labels.iter().enumerate().find(|(_, &l)| l >= self.k_target)
            {
                return Err(StoreError::LabelOutOfRange {
                    index,
                    label,
                    classes: self.k_target,
                });
            }
        }
        if let Some(refs) = &self.item_refs {
            if refs.len() != n {
                return Err(StoreError::LengthMismatch {
                    field: "item_refs",
                    expected: n,
                    got: refs.len(),
                });
            }
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.k_target {
                return Err(StoreError::LengthMismatch {
                    field: "class_names",
                    expected: self.k_target,
                    got: names.len(),
                });
            }
        }
        Ok(())
    }

    /// Rows selected by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingDataset {
        let pick = |m: &Array2<f32>| m.select(Axis(0), indices);
        EmbeddingDataset {
            name: self.name.clone(),
            layer_a: pick(&self.layer_a),
            layer_a_extra: self.layer_a_extra.iter().map(pick).collect(),
            layer_b: pick(&self.layer_b),
            source_probs: pick(&self.source_probs),
            k_target: self.k_target,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            item_refs: self
                .item_refs
                .as_ref()
                .map(|r| indices.iter().map(|&i| r[i].clone()).collect()),
            class_names: self.class_names.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<EmbeddingDataset, StoreError> {
        let manifest = read_manifest_json(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.load_dataset(base)
    }

    /// Writes `<stem>.json` plus one `.f32` file per matrix into `dir` and
    /// returns the manifest path.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf, StoreError> {
        fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let layer_a = write_matrix_ref(dir, &format!("{stem}_layer_A.f32"), &self.layer_a)?;
        let layer_a_extra = self
            .layer_a_extra
            .iter()
            .enumerate()
            .map(|(i, m)| write_matrix_ref(dir, &format!("{stem}_layer_A{}.f32", i + 2), m))
            .collect::<Result<Vec<_>, _>>()?;
        let layer_b = write_matrix_ref(dir, &format!("{stem}_layer_B.f32"), &self.layer_b)?;
        let source_probs =
            write_matrix_ref(dir, &format!("{stem}_source_probs.f32"), &self.source_probs)?;
        let manifest = DatasetManifest {
            name: self.name.clone(),
            n_instances: self.len(),
            dim_a: self.dim_a(),
            dim_b: self.dim_b(),
            k_source: self.k_source(),
            k_target: self.k_target,
            layer_a,
            layer_a_extra,
            layer_b,
            source_probs,
            labels: self.labels.clone(),
            item_refs: self.item_refs.clone(),
            class_names: self.class_names.clone(),
        };
        let path = dir.join(format!("{stem}.json"));
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

impl DatasetManifest {
    /// Loads every referenced matrix relative to `base` and validates the result.
    pub fn load_dataset(&self, base: &Path) -> Result<EmbeddingDataset, StoreError> {
        let n = self.n_instances;
        if n == 0 {
            return Err(StoreError::EmptyDataset);
        }
        expect_shape("layer_A", &self.layer_a, (n, self.dim_a))?;
        expect_shape("layer_B", &self.layer_b, (n, self.dim_b))?;
        expect_shape("source_probs", &self.source_probs, (n, self.k_source))?;
        for (i, r) in self.layer_a_extra.iter().enumerate() {
            expect_shape(&format!("layer_A_extra[{i}]"), r, (n, r.cols))?;
        }
        let dataset = EmbeddingDataset {
            name: self.name.clone(),
            layer_a: self.layer_a.load(base, "layer_A")?,
            layer_a_extra: self
                .layer_a_extra
                .iter()
                .enumerate()
                .map(|(i, r)| r.load(base, &format!("layer_A_extra[{i}]")))
                .collect::<Result<_, _>>()?,
            layer_b: self.layer_b.load(base, "layer_B")?,
            source_probs: self.source_probs.load(base, "source_probs")?,
            k_target: self.k_target,
            labels: self.labels.clone(),
            item_refs: self.item_refs.clone(),
            class_names: self.class_names.clone(),
        };
        dataset.validate()?;
        Ok(dataset)
    }
}

/// Parses a manifest and validates it against the matrices it references.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, StoreError> {
    let manifest = read_manifest_json(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    manifest.load_dataset(base)?;
    Ok(manifest)
}

fn read_manifest_json(path: &Path) -> Result<DatasetManifest, StoreError> {
    read_json(path)
}

pub(super) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(super) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(super) fn expect_shape(
    name: &str,
    r: &MatrixRef,
    expected: (usize, usize),
) -> Result<(), StoreError> {
    if (r.rows, r.cols) != expected {
        return Err(StoreError::DeclaredShape {
            name: name.to_string(),
            declared: (r.rows, r.cols),
            expected,
        });
    }
    Ok(())
}

fn check_rows(name: &str, m: &Array2<f32>, n: usize) -> Result<(), StoreError> {
    if m.nrows() != n {
        return Err(StoreError::DeclaredShape {
            name: name.to_string(),
            declared: m.dim(),
            expected: (n, m.ncols()),
        });
    }
    Ok(())
}

pub(super) fn check_finite(name: &str, m: &Array2<f32>) -> Result<(), StoreError> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(StoreError::NonFinite {
                name: name.to_string(),
                row,
                col,
            });
        }
    }
    Ok(())
}

fn check_distribution_rows(name: &str, m: &Array2<f32>) -> Result<(), StoreError> {
    for (row, values) in m.outer_iter().enumerate() {
        if let Some(col) = values.iter().position(|&v| v < 0.0) {
            return Err(StoreError::NegativeProbability {
                name: name.to_string(),
                row,
                col,
            });
        }
        let sum: f64 = values.iter().map(|&v| v as f64).sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(StoreError::RowNotNormalized {
                name: name.to_string(),
                row,
                sum,
            });
        }
    }
    Ok(())
}
