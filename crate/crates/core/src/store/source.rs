use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{check_finite, expect_shape, read_json, write_json};
use super::matrix::{write_matrix_ref, MatrixRef};
use super::StoreError;

/// Layer outputs of the per-class representative source instances.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSnapshot {
    /// `K_source × dim_A`, one row per class center.
    pub centers_a: Array2<f32>,
    /// Centers at the extra start layers, aligned with the dataset's `layer_A_extra`.
    pub centers_a_extra: Vec<Array2<f32>>,
    /// `K_source × dim_B`.
    pub centers_b: Array2<f32>,
    pub center_ids: Option<Vec<String>>,
}

/// Raw labeled source-task embeddings; centers are derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceData {
    pub layer_a: Array2<f32>,
    pub layer_a_extra: Vec<Array2<f32>>,
    pub layer_b: Array2<f32>,
    /// Final representations used to locate class means; `layer_b` when absent.
    pub final_reps: Option<Array2<f32>>,
    pub labels: Vec<usize>,
    pub k_source: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceInput {
    Centers(SourceSnapshot),
    Raw(SourceData),
}

impl SourceSnapshot {
    pub fn k_source(&self) -> usize {
        self.centers_b.nrows()
    }

    /// Centers at start layer `index` (0 = primary).
    pub fn start_layer(&self, index: usize) -> Option<&Array2<f32>> {
        match index {
            0 => Some(&self.centers_a),
            i => self.centers_a_extra.get(i - 1),
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let k = self.centers_b.nrows();
        if self.centers_a.nrows() != k {
            return Err(StoreError::DeclaredShape {
                name: "centers_A".into(),
                declared: self.centers_a.dim(),
                expected: (k, self.centers_a.ncols()),
            });
        }
        for (i, m) in self.centers_a_extra.iter().enumerate() {
            if m.nrows() != k {
                return Err(StoreError::DeclaredShape {
                    name: format!("centers_A_extra[{i}]"),
                    declared: m.dim(),
                    expected: (k, m.ncols()),
                });
            }
            check_finite(&format!("centers_A_extra[{i}]"), m)?;
        }
        check_finite("centers_A", &self.centers_a)?;
        check_finite("centers_B", &self.centers_b)?;
        if let Some(ids) = &self.center_ids {
            if ids.len() != k {
                return Err(StoreError::LengthMismatch {
                    field: "center_ids",
                    expected: k,
                    got: ids.len(),
                });
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<std::path::PathBuf, StoreError> {
        let file = SourceFile {
            k_source: self.k_source(),
            centers_a: Some(write_matrix_ref(dir, &format!("{stem}_centers_A.f32"), &self.centers_a)?),
            centers_a_extra: self
                .centers_a_extra
                .iter()
                .enumerate()
                .map(|(i, m)| write_matrix_ref(dir, &format!("{stem}_centers_A{}.f32", i + 2), m))
                .collect::<Result<_, _>>()?,
            centers_b: Some(write_matrix_ref(dir, &format!("{stem}_centers_B.f32"), &self.centers_b)?),
            center_ids: self.center_ids.clone(),
            raw: None,
        };
        let path = dir.join(format!("{stem}.json"));
        write_json(&path, &file)?;
        Ok(path)
    }
}

impl SourceData {
    pub fn len(&self) -> usize {
        self.layer_b.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn final_reps(&self) -> &Array2<f32> {
        self.final_reps.as_ref().unwrap_or(&self.layer_b)
    }

    pub fn start_layer(&self, index: usize) -> Option<&Array2<f32>> {
        match index {
            0 => Some(&self.layer_a),
            i => self.layer_a_extra.get(i - 1),
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let n = self.len();
        if n == 0 {
            return Err(StoreError::EmptyDataset);
        }
        let mut all = vec![("layer_A".to_string(), &self.layer_a), ("layer_B".to_string(), &self.layer_b)];
        all.extend(
            self.layer_a_extra
                .iter()
                .enumerate()
                .map(|(i, m)| (format!("layer_A_extra[{i}]"), m)),
        );
        if let Some(f) = &self.final_reps {
            all.push(("final".to_string(), f));
        }
        for (name, m) in all {
            if m.nrows() != n {
                return Err(StoreError::DeclaredShape {
                    name,
                    declared: m.dim(),
                    expected: (n, m.ncols()),
                });
            }
            check_finite(&name, m)?;
        }
        if self.labels.len() != n {
            return Err(StoreError::LengthMismatch {
                field: "labels",
                expected: n,
                got: self.labels.len(),
            });
        }
        if let Some((index, &label)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.k_source)
        {
            return Err(StoreError::LabelOutOfRange {
                index,
                label,
                classes: self.k_source,
            });
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<std::path::PathBuf, StoreError> {
        let raw = RawSourceFile {
            layer_a: write_matrix_ref(dir, &format!("{stem}_layer_A.f32"), &self.layer_a)?,
            layer_a_extra: self
                .layer_a_extra
                .iter()
                .enumerate()
                .map(|(i, m)| write_matrix_ref(dir, &format!("{stem}_layer_A{}.f32", i + 2), m))
                .collect::<Result<_, _>>()?,
            layer_b: write_matrix_ref(dir, &format!("{stem}_layer_B.f32"), &self.layer_b)?,
            final_reps: self
                .final_reps
                .as_ref()
                .map(|m| write_matrix_ref(dir, &format!("{stem}_final.f32"), m))
                .transpose()?,
            labels: self.labels.clone(),
        };
        let file = SourceFile {
            k_source: self.k_source,
            centers_a: None,
            centers_a_extra: vec![],
            centers_b: None,
            center_ids: None,
            raw: Some(raw),
        };
        let path = dir.join(format!("{stem}.json"));
        write_json(&path, &file)?;
        Ok(path)
    }
}

/// JSON schema of a source file: either precomputed centers or raw data.
#[derive(Debug, Serialize, Deserialize)]
struct SourceFile {
    #[serde(rename = "K_source")]
    k_source: usize,
    #[serde(rename = "centers_A", default, skip_serializing_if = "Option::is_none")]
    centers_a: Option<MatrixRef>,
    #[serde(rename = "centers_A_extra", default, skip_serializing_if = "Vec::is_empty")]
    centers_a_extra: Vec<MatrixRef>,
    #[serde(rename = "centers_B", default, skip_serializing_if = "Option::is_none")]
    centers_b: Option<MatrixRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<RawSourceFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSourceFile {
    #[serde(rename = "layer_A")]
    layer_a: MatrixRef,
    #[serde(rename = "layer_A_extra", default, skip_serializing_if = "Vec::is_empty")]
    layer_a_extra: Vec<MatrixRef>,
    #[serde(rename = "layer_B")]
    layer_b: MatrixRef,
    #[serde(rename = "final", default, skip_serializing_if = "Option::is_none")]
    final_reps: Option<MatrixRef>,
    labels: Vec<usize>,
}

pub fn load_source(path: &Path) -> Result<SourceInput, StoreError> {
    let file: SourceFile = read_json(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let k = file.k_source;
    match (file.centers_a, file.centers_b, file.raw) {
        (Some(a), Some(b), None) => {
            expect_shape("centers_A", &a, (k, a.cols))?;
            expect_shape("centers_B", &b, (k, b.cols))?;
            let snapshot = SourceSnapshot {
                centers_a: a.load(base, "centers_A")?,
                centers_a_extra: file
                    .centers_a_extra
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let name = format!("centers_A_extra[{i}]");
                        expect_shape(&name, r, (k, r.cols))?;
                        r.load(base, &name)
                    })
                    .collect::<Result<_, _>>()?,
                centers_b: b.load(base, "centers_B")?,
                center_ids: file.center_ids,
            };
            snapshot.validate()?;
            Ok(SourceInput::Centers(snapshot))
        }
        (None, None, Some(raw)) => {
            let data = SourceData {
                layer_a: raw.layer_a.load(base, "layer_A")?,
                layer_a_extra: raw
                    .layer_a_extra
                    .iter()
                    .enumerate()
                    .map(|(i, r)| r.load(base, &format!("layer_A_extra[{i}]")))
                    .collect::<Result<_, _>>()?,
                layer_b: raw.layer_b.load(base, "layer_B")?,
                final_reps: raw.final_reps.map(|r| r.load(base, "final")).transpose()?,
                labels: raw.labels,
                k_source: k,
            };
            data.validate()?;
            Ok(SourceInput::Raw(data))
        }
        _ => Err(StoreError::InvalidConfig(
            "source file needs either centers_A + centers_B or raw".into(),
        )),
    }
}
