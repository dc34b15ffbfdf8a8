//! Landmark-based feature-transformation patterns and the distinctiveness
//! criterion.
//!
//! Each source class contributes one landmark: the member closest to its
//! class mean. An instance's relative representation at a layer is its vector
//! of squared distances to the landmarks at that layer, and its
//! transformation pattern is the start-layer representation minus the
//! end-layer one. Distinctiveness compares the observed pattern with the one
//! predicted from the landmarks' own patterns, by rank correlation.

mod kendall;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use kendall::{kendall_tau, tau_counts, TauCounts};

/// Tolerance for accepting a probability row as a distribution.
pub const ALPHA_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PatternError {
    #[error("class {class} has no instances")]
    EmptyClass { class: usize },
    #[error("label {label} at index {index} is outside [0, {classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 entries, got {len}")]
    TooShort { len: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("variance mode needs at least 2 pattern pairs, got {got}")]
    TooFewPairs { got: usize },
}

/// Per-class representative instances of the source task.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet {
    /// Index of the chosen instance for each class.
    pub indices: Vec<usize>,
    /// Class means, `K × dim`.
    pub means: Array2<f64>,
}

/// Differences between two relative representations, one entry per landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPattern(Vec<f64>);

impl TransformPattern {
    pub fn new(values: Vec<f64>) -> Result<Self, PatternError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PatternError::NonFinite);
        }
        Ok(TransformPattern(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Nonnegative landmark weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaWeights(Vec<f64>);

impl AlphaWeights {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Convex combination `beta * a + (1 - beta) * b`.
    pub fn mix(&self, other: &AlphaWeights, beta: f64) -> AlphaWeights {
        AlphaWeights(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| beta * a + (1.0 - beta) * b)
                .collect(),
        )
    }
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<(), PatternError> {
    if labels.len() != rows {
        return Err(PatternError::LengthMismatch {
            left: rows,
            right: labels.len(),
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(PatternError::LabelOutOfRange {
            index,
            label,
            classes,
        });
    }
    Ok(())
}

/// Arithmetic mean of each class's final representations.
pub fn compute_class_means(
    reps: ArrayView2<f32>,
    labels: &[usize],
    classes: usize,
) -> Result<Array2<f64>, PatternError> {
    check_labels(labels, reps.nrows(), classes)?;
    let mut sums = Array2::<f64>::zeros((classes, reps.ncols()));
    let mut counts = vec![0usize; classes];
    for (row, &label) in reps.outer_iter().zip(labels) {
        counts[label] += 1;
        let mut acc = sums.row_mut(label);
        for (a, &x) in acc.iter_mut().zip(row.iter()) {
            *a += x as f64;
        }
    }
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(PatternError::EmptyClass { class });
        }
        sums.row_mut(class).mapv_inplace(|s| s / count as f64);
    }
    Ok(sums)
}

/// For each class, the member nearest (squared Euclidean) to the class mean;
/// ties go to the lowest instance index.
pub fn select_centers(
    reps: ArrayView2<f32>,
    labels: &[usize],
    classes: usize,
) -> Result<CenterSet, PatternError> {
    let means = compute_class_means(reps, labels, classes)?;
    let mut best: Vec<Option<(f64, usize)>> = vec![None; classes];
    for (i, (row, &label)) in reps.outer_iter().zip(labels).enumerate() {
        let d: f64 = row
            .iter()
            .zip(means.row(label).iter())
            .map(|(&x, &m)| {
                let diff = x as f64 - m;
                diff * diff
            })
            .sum();
        match best[label] {
            Some((bd, _)) if bd <= d => {}
            _ => best[label] = Some((d, i)),
        }
    }
    let indices = best
        .into_iter()
        .enumerate()
        .map(|(class, b)| b.map(|(_, i)| i).ok_or(PatternError::EmptyClass { class }))
        .collect::<Result<_, _>>()?;
    Ok(CenterSet { indices, means })
}

/// Squared Euclidean distance from `v` to every landmark row.
pub fn relative_representation(
    v: &[f64],
    landmarks: ArrayView2<f64>,
) -> Result<Array1<f64>, PatternError> {
    if v.len() != landmarks.ncols() {
        return Err(PatternError::DimensionMismatch {
            expected: landmarks.ncols(),
            got: v.len(),
        });
    }
    Ok(landmarks
        .outer_iter()
        .map(|l| {
            l.iter()
                .zip(v)
                .map(|(a, b)| {
                    let d = b - a;
                    d * d
                })
                .sum()
        })
        .collect())
}

pub fn transform_pattern(start: &[f64], end: &[f64]) -> Result<TransformPattern, PatternError> {
    if start.len() != end.len() {
        return Err(PatternError::LengthMismatch {
            left: start.len(),
            right: end.len(),
        });
    }
    TransformPattern::new(start.iter().zip(end).map(|(a, b)| a - b).collect())
}

/// Uses the source model's class probabilities as landmark weights.
pub fn alpha_predict(probs: &[f64]) -> Result<AlphaWeights, PatternError> {
    if probs.is_empty() {
        return Err(PatternError::NotADistribution("empty row".into()));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(PatternError::NonFinite);
    }
    if let Some(p) = probs.iter().find(|&&p| p < 0.0) {
        return Err(PatternError::NotADistribution(format!("negative entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > ALPHA_TOLERANCE {
        return Err(PatternError::NotADistribution(format!("row sums to {sum}")));
    }
    Ok(AlphaWeights(probs.iter().map(|p| p / sum).collect()))
}

/// Weights proportional to the reciprocal L2 distance from `x_a` to each
/// start-layer center. Exact matches take all the weight, split evenly.
pub fn alpha_distance(x_a: &[f64], centers_a: ArrayView2<f64>) -> Result<AlphaWeights, PatternError> {
    let squared = relative_representation(x_a, centers_a)?;
    if squared.is_empty() {
        return Err(PatternError::TooShort { len: 0 });
    }
    let zeros = squared.iter().filter(|&&d| d == 0.0).count();
    if zeros > 0 {
        let w = 1.0 / zeros as f64;
        return Ok(AlphaWeights(
            squared.iter().map(|&d| if d == 0.0 { w } else { 0.0 }).collect(),
        ));
    }
    let inv: Vec<f64> = squared.iter().map(|d| 1.0 / d.sqrt()).collect();
    let total: f64 = inv.iter().sum();
    Ok(AlphaWeights(inv.into_iter().map(|w| w / total).collect()))
}

/// `sum_k alpha_k * center_patterns[k]`.
pub fn approximate_pattern(
    alpha: &AlphaWeights,
    center_patterns: &[TransformPattern],
) -> Result<TransformPattern, PatternError> {
    if alpha.len() != center_patterns.len() {
        return Err(PatternError::LengthMismatch {
            left: alpha.len(),
            right: center_patterns.len(),
        });
    }
    let width = center_patterns.first().map_or(0, TransformPattern::len);
    let mut out = vec![0.0; width];
    for (&a, pattern) in alpha.values().iter().zip(center_patterns) {
        if pattern.len() != width {
            return Err(PatternError::LengthMismatch {
                left: width,
                right: pattern.len(),
            });
        }
        for (o, &p) in out.iter_mut().zip(pattern.values()) {
            *o += a * p;
        }
    }
    TransformPattern::new(out)
}

/// `(1 - tau) / 2` between observed and approximated patterns.
pub fn distinctiveness(
    observed: &TransformPattern,
    approximated: &TransformPattern,
) -> Result<f64, PatternError> {
    let tau = kendall_tau(observed.values(), approximated.values())?;
    Ok(((1.0 - tau) / 2.0).clamp(0.0, 1.0))
}

/// How per-layer-pair distinctiveness values are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MultiMode {
    #[default]
    Mean,
    Variance,
}

pub fn distinctiveness_multi(
    pairs: &[(TransformPattern, TransformPattern)],
    mode: MultiMode,
) -> Result<f64, PatternError> {
    if pairs.is_empty() || (mode == MultiMode::Variance && pairs.len() < 2) {
        return Err(PatternError::TooFewPairs { got: pairs.len() });
    }
    let values = pairs
        .iter()
        .map(|(o, a)| distinctiveness(o, a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(combine(&values, mode))
}

/// Mean or population variance of per-pair distinctiveness values.
pub fn combine(values: &[f64], mode: MultiMode) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    match mode {
        MultiMode::Mean => mean,
        MultiMode::Variance => values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n,
    }
}

/// Cached landmark geometry for one (start layer, end layer) pair.
#[derive(Debug, Clone)]
pub struct LandmarkPatterns {
    pub centers_a: Array2<f64>,
    pub centers_b: Array2<f64>,
    /// `S_C^A`: column `k` holds center `k`'s squared distances to all centers.
    pub relative_a: Array2<f64>,
    pub relative_b: Array2<f64>,
    /// One pattern per center (columns of `relative_a - relative_b`).
    pub center_patterns: Vec<TransformPattern>,
}

impl LandmarkPatterns {
    pub fn new(centers_a: Array2<f64>, centers_b: Array2<f64>) -> Result<Self, PatternError> {
        if centers_a.nrows() != centers_b.nrows() {
            return Err(PatternError::LengthMismatch {
                left: centers_a.nrows(),
                right: centers_b.nrows(),
            });
        }
        let k = centers_a.nrows();
        let mut relative_a = Array2::<f64>::zeros((k, k));
        let mut relative_b = Array2::<f64>::zeros((k, k));
        let mut center_patterns = Vec::with_capacity(k);
        for c in 0..k {
            let sa = relative_representation(centers_a.row(c).as_slice().unwrap(), centers_a.view())?;
            let sb = relative_representation(centers_b.row(c).as_slice().unwrap(), centers_b.view())?;
            relative_a.column_mut(c).assign(&sa);
            relative_b.column_mut(c).assign(&sb);
            center_patterns.push(transform_pattern(sa.as_slice().unwrap(), sb.as_slice().unwrap())?);
        }
        Ok(LandmarkPatterns {
            centers_a,
            centers_b,
            relative_a,
            relative_b,
            center_patterns,
        })
    }

    pub fn k(&self) -> usize {
        self.center_patterns.len()
    }

    pub fn observed(&self, x_a: &[f64], x_b: &[f64]) -> Result<TransformPattern, PatternError> {
        let sa = relative_representation(x_a, self.centers_a.view())?;
        let sb = relative_representation(x_b, self.centers_b.view())?;
        transform_pattern(sa.as_slice().unwrap(), sb.as_slice().unwrap())
    }
}
