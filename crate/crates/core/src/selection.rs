//! Uncertainty, the time-varying trade-off score, and top-b selection.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("need at least 2 target classes, got {0}")]
    TooFewClasses(usize),
    #[error("{name} = {value} is outside its valid range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("csv export failed: {0}")]
    Csv(String),
}

const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyMode {
    /// Gini impurity, highest for uniform predictions.
    #[default]
    Gini,
    /// The negated impurity, highest for confident predictions.
    Literal,
}

/// Gini impurity `sum p (1 - p)` of `probs`, or its negation in literal mode.
pub fn uncertainty(probs: &[f64], mode: UncertaintyMode) -> Result<f64, SelectionError> {
    if probs.len() < 2 {
        return Err(SelectionError::TooFewClasses(probs.len()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SelectionError::NotADistribution("negative or non-finite entry".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(SelectionError::NotADistribution(format!("sums to {sum}")));
    }
    let gini: f64 = probs.iter().map(|p| p * (1.0 - p)).sum();
    Ok(match mode {
        UncertaintyMode::Gini => gini,
        UncertaintyMode::Literal => -gini,
    })
}

/// Rescales Gini impurity from `[0, 1 - 1/K]` onto `[0, 1]`.
pub fn normalize_uncertainty(gini: f64, classes: usize) -> Result<f64, SelectionError> {
    if classes < 2 {
        return Err(SelectionError::TooFewClasses(classes));
    }
    let k = classes as f64;
    let max = 1.0 - 1.0 / k;
    // float slack: a computed uniform impurity can exceed max by an ulp or two
    if !(gini >= -1e-12 && gini <= max + 1e-12) {
        return Err(SelectionError::OutOfRange {
            name: "uncertainty",
            value: gini,
        });
    }
    Ok((gini * k / (k - 1.0)).clamp(0.0, 1.0))
}

/// Both uncertainty forms for one prediction: `(raw, normalized)`.
///
/// In literal mode the normalized value is `1 - normalized Gini`, which keeps
/// the literal ordering (confident first) on the `[0, 1]` scale.
pub fn uncertainty_pair(
    probs: &[f64],
    mode: UncertaintyMode,
) -> Result<(f64, f64), SelectionError> {
    let raw = uncertainty(probs, mode)?;
    let gini_norm = normalize_uncertainty(uncertainty(probs, UncertaintyMode::Gini)?, probs.len())?;
    let norm = match mode {
        UncertaintyMode::Gini => gini_norm,
        UncertaintyMode::Literal => 1.0 - gini_norm,
    };
    Ok((raw, norm))
}

/// Weight on uncertainty at iteration `t`: `min(lambda * t, 1)`.
pub fn tradeoff_weight(t: usize, lambda: f64) -> f64 {
    (lambda * t as f64).clamp(0.0, 1.0)
}

/// `(1 - w) * distinctiveness + w * uncertainty` with `w = min(lambda * t, 1)`.
pub fn score(
    distinctiveness: f64,
    uncertainty_norm: f64,
    t: usize,
    lambda: f64,
) -> Result<f64, SelectionError> {
    for (name, value) in [("distinctiveness", distinctiveness), ("uncertainty", uncertainty_norm)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(SelectionError::OutOfRange { name, value });
        }
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SelectionError::OutOfRange {
            name: "lambda",
            value: lambda,
        });
    }
    let w = tradeoff_weight(t, lambda);
    Ok((1.0 - w) * distinctiveness + w * uncertainty_norm)
}

/// Scores of one unlabeled instance at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub instance_id: usize,
    pub iteration: usize,
    pub distinctiveness: f64,
    pub uncertainty_raw: f64,
    pub uncertainty_norm: f64,
    pub score: f64,
    #[serde(default)]
    pub selected: bool,
}

/// Ids of the chosen batch plus whether fewer than `b` were available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub ids: Vec<usize>,
    pub truncated: bool,
}

fn by_score_then_id(a: &ScoreRecord, b: &ScoreRecord) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.instance_id.cmp(&b.instance_id))
}

/// The `b` highest-scoring ids in descending score order, ties by ascending id.
pub fn select_batch(records: &[ScoreRecord], b: usize) -> Selection {
    let b = b.max(1);
    let mut order: Vec<&ScoreRecord> = records.iter().collect();
    let truncated = order.len() < b;
    if !truncated && order.len() > b {
        order.select_nth_unstable_by(b - 1, |x, y| by_score_then_id(x, y));
        order.truncate(b);
    }
    order.sort_by(|x, y| by_score_then_id(x, y));
    Selection {
        ids: order.into_iter().map(|r| r.instance_id).collect(),
        truncated,
    }
}

/// Writes records as CSV with a header row.
pub fn write_score_csv<W: Write>(out: W, records: &[ScoreRecord]) -> Result<(), SelectionError> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(r).map_err(|e| SelectionError::Csv(e.to_string()))?;
    }
    if records.is_empty() {
        writer
            .write_record([
                "instance_id",
                "iteration",
                "distinctiveness",
                "uncertainty_raw",
                "uncertainty_norm",
                "score",
                "selected",
            ])
            .map_err(|e| SelectionError::Csv(e.to_string()))?;
    }
    writer.flush().map_err(|e| SelectionError::Csv(e.to_string()))
}
