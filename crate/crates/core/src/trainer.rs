//! Softmax classifier head over frozen end-layer features: initialization,
//! warm-started minibatch fine-tuning, prediction and evaluation.
//!
//! Parameters are rounded to `f32` at the end of every epoch so that the
//! `.f32` checkpoint files hold the head exactly.

use std::path::{Path, PathBuf};

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::store::{self, EmbeddingDataset, MatrixRef, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("dimensions must be positive (dim {dim}, classes {classes})")]
    EmptyShape { dim: usize, classes: usize },
    #[error("feature dimension {got} does not match head dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{features} feature rows but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("label {label} outside [0, {classes})")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    /// `K_target × dim_B`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub seed: u64,
    /// Minibatch updates applied so far; drives the shuffle stream.
    pub step_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            minibatch_size: 16,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be nonnegative".into()));
        }
        if self.minibatch_size == 0 {
            return Err(TrainError::InvalidConfig("minibatch_size must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(TrainError::InvalidConfig("l2_penalty must be nonnegative".into()));
        }
        Ok(())
    }
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Weights ~ N(0, 1/dim_B), zero bias.
pub fn init_head(dim_b: usize, classes: usize, seed: u64) -> Result<SoftmaxHead, TrainError> {
    if dim_b == 0 || classes == 0 {
        return Err(TrainError::EmptyShape { dim: dim_b, classes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim_b as f64).sqrt();
    let weights = Array2::from_shape_fn((classes, dim_b), |_| {
        let z: f64 = rng.sample(StandardNormal);
        round_f32(z * scale)
    });
    Ok(SoftmaxHead {
        weights,
        bias: Array1::zeros(classes),
        seed,
        step_count: 0,
    })
}

impl SoftmaxHead {
    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Writes `<stem>_W.f32`, `<stem>_b.f32` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf, TrainError> {
        let w = self.weights.mapv(|v| v as f32);
        let b = self.bias.mapv(|v| v as f32).insert_axis(Axis(0));
        let meta = HeadFile {
            seed: self.seed,
            step_count: self.step_count,
            k_target: self.classes(),
            dim_b: self.dim(),
            weights: store::write_matrix_ref(dir, &format!("{stem}_W.f32"), &w)?,
            bias: store::write_matrix_ref(dir, &format!("{stem}_b.f32"), &b)?,
        };
        let path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&meta).expect("head metadata serializes");
        std::fs::write(&path, text).map_err(|source| StoreError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<SoftmaxHead, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let meta: HeadFile = serde_json::from_str(&text).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_file(&meta, path.parent().unwrap_or_else(|| Path::new(".")))
    }

    fn from_file(meta: &HeadFile, base: &Path) -> Result<SoftmaxHead, TrainError> {
        if (meta.weights.rows, meta.weights.cols) != (meta.k_target, meta.dim_b)
            || (meta.bias.rows, meta.bias.cols) != (1, meta.k_target)
        {
            return Err(TrainError::DimensionMismatch {
                expected: meta.dim_b,
                got: meta.weights.cols,
            });
        }
        let w = meta.weights.load(base, "head_W")?;
        let b = meta.bias.load(base, "head_b")?;
        Ok(SoftmaxHead {
            weights: w.mapv(f64::from),
            bias: b.row(0).mapv(f64::from),
            seed: meta.seed,
            step_count: meta.step_count,
        })
    }
}

/// JSON metadata of a saved head; the matrices live beside it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadFile {
    pub seed: u64,
    pub step_count: u64,
    #[serde(rename = "K_target")]
    pub k_target: usize,
    #[serde(rename = "dim_B")]
    pub dim_b: usize,
    #[serde(rename = "W")]
    pub weights: MatrixRef,
    #[serde(rename = "b")]
    pub bias: MatrixRef,
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    logits
}

fn logits(weights: &Array2<f64>, bias: &Array1<f64>, features: ArrayView2<f64>) -> Array2<f64> {
    features.dot(&weights.t()) + bias
}

/// Row-wise `softmax(W x + b)`.
pub fn predict_proba(head: &SoftmaxHead, features: ArrayView2<f64>) -> Result<Array2<f64>, TrainError> {
    if features.ncols() != head.dim() {
        return Err(TrainError::DimensionMismatch {
            expected: head.dim(),
            got: features.ncols(),
        });
    }
    Ok(softmax_rows(logits(&head.weights, &head.bias, features)))
}

fn check_training_data(
    classes: usize,
    dim: usize,
    features: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(), TrainError> {
    if features.nrows() != labels.len() {
        return Err(TrainError::LabelCount {
            features: features.nrows(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if features.ncols() != dim {
        return Err(TrainError::DimensionMismatch {
            expected: dim,
            got: features.ncols(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Gradient of the regularized training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Mean cross-entropy plus `l2 / 2 * ||W||^2`, and its gradient.
///
/// The bias is not penalized.
pub fn loss_and_gradient(
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    features: ArrayView2<f64>,
    labels: &[usize],
    l2_penalty: f64,
) -> (f64, Gradient) {
    let m = labels.len() as f64;
    let mut probs = softmax_rows(logits(weights, bias, features));
    let mut loss = 0.0;
    for (mut row, &label) in probs.outer_iter_mut().zip(labels) {
        loss -= row[label].max(f64::MIN_POSITIVE).ln();
        row[label] -= 1.0;
    }
    loss = loss / m + 0.5 * l2_penalty * weights.iter().map(|w| w * w).sum::<f64>();
    // probs now holds P - Y
    let grad_w = probs.t().dot(&features) / m + &(weights * l2_penalty);
    let grad_b = probs.sum_axis(Axis(0)) / m;
    (
        loss,
        Gradient {
            weights: grad_w,
            bias: grad_b,
        },
    )
}

pub fn training_loss(
    head: &SoftmaxHead,
    features: ArrayView2<f64>,
    labels: &[usize],
    l2_penalty: f64,
) -> f64 {
    loss_and_gradient(&head.weights, &head.bias, features, labels, l2_penalty).0
}

/// Runs `config.epochs` epochs of shuffled minibatch gradient descent from `head`.
///
/// Each epoch's shuffle is drawn from a stream keyed by the step count at the
/// start of that epoch, so splitting one call into several consecutive calls
/// over the same data gives the same result.
pub fn fine_tune(
    head: &SoftmaxHead,
    features: ArrayView2<f64>,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<SoftmaxHead, TrainError> {
    config.validate()?;
    check_training_data(head.classes(), head.dim(), features, labels)?;
    let mut out = head.clone();
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ head.seed.rotate_left(32));
        rng.set_stream(out.step_count);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.minibatch_size) {
            let x = features.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (_, grad) = loss_and_gradient(&out.weights, &out.bias, x.view(), &y, config.l2_penalty);
            out.weights.scaled_add(-config.learning_rate, &grad.weights);
            out.bias.scaled_add(-config.learning_rate, &grad.bias);
            out.step_count += 1;
        }
        out.weights.mapv_inplace(round_f32);
        out.bias.mapv_inplace(round_f32);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `None` when no class has both positives and negatives in the test set.
    pub macro_auc: Option<f64>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(probs: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let correct = probs
        .outer_iter()
        .zip(labels)
        .filter(|(row, &l)| argmax(row.as_slice().expect("standard layout")) == l)
        .count();
    correct as f64 / labels.len() as f64
}

/// ROC-AUC of `scores` for `positive` (Mann-Whitney with average ranks).
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Unweighted mean of one-vs-rest AUCs over classes present in `labels`.
pub fn macro_auc(probs: ArrayView2<f64>, labels: &[usize]) -> Option<f64> {
    let mut total = 0.0;
    let mut counted = 0;
    for class in 0..probs.ncols() {
        let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        let scores: Vec<f64> = probs.column(class).to_vec();
        match binary_auc(&scores, &positive) {
            Some(auc) => {
                total += auc;
                counted += 1;
            }
            None => warn!("class {class} lacks positives or negatives in the test set; skipped in macro AUC"),
        }
    }
    (counted > 0).then(|| total / counted as f64)
}

pub fn evaluate_features(
    head: &SoftmaxHead,
    features: ArrayView2<f64>,
    labels: &[usize],
) -> Result<Metrics, TrainError> {
    check_training_data(head.classes(), head.dim(), features, labels)?;
    let probs = predict_proba(head, features)?;
    Ok(Metrics {
        accuracy: accuracy(probs.view(), labels),
        macro_auc: macro_auc(probs.view(), labels),
    })
}

pub fn evaluate(head: &SoftmaxHead, test: &EmbeddingDataset) -> Result<Metrics, TrainError> {
    let labels = test.labels()?;
    let features = test.layer_b.mapv(f64::from);
    evaluate_features(head, features.view(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_problem(seed: u64, n: usize, dim: usize, k: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-2.0..2.0));
        let y = (0..n).map(|_| rng.random_range(0..k)).collect();
        (x, y)
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = init_head(8, 3, 42).unwrap();
        assert_eq!(a, init_head(8, 3, 42).unwrap());
        assert_ne!(a.weights, init_head(8, 3, 43).unwrap().weights);
        assert!(a.bias.iter().all(|&b| b == 0.0));
        assert!(init_head(0, 3, 1).is_err());
    }

    #[test]
    fn untrained_heads_average_to_uniform() {
        let (x, _) = random_problem(1, 20, 10, 4);
        let mut mean = Array2::<f64>::zeros((20, 4));
        for seed in 0..100 {
            let head = init_head(10, 4, seed).unwrap();
            mean = mean + predict_proba(&head, x.view()).unwrap();
        }
        mean /= 100.0;
        assert!(mean.iter().all(|p| (p - 0.25).abs() < 0.05), "{mean}");
    }

    #[test]
    fn zero_head_is_uniform_and_large_logits_are_stable() {
        let mut head = init_head(2, 2, 0).unwrap();
        head.weights.fill(0.0);
        let p = predict_proba(&head, array![[3.0, -1.0]].view()).unwrap();
        assert_eq!(p, array![[0.5, 0.5]]);
        head.weights = array![[1000.0, 0.0], [0.0, 0.0]];
        let p = predict_proba(&head, array![[1.0, 0.0]].view()).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[[0, 0]] - 1.0).abs() < 1e-12 && p[[0, 1]] < 1e-12);
        assert!(predict_proba(&head, array![[1.0]].view()).is_err());
    }

    #[test]
    fn rows_sum_to_one_for_extreme_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut head = init_head(3, 5, 0).unwrap();
        head.weights = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1e4..1e4));
        let x = Array2::from_shape_fn((50, 3), |_| rng.random_range(-1.0..1.0));
        let p = predict_proba(&head, x.view()).unwrap();
        for row in p.outer_iter() {
            assert!(row.iter().all(|v| v.is_finite()));
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (x, y) = random_problem(2, 30, 4, 3);
        let head = init_head(4, 3, 7).unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        let tuned = fine_tune(&head, x.view(), &y, &cfg).unwrap();
        assert_eq!(tuned.weights, head.weights);
        assert_eq!(tuned.bias, head.bias);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..20 {
            let (x, y) = random_problem(100 + seed, 5, 8, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Array2::from_shape_fn((3, 8), |_| rng.random_range(-0.5..0.5));
            let b = Array1::from_shape_fn(3, |_| rng.random_range(-0.5..0.5));
            let l2 = 1e-2;
            let (_, grad) = loss_and_gradient(&w, &b, x.view(), &y, l2);
            let eps = 1e-4;
            let mut worst = 0.0f64;
            for idx in 0..w.len() {
                let (i, j) = (idx / 8, idx % 8);
                let mut up = w.clone();
                up[[i, j]] += eps;
                let mut down = w.clone();
                down[[i, j]] -= eps;
                let numeric = (loss_and_gradient(&up, &b, x.view(), &y, l2).0
                    - loss_and_gradient(&down, &b, x.view(), &y, l2).0)
                    / (2.0 * eps);
                let analytic = grad.weights[[i, j]];
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8));
            }
            for i in 0..3 {
                let mut up = b.clone();
                up[i] += eps;
                let mut down = b.clone();
                down[i] -= eps;
                let numeric = (loss_and_gradient(&w, &up, x.view(), &y, l2).0
                    - loss_and_gradient(&w, &down, x.view(), &y, l2).0)
                    / (2.0 * eps);
                let analytic = grad.bias[i];
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8));
            }
            assert!(worst < 1e-4, "seed {seed}: {worst}");
        }
    }

    fn separable() -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x = Array2::<f64>::zeros((40, 2));
        let mut y = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let center = if c == 0 { -2.0 } else { 2.0 };
            x[[i, 0]] = center + rng.random_range(-0.5..0.5);
            x[[i, 1]] = rng.random_range(-1.0..1.0);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_clusters_reach_full_accuracy() {
        let (x, y) = separable();
        let head = init_head(2, 2, 3).unwrap();
        let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
        let tuned = fine_tune(&head, x.view(), &y, &cfg).unwrap();
        let m = evaluate_features(&tuned, x.view(), &y).unwrap();
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn loss_does_not_increase_across_epochs() {
        let (x, y) = separable();
        let mut head = init_head(2, 2, 5).unwrap();
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let mut last = training_loss(&head, x.view(), &y, cfg.l2_penalty);
        for _ in 0..50 {
            head = fine_tune(&head, x.view(), &y, &cfg).unwrap();
            let now = training_loss(&head, x.view(), &y, cfg.l2_penalty);
            assert!(now <= last + 1e-9, "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn split_training_equals_one_long_run() {
        let (x, y) = random_problem(11, 37, 6, 4);
        let head = init_head(6, 4, 1).unwrap();
        let long = TrainConfig { epochs: 10, seed: 3, ..TrainConfig::default() };
        let short = TrainConfig { epochs: 5, ..long.clone() };
        let once = fine_tune(&head, x.view(), &y, &long).unwrap();
        let twice = fine_tune(&fine_tune(&head, x.view(), &y, &short).unwrap(), x.view(), &y, &short).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once, fine_tune(&head, x.view(), &y, &long).unwrap());
    }

    #[test]
    fn fine_tune_rejects_bad_data() {
        let head = init_head(2, 2, 0).unwrap();
        let cfg = TrainConfig::default();
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(fine_tune(&head, empty.view(), &[], &cfg), Err(TrainError::EmptyTrainingSet)));
        let x = array![[1.0, 2.0]];
        assert!(matches!(fine_tune(&head, x.view(), &[2], &cfg), Err(TrainError::LabelOutOfRange { .. })));
        assert!(matches!(fine_tune(&head, x.view(), &[0, 1], &cfg), Err(TrainError::LabelCount { .. })));
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let probs = array![[0.9, 0.1, 0.0], [0.2, 0.7, 0.1], [0.0, 0.1, 0.9], [0.6, 0.3, 0.1]];
        let labels = [0, 1, 2, 0];
        assert_eq!(accuracy(probs.view(), &labels), 1.0);
        assert_eq!(macro_auc(probs.view(), &labels), Some(1.0));
    }

    #[test]
    fn random_scores_give_half_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scores: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..1.0)).collect();
        let positive: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        assert!((binary_auc(&scores, &positive).unwrap() - 0.5).abs() < 0.05);
    }

    /// Counts (positive, negative) pairs ranked correctly, ties as half.
    fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut hits = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in positive.iter().enumerate() {
            for (j, &pj) in positive.iter().enumerate() {
                if pi && !pj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        hits += 1.0;
                    } else if scores[i] == scores[j] {
                        hits += 0.5;
                    }
                }
            }
        }
        hits / pairs
    }

    #[test]
    fn six_instance_three_class_auc_matches_pair_counting() {
        let probs = array![
            [0.5, 0.3, 0.2],
            [0.2, 0.5, 0.3],
            [0.3, 0.3, 0.4],
            [0.5, 0.2, 0.3],
            [0.1, 0.6, 0.3],
            [0.4, 0.2, 0.4]
        ];
        let labels = [0, 1, 2, 1, 0, 2];
        let mut expected = 0.0;
        for c in 0..3 {
            let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            expected += pairwise_auc(probs.column(c).to_vec().as_slice(), &positive);
        }
        assert_eq!(macro_auc(probs.view(), &labels), Some(expected / 3.0));
    }

    #[test]
    fn absent_class_is_skipped() {
        let probs = array![[0.7, 0.2, 0.1], [0.2, 0.7, 0.1]];
        assert_eq!(macro_auc(probs.view(), &[0, 1]), Some(1.0));
        assert_eq!(macro_auc(probs.view(), &[0, 0]), None);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y) = random_problem(3, 20, 5, 3);
        let head = fine_tune(&init_head(5, 3, 2).unwrap(), x.view(), &y, &TrainConfig::default()).unwrap();
        let path = head.save(dir.path(), "head").unwrap();
        assert_eq!(SoftmaxHead::load(&path).unwrap(), head);
    }
}
