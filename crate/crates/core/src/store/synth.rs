//! Desk-scale synthetic transfer task.
//!
//! Source classes are Gaussian clusters in layer-B space. Every start layer
//! is a fixed random linear map of the layer-B features plus isotropic noise.
//! Target class `j` reuses source class `j mod K_source` with its mean moved
//! along a random unit direction by `shift` cluster radii, where one radius is
//! `cluster_spread * sqrt(dim_B)`.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, SourceData, SourceSnapshot, StoreError};
use crate::pattern::select_centers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub k_source: usize,
    pub k_target: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    /// Number of extra start layers (A2, A3, ...), each with its own map.
    pub extra_start_layers: usize,
    pub source_per_class: usize,
    /// Target instances per class; a single entry applies to every class.
    pub target_per_class: Vec<usize>,
    /// Held-out source instances per class, drawn after the target.
    pub holdout_per_class: usize,
    /// Standard deviation of the source cluster means around the origin.
    pub center_scale: f64,
    /// Per-coordinate standard deviation within a cluster.
    pub cluster_spread: f64,
    /// Target mean displacement, in cluster radii.
    pub shift: f64,
    /// Per-coordinate noise added to start-layer features.
    pub layer_noise: f64,
    /// Divisor of the squared distances inside the source softmax.
    pub prob_temperature: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            k_source: 10,
            k_target: 5,
            dim_a: 24,
            dim_b: 16,
            extra_start_layers: 0,
            source_per_class: 50,
            target_per_class: vec![286],
            holdout_per_class: 0,
            center_scale: 1.0,
            cluster_spread: 0.5,
            shift: 1.0,
            layer_noise: 0.05,
            prob_temperature: 1.0,
        }
    }
}

impl SyntheticConfig {
    fn target_counts(&self) -> Result<Vec<usize>, StoreError> {
        match self.target_per_class.len() {
            1 => Ok(vec![self.target_per_class[0]; self.k_target]),
            n if n == self.k_target => Ok(self.target_per_class.clone()),
            n => Err(StoreError::InvalidConfig(format!(
                "target_per_class has {n} entries for {} target classes",
                self.k_target
            ))),
        }
    }

    fn validate(&self) -> Result<(), StoreError> {
        let positive = [
            ("k_source", self.k_source),
            ("k_target", self.k_target),
            ("dim_a", self.dim_a),
            ("dim_b", self.dim_b),
            ("source_per_class", self.source_per_class),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(StoreError::InvalidConfig(format!("{name} must be positive")));
        }
        let counts = self.target_counts()?;
        if counts.contains(&0) {
            return Err(StoreError::InvalidConfig("target_per_class must be positive".into()));
        }
        let reals = [
            ("center_scale", self.center_scale),
            ("cluster_spread", self.cluster_spread),
            ("prob_temperature", self.prob_temperature),
        ];
        if let Some((name, _)) = reals.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(StoreError::InvalidConfig(format!("{name} must be positive")));
        }
        if !(self.shift >= 0.0 && self.layer_noise >= 0.0) {
            return Err(StoreError::InvalidConfig("shift and layer_noise must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    /// Labeled target-task instances.
    pub target: EmbeddingDataset,
    pub snapshot: SourceSnapshot,
    /// The source sample the snapshot centers were selected from.
    pub source: SourceData,
    /// Fresh source-task draws with source labels, when requested.
    pub source_holdout: Option<EmbeddingDataset>,
}

struct Generator {
    rng: ChaCha8Rng,
    maps: Vec<Array2<f64>>,
    source_means: Array2<f64>,
    cfg: SyntheticConfig,
}

impl Generator {
    fn gaussian(&mut self, scale: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * scale
    }

    fn draw_b(&mut self, mean: &Array1<f64>) -> Array1<f64> {
        let spread = self.cfg.cluster_spread;
        let noise: Array1<f64> = (0..mean.len()).map(|_| self.gaussian(spread)).collect();
        mean + &noise
    }

    fn draw_a(&mut self, layer: usize, b: &Array1<f64>) -> Array1<f64> {
        let noise = self.cfg.layer_noise;
        let projected = self.maps[layer].dot(b);
        let n = projected.len();
        projected + &(0..n).map(|_| self.gaussian(noise)).collect::<Array1<f64>>()
    }

    /// Draws `counts[c]` instances around `means[c]` for each class `c`.
    fn draw_instances(&mut self, means: &Array2<f64>, counts: &[usize]) -> Draws {
        let layers = self.maps.len();
        let mut draws = Draws {
            a: vec![Vec::new(); layers],
            ..Draws::default()
        };
        for (class, &count) in counts.iter().enumerate() {
            let mean = means.row(class).to_owned();
            for _ in 0..count {
                let b = self.draw_b(&mean);
                for layer in 0..layers {
                    let a = self.draw_a(layer, &b);
                    draws.a[layer].push(a);
                }
                draws.b.push(b);
                draws.labels.push(class);
            }
        }
        draws
    }

    fn source_probs(&self, b: &[Array1<f64>]) -> Array2<f32> {
        let k = self.source_means.nrows();
        let mut probs = Array2::<f32>::zeros((b.len(), k));
        for (i, x) in b.iter().enumerate() {
            let logits: Vec<f64> = self
                .source_means
                .outer_iter()
                .map(|mu| {
                    let d2: f64 = mu.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
                    -d2 / self.cfg.prob_temperature
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (c, e) in exps.iter().enumerate() {
                probs[[i, c]] = (e / total) as f32;
            }
        }
        probs
    }
}

#[derive(Default)]
struct Draws {
    a: Vec<Vec<Array1<f64>>>,
    b: Vec<Array1<f64>>,
    labels: Vec<usize>,
}

fn stack(rows: &[Array1<f64>], cols: usize) -> Array2<f32> {
    let mut m = Array2::<f32>::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m[[i, j]] = *v as f32;
        }
    }
    m
}

pub fn generate_synthetic_task(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticTask, StoreError> {
    cfg.validate()?;
    let target_counts = cfg.target_counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let map_scale = 1.0 / (cfg.dim_a as f64).sqrt();
    let maps: Vec<Array2<f64>> = (0..=cfg.extra_start_layers)
        .map(|_| {
            Array2::from_shape_fn((cfg.dim_a, cfg.dim_b), |_| {
                let z: f64 = rng.sample(StandardNormal);
                z * map_scale
            })
        })
        .collect();
    let source_means = Array2::from_shape_fn((cfg.k_source, cfg.dim_b), |_| {
        let z: f64 = rng.sample(StandardNormal);
        z * cfg.center_scale
    });
    let mut generator = Generator {
        rng,
        maps,
        source_means,
        cfg: cfg.clone(),
    };

    let radius = cfg.cluster_spread * (cfg.dim_b as f64).sqrt();
    let mut target_means = Array2::<f64>::zeros((cfg.k_target, cfg.dim_b));
    for j in 0..cfg.k_target {
        let direction: Array1<f64> = (0..cfg.dim_b).map(|_| generator.gaussian(1.0)).collect();
        let norm = direction.dot(&direction).sqrt().max(f64::MIN_POSITIVE);
        let base = generator.source_means.row(j % cfg.k_source).to_owned();
        target_means
            .row_mut(j)
            .assign(&(base + direction * (cfg.shift * radius / norm)));
    }

    let source_means = generator.source_means.clone();
    let source = generator.draw_instances(&source_means, &vec![cfg.source_per_class; cfg.k_source]);
    let target = generator.draw_instances(&target_means, &target_counts);
    let holdout = (cfg.holdout_per_class > 0).then(|| {
        generator.draw_instances(&source_means, &vec![cfg.holdout_per_class; cfg.k_source])
    });

    let source_data = SourceData {
        layer_a: stack(&source.a[0], cfg.dim_a),
        layer_a_extra: source.a[1..].iter().map(|a| stack(a, cfg.dim_a)).collect(),
        layer_b: stack(&source.b, cfg.dim_b),
        final_reps: None,
        labels: source.labels.clone(),
        k_source: cfg.k_source,
    };
    let centers = select_centers(source_data.final_reps().view(), &source_data.labels, cfg.k_source)
        .map_err(|e| StoreError::InvalidConfig(e.to_string()))?;
    let pick = |m: &Array2<f32>| m.select(ndarray::Axis(0), &centers.indices);
    let snapshot = SourceSnapshot {
        centers_a: pick(&source_data.layer_a),
        centers_a_extra: source_data.layer_a_extra.iter().map(pick).collect(),
        centers_b: pick(&source_data.layer_b),
        center_ids: Some(centers.indices.iter().map(|i| format!("source/{i}")).collect()),
    };

    let to_dataset = |draws: &Draws, name: &str, k: usize, prefix: &str| EmbeddingDataset {
        name: name.to_string(),
        layer_a: stack(&draws.a[0], cfg.dim_a),
        layer_a_extra: draws.a[1..].iter().map(|a| stack(a, cfg.dim_a)).collect(),
        layer_b: stack(&draws.b, cfg.dim_b),
        source_probs: generator.source_probs(&round_rows(&draws.b)),
        k_target: k,
        labels: Some(draws.labels.clone()),
        item_refs: Some(
            draws
                .labels
                .iter()
                .enumerate()
                .map(|(i, l)| format!("{prefix}/class_{l}/{i}"))
                .collect(),
        ),
        class_names: Some((0..k).map(|c| format!("class_{c}")).collect()),
    };
    let target_ds = to_dataset(&target, "synthetic-target", cfg.k_target, "target");
    let holdout_ds = holdout
        .as_ref()
        .map(|h| to_dataset(h, "synthetic-source-holdout", cfg.k_source, "source-holdout"));

    Ok(SyntheticTask {
        target: target_ds,
        snapshot,
        source: source_data,
        source_holdout: holdout_ds,
    })
}

/// Layer-B rows as stored (rounded to f32), so probabilities match the file.
fn round_rows(rows: &[Array1<f64>]) -> Vec<Array1<f64>> {
    rows.iter().map(|r| r.mapv(|v| v as f32 as f64)).collect()
}
