//! The active adaptation loop: score every unlabeled instance, pick a batch,
//! obtain labels, fine-tune the head, evaluate, repeat.

pub mod http;
mod oracle;
mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use oracle::{Oracle, OracleError, PendingQuery, QueryBatch, SimulatedOracle};
pub use report::{write_curve_csv, write_outputs, write_query_log_csv, CHECKPOINT_FILE};

use crate::pattern::{
    self, alpha_distance, alpha_predict, approximate_pattern, combine, LandmarkPatterns, MultiMode,
    PatternError,
};
use crate::selection::{
    self, select_batch, uncertainty_pair, ScoreRecord, SelectionError, UncertaintyMode,
};
use crate::store::{EmbeddingDataset, SourceInput, SourceSnapshot, StoreError};
use crate::trainer::{self, fine_tune, init_head, predict_proba, Metrics, SoftmaxHead, TrainConfig, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("need at least 2 source landmarks, got {0}")]
    TooFewLandmarks(usize),
    #[error("unlabeled pool is empty")]
    PoolExhausted,
    #[error("query budget exhausted")]
    BudgetExhausted,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("oracle failed: {0}")]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Adma,
    Adma2,
    Random,
    #[value(name = "uncertainty_only")]
    UncertaintyOnly,
    #[value(name = "distinctiveness_only")]
    DistinctivenessOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    /// Source-model class probabilities.
    #[default]
    Predict,
    /// Reciprocal start-layer distance to each center.
    Distance,
}

/// Trade-off rate; `Auto` resolves to one over the planned iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lambda {
    #[default]
    Auto,
    Fixed(f64),
}

impl FromStr for Lambda {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Lambda::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected a number or 'auto', got {s:?}"))?;
        if v > 0.0 && v.is_finite() {
            Ok(Lambda::Fixed(v))
        } else {
            Err(format!("lambda must be positive, got {v}"))
        }
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Auto => write!(f, "auto"),
            Lambda::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub alpha_mode: AlphaMode,
    /// Start-layer indices paired with the end layer; empty picks the
    /// strategy default (`[0]`, or `[0, 1]` for adma2).
    pub layer_pairs: Vec<usize>,
    pub batch_size: usize,
    pub budget: usize,
    pub lambda: Lambda,
    pub uncertainty_mode: UncertaintyMode,
    pub multi_mode: MultiMode,
    pub seed: u64,
    pub train: TrainConfig,
    /// Continue from the previous head instead of re-initializing each round.
    pub warm_start: bool,
    /// Train on every label so far rather than only the newest batch.
    pub cumulative: bool,
    pub target_accuracy: Option<f64>,
    /// Worker threads for scoring; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            strategy: Strategy::Adma,
            alpha_mode: AlphaMode::Predict,
            layer_pairs: Vec::new(),
            batch_size: 10,
            budget: 100,
            lambda: Lambda::Auto,
            uncertainty_mode: UncertaintyMode::Gini,
            multi_mode: MultiMode::Mean,
            seed: 0,
            train: TrainConfig::default(),
            warm_start: true,
            cumulative: true,
            target_accuracy: None,
            threads: None,
        }
    }
}

impl StrategyConfig {
    pub fn effective_layer_pairs(&self) -> Vec<usize> {
        match (self.layer_pairs.is_empty(), self.strategy) {
            (false, _) => self.layer_pairs.clone(),
            (true, Strategy::Adma2) => vec![0, 1],
            (true, _) => vec![0],
        }
    }

    /// Number of selection rounds the budget allows.
    pub fn planned_iterations(&self) -> usize {
        self.budget.div_ceil(self.batch_size.max(1))
    }

    pub fn resolved_lambda(&self) -> f64 {
        match self.lambda {
            Lambda::Auto => 1.0 / self.planned_iterations().max(1) as f64,
            Lambda::Fixed(v) => v,
        }
    }

    pub fn validate(&self) -> Result<(), LoopError> {
        if self.batch_size == 0 {
            return Err(LoopError::Config("batch_size must be at least 1".into()));
        }
        if self.budget < self.batch_size {
            return Err(LoopError::Config(format!(
                "budget {} is smaller than batch size {}",
                self.budget, self.batch_size
            )));
        }
        if let Lambda::Fixed(v) = self.lambda {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LoopError::Config(format!("lambda must be positive, got {v}")));
            }
        }
        let pairs = self.effective_layer_pairs();
        let mut unique = pairs.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != pairs.len() {
            return Err(LoopError::Config("layer_pairs contains duplicates".into()));
        }
        if self.strategy == Strategy::Adma2 && pairs.len() < 2 {
            return Err(LoopError::Config("adma2 needs at least two layer pairs".into()));
        }
        if self.multi_mode == MultiMode::Variance && pairs.len() < 2 {
            return Err(LoopError::Config("variance mode needs at least two layer pairs".into()));
        }
        if let Some(t) = self.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(LoopError::Config(format!("target accuracy {t} outside [0, 1]")));
            }
        }
        self.train.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub iteration: usize,
    pub queries: usize,
    pub accuracy: Option<f64>,
    pub macro_auc: Option<f64>,
}

/// Everything that changes across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub t: usize,
    /// `(instance_id, label)` in query order.
    pub labeled: Vec<(usize, usize)>,
    pub unlabeled: BTreeSet<usize>,
    pub head: SoftmaxHead,
    /// Score records of every iteration, one list per iteration.
    pub query_log: Vec<Vec<ScoreRecord>>,
    pub metrics: Vec<MetricPoint>,
}

impl LoopState {
    pub fn queried(&self) -> usize {
        self.labeled.len()
    }

    pub fn latest_metrics(&self) -> Option<&MetricPoint> {
        self.metrics.last()
    }

    /// Checks the bookkeeping invariants against the pool size.
    pub fn check_invariants(&self, pool_size: usize) -> Result<(), String> {
        let labeled: BTreeSet<usize> = self.labeled.iter().map(|(id, _)| *id).collect();
        if labeled.len() != self.labeled.len() {
            return Err("an instance was labeled twice".into());
        }
        if labeled.intersection(&self.unlabeled).next().is_some() {
            return Err("labeled and unlabeled overlap".into());
        }
        if labeled.len() + self.unlabeled.len() != pool_size
            || labeled.iter().chain(&self.unlabeled).any(|&id| id >= pool_size)
        {
            return Err("labeled and unlabeled do not cover the pool".into());
        }
        if self.query_log.len() != self.t {
            return Err(format!("query log has {} entries at t = {}", self.query_log.len(), self.t));
        }
        Ok(())
    }
}

/// Derives centers from raw source data when needed.
pub fn resolve_snapshot(source: &SourceInput) -> Result<SourceSnapshot, LoopError> {
    match source {
        SourceInput::Centers(snapshot) => Ok(snapshot.clone()),
        SourceInput::Raw(data) => {
            data.validate()?;
            let centers = pattern::select_centers(data.final_reps().view(), &data.labels, data.k_source)?;
            let pick = |m: &Array2<f32>| m.select(Axis(0), &centers.indices);
            Ok(SourceSnapshot {
                centers_a: pick(&data.layer_a),
                centers_a_extra: data.layer_a_extra.iter().map(pick).collect(),
                centers_b: pick(&data.layer_b),
                center_ids: Some(centers.indices.iter().map(|i| i.to_string()).collect()),
            })
        }
    }
}

fn row_f64(row: ArrayView1<f32>) -> Vec<f64> {
    row.iter().map(|&v| v as f64).collect()
}

/// Outcome of one committed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub selected: Vec<usize>,
    pub truncated: bool,
    pub metrics: MetricPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    BudgetExhausted,
    PoolExhausted,
    TargetReached,
}

/// Fixed inputs of a run plus everything derivable from them once.
pub struct Session<'a> {
    pool: &'a EmbeddingDataset,
    test: Option<&'a EmbeddingDataset>,
    config: StrategyConfig,
    snapshot: SourceSnapshot,
    landmarks: Vec<LandmarkPatterns>,
    distinctiveness: Vec<f64>,
    features: Array2<f64>,
    test_features: Option<Array2<f64>>,
    lambda: f64,
    threads: Option<rayon::ThreadPool>,
}

impl<'a> Session<'a> {
    /// Resolves centers, caches the landmark patterns of every configured
    /// layer pair and scores each pool instance's distinctiveness.
    ///
    /// Start- and end-layer features are fixed for the whole run, so each
    /// instance's distinctiveness is computed once here.
    pub fn new(
        pool: &'a EmbeddingDataset,
        test: Option<&'a EmbeddingDataset>,
        source: &SourceInput,
        config: StrategyConfig,
    ) -> Result<Session<'a>, LoopError> {
        config.validate()?;
        pool.validate()?;
        if let Some(test) = test {
            test.validate()?;
            test.labels()?;
            if test.dim_b() != pool.dim_b() || test.k_target != pool.k_target {
                return Err(LoopError::Config("test set layout differs from the pool".into()));
            }
        }
        if pool.k_target < 2 {
            return Err(LoopError::Config(format!("need at least 2 target classes, got {}", pool.k_target)));
        }
        let snapshot = resolve_snapshot(source)?;
        snapshot.validate()?;
        let k = snapshot.k_source();
        if k < 2 {
            return Err(LoopError::TooFewLandmarks(k));
        }
        if pool.k_source() != k {
            return Err(LoopError::Config(format!(
                "pool has {} source-probability columns but the snapshot has {k} centers",
                pool.k_source()
            )));
        }
        if snapshot.centers_b.ncols() != pool.dim_b() {
            return Err(LoopError::Config("end-layer dimension differs between pool and snapshot".into()));
        }

        let pairs = config.effective_layer_pairs();
        let mut landmarks = Vec::with_capacity(pairs.len());
        for &p in &pairs {
            let (Some(pool_a), Some(centers_a)) = (pool.start_layer(p), snapshot.start_layer(p)) else {
                return Err(LoopError::Config(format!("start layer {p} missing from pool or snapshot")));
            };
            if pool_a.ncols() != centers_a.ncols() {
                return Err(LoopError::Config(format!("start layer {p} dimension differs between pool and snapshot")));
            }
            landmarks.push(LandmarkPatterns::new(
                centers_a.mapv(f64::from),
                snapshot.centers_b.mapv(f64::from),
            )?);
        }

        let threads = match config.threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| LoopError::Config(e.to_string()))?,
            ),
            None => None,
        };

        let mut session = Session {
            pool,
            test,
            lambda: config.resolved_lambda(),
            config,
            snapshot,
            landmarks,
            distinctiveness: Vec::new(),
            features: pool.layer_b.mapv(f64::from),
            test_features: test.map(|t| t.layer_b.mapv(f64::from)),
            threads,
        };
        let ids: Vec<usize> = (0..pool.len()).collect();
        session.distinctiveness = session.in_pool(|| {
            ids.par_iter()
                .map(|&i| session.instance_distinctiveness(i))
                .collect::<Result<Vec<_>, _>>()
        })?;
        Ok(session)
    }

    fn in_pool<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.threads {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    pub fn snapshot(&self) -> &SourceSnapshot {
        &self.snapshot
    }

    pub fn landmarks(&self) -> &[LandmarkPatterns] {
        &self.landmarks
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn pool(&self) -> &EmbeddingDataset {
        self.pool
    }

    /// Cached distinctiveness of every pool instance.
    pub fn distinctiveness(&self) -> &[f64] {
        &self.distinctiveness
    }

    /// Per-layer-pair distinctiveness values of pool instance `i`.
    pub fn pair_distinctiveness(&self, i: usize) -> Result<Vec<f64>, PatternError> {
        let x_b = row_f64(self.pool.layer_b.row(i));
        let pairs = self.config.effective_layer_pairs();
        pairs
            .iter()
            .zip(&self.landmarks)
            .map(|(&p, lp)| {
                let layer = self.pool.start_layer(p).expect("checked in new");
                let x_a = row_f64(layer.row(i));
                let observed = lp.observed(&x_a, &x_b)?;
                let alpha = match self.config.alpha_mode {
                    AlphaMode::Predict => alpha_predict(&row_f64(self.pool.source_probs.row(i)))?,
                    AlphaMode::Distance => alpha_distance(&x_a, lp.centers_a.view())?,
                };
                let approximated = approximate_pattern(&alpha, &lp.center_patterns)?;
                pattern::distinctiveness(&observed, &approximated)
            })
            .collect()
    }

    fn instance_distinctiveness(&self, i: usize) -> Result<f64, PatternError> {
        let values = self.pair_distinctiveness(i)?;
        Ok(if values.len() == 1 {
            values[0]
        } else {
            combine(&values, self.config.multi_mode)
        })
    }

    fn fresh_head(&self) -> Result<SoftmaxHead, LoopError> {
        Ok(init_head(self.pool.dim_b(), self.pool.k_target, self.config.seed)?)
    }

    /// Empty labeled set, every pool instance unlabeled, untrained head, `t = 0`.
    pub fn initial_state(&self) -> Result<LoopState, LoopError> {
        Ok(LoopState {
            t: 0,
            labeled: Vec::new(),
            unlabeled: (0..self.pool.len()).collect(),
            head: self.fresh_head()?,
            query_log: Vec::new(),
            metrics: Vec::new(),
        })
    }

    /// Score records for every unlabeled instance at iteration `state.t`,
    /// ascending by id.
    pub fn score_unlabeled(&self, state: &LoopState) -> Result<Vec<ScoreRecord>, LoopError> {
        let ids: Vec<usize> = state.unlabeled.iter().copied().collect();
        let features = self.features.select(Axis(0), &ids);
        let probs = predict_proba(&state.head, features.view())?;
        let t = state.t;
        let records = self.in_pool(|| {
            ids.par_iter()
                .enumerate()
                .map(|(row, &id)| -> Result<ScoreRecord, SelectionError> {
                    let p = probs.row(row);
                    let (raw, norm) = uncertainty_pair(p.as_slice().expect("standard layout"), self.config.uncertainty_mode)?;
                    let d = self.distinctiveness[id];
                    let score = match self.config.strategy {
                        Strategy::UncertaintyOnly => norm,
                        Strategy::DistinctivenessOnly => d,
                        Strategy::Adma | Strategy::Adma2 | Strategy::Random => selection::score(d, norm, t, self.lambda)?,
                    };
                    Ok(ScoreRecord {
                        instance_id: id,
                        iteration: t,
                        distinctiveness: d,
                        uncertainty_raw: raw,
                        uncertainty_norm: norm,
                        score,
                        selected: false,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        Ok(records)
    }

    /// Chooses the batch for the current iteration, in query order.
    pub fn choose(&self, state: &LoopState, records: &[ScoreRecord], b: usize) -> (Vec<usize>, bool) {
        match self.config.strategy {
            Strategy::Random => {
                let candidates: Vec<usize> = records.iter().map(|r| r.instance_id).collect();
                let truncated = candidates.len() < b;
                (random_batch(&candidates, b, self.config.seed, state.t), truncated)
            }
            _ => {
                let s = select_batch(records, b);
                (s.ids, s.truncated)
            }
        }
    }

    fn evaluate(&self, head: &SoftmaxHead) -> Result<Option<Metrics>, LoopError> {
        match (self.test, &self.test_features) {
            (Some(test), Some(features)) => Ok(Some(trainer::evaluate_features(
                head,
                features.view(),
                test.labels()?,
            )?)),
            _ => Ok(None),
        }
    }

    /// One select-query-train-evaluate round. Either the whole round commits
    /// or `state` is left untouched.
    pub fn run_iteration(
        &self,
        state: &mut LoopState,
        oracle: &mut dyn Oracle,
    ) -> Result<IterationReport, LoopError> {
        if state.unlabeled.is_empty() {
            return Err(LoopError::PoolExhausted);
        }
        if state.queried() >= self.config.budget {
            return Err(LoopError::BudgetExhausted);
        }
        let b = self.config.batch_size.min(self.config.budget - state.queried());
        let mut records = self.score_unlabeled(state)?;
        let (selected, truncated) = self.choose(state, &records, b);

        let position: std::collections::HashMap<usize, usize> =
            records.iter().enumerate().map(|(i, r)| (r.instance_id, i)).collect();
        for id in &selected {
            records[position[id]].selected = true;
        }
        let batch = QueryBatch {
            iteration: state.t,
            queries: selected
                .iter()
                .map(|&id| {
                    let r = &records[position[&id]];
                    PendingQuery {
                        instance_id: id,
                        item_ref: self.pool.item_ref(id),
                        score: r.score,
                        distinctiveness: r.distinctiveness,
                        uncertainty: r.uncertainty_norm,
                    }
                })
                .collect(),
        };

        let labels = oracle.label(&batch)?;
        if labels.len() != selected.len() {
            return Err(OracleError::WrongCount {
                expected: selected.len(),
                got: labels.len(),
            }
            .into());
        }
        let classes = self.pool.k_target;
        if let Some((&instance_id, &label)) = selected.iter().zip(&labels).find(|(_, &l)| l >= classes) {
            return Err(OracleError::InvalidLabel {
                instance_id,
                label,
                classes,
            }
            .into());
        }

        let new_pairs: Vec<(usize, usize)> = selected.iter().copied().zip(labels).collect();
        let training: Vec<(usize, usize)> = if self.config.cumulative {
            state.labeled.iter().chain(&new_pairs).copied().collect()
        } else {
            new_pairs.clone()
        };
        let ids: Vec<usize> = training.iter().map(|(id, _)| *id).collect();
        let ys: Vec<usize> = training.iter().map(|(_, y)| *y).collect();
        let x = self.features.select(Axis(0), &ids);
        let start = if self.config.warm_start {
            state.head.clone()
        } else {
            self.fresh_head()?
        };
        let head = fine_tune(&start, x.view(), &ys, &self.config.train)?;
        let metrics = self.evaluate(&head)?;

        // commit
        for id in &selected {
            state.unlabeled.remove(id);
        }
        state.labeled.extend(new_pairs);
        state.head = head;
        state.query_log.push(records);
        let point = MetricPoint {
            iteration: state.t,
            queries: state.labeled.len(),
            accuracy: metrics.map(|m| m.accuracy),
            macro_auc: metrics.and_then(|m| m.macro_auc),
        };
        state.metrics.push(point);
        state.t += 1;
        Ok(IterationReport {
            iteration: point.iteration,
            selected,
            truncated,
            metrics: point,
        })
    }

    pub fn stop_reason(&self, state: &LoopState) -> Option<StopReason> {
        if state.unlabeled.is_empty() {
            return Some(StopReason::PoolExhausted);
        }
        if state.queried() >= self.config.budget {
            return Some(StopReason::BudgetExhausted);
        }
        let reached = match (self.config.target_accuracy, state.latest_metrics()) {
            (Some(target), Some(m)) => m.accuracy.is_some_and(|a| a >= target),
            _ => false,
        };
        reached.then_some(StopReason::TargetReached)
    }

    /// Iterates until the budget is spent, the pool is empty or the target
    /// accuracy is reached.
    pub fn run(&self, state: &mut LoopState, oracle: &mut dyn Oracle) -> Result<StopReason, LoopError> {
        loop {
            if let Some(reason) = self.stop_reason(state) {
                return Ok(reason);
            }
            let report = self.run_iteration(state, oracle)?;
            log::info!(
                "iteration {} queried {:?} -> accuracy {:?}",
                report.iteration,
                report.selected,
                report.metrics.accuracy
            );
            oracle.observe(state, self.config.budget);
        }
    }
}

/// Seeded partial Fisher-Yates draw of `b` ids from `candidates`.
pub fn random_batch(candidates: &[usize], b: usize, seed: u64, t: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(RANDOM_SEED_OFFSET));
    rng.set_stream(t as u64);
    let mut ids = candidates.to_vec();
    let take = b.min(ids.len());
    for i in 0..take {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
    }
    ids.truncate(take);
    ids
}

/// Keeps the random-baseline stream apart from the training shuffles.
pub const RANDOM_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Builds a session, runs it to completion with `oracle`, and returns the
/// final state together with its learning curve.
pub fn run(
    pool: &EmbeddingDataset,
    test: Option<&EmbeddingDataset>,
    source: &SourceInput,
    config: StrategyConfig,
    oracle: &mut dyn Oracle,
) -> Result<(LoopState, Vec<MetricPoint>), LoopError> {
    let session = Session::new(pool, test, source, config)?;
    let mut state = session.initial_state()?;
    session.run(&mut state, oracle)?;
    let curve = state.metrics.clone();
    Ok((state, curve))
}
