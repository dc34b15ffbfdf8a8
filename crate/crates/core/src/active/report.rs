use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LoopError, LoopState, MetricPoint, StrategyConfig};
use crate::selection::{write_score_csv, ScoreRecord};
use crate::store::StoreError;
use crate::trainer::SoftmaxHead;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const HEAD_STEM: &str = "head";

fn io_error(path: &Path, source: std::io::Error) -> LoopError {
    LoopError::Store(StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, LoopError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn optional(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `iteration,queries,accuracy,macro_auc`; missing metrics are left empty.
pub fn write_curve_csv<W: Write>(out: W, curve: &[MetricPoint]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["iteration", "queries", "accuracy", "macro_auc"])?;
    for p in curve {
        writer.write_record([
            p.iteration.to_string(),
            p.queries.to_string(),
            optional(p.accuracy),
            optional(p.macro_auc),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Every iteration's score records, flattened into one table.
pub fn write_query_log_csv<W: Write>(out: W, log: &[Vec<ScoreRecord>]) -> Result<(), LoopError> {
    let flat: Vec<ScoreRecord> = log.iter().flatten().cloned().collect();
    Ok(write_score_csv(out, &flat)?)
}

/// Writes `curve.csv` and `scores.csv` into `dir`.
pub fn write_outputs(dir: &Path, state: &LoopState) -> Result<(), LoopError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let curve_path = dir.join("curve.csv");
    write_curve_csv(create(&curve_path)?, &state.metrics)
        .map_err(|e| io_error(&curve_path, std::io::Error::other(e)))?;
    write_query_log_csv(create(&dir.join("scores.csv"))?, &state.query_log)
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    config: StrategyConfig,
    t: usize,
    labeled: Vec<(usize, usize)>,
    unlabeled: Vec<usize>,
    /// Head metadata file, relative to the checkpoint directory.
    head: PathBuf,
    query_log: Vec<Vec<ScoreRecord>>,
    metrics: Vec<MetricPoint>,
}

impl LoopState {
    /// Writes the state and the config that produced it into `dir`.
    pub fn save_checkpoint(&self, dir: &Path, config: &StrategyConfig) -> Result<PathBuf, LoopError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let head_path = self.head.save(dir, HEAD_STEM)?;
        let file = CheckpointFile {
            config: config.clone(),
            t: self.t,
            labeled: self.labeled.clone(),
            unlabeled: self.unlabeled.iter().copied().collect(),
            head: head_path.file_name().map(PathBuf::from).unwrap_or(head_path),
            query_log: self.query_log.clone(),
            metrics: self.metrics.clone(),
        };
        let path = dir.join(CHECKPOINT_FILE);
        let mut out = create(&path)?;
        serde_json::to_writer(&mut out, &file).map_err(|e| {
            LoopError::Store(StoreError::Json {
                path: path.clone(),
                source: e,
            })
        })?;
        out.flush().map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    /// Reads a checkpoint written by [`LoopState::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<(StrategyConfig, LoopState), LoopError> {
        let path = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| {
            LoopError::Store(StoreError::Json {
                path: path.clone(),
                source: e,
            })
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let head = SoftmaxHead::load(&base.join(&file.head))?;
        let state = LoopState {
            t: file.t,
            labeled: file.labeled,
            unlabeled: file.unlabeled.into_iter().collect(),
            head,
            query_log: file.query_log,
            metrics: file.metrics,
        };
        Ok((file.config, state))
    }
}
