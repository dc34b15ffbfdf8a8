use serde::{Deserialize, Serialize};

use super::LoopState;
use crate::store::{EmbeddingDataset, StoreError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("no label known for instance {0}")]
    UnknownInstance(usize),
    #[error("label {label} for instance {instance_id} is outside [0, {classes})")]
    InvalidLabel {
        instance_id: usize,
        label: usize,
        classes: usize,
    },
    #[error("oracle returned {got} labels for {expected} queries")]
    WrongCount { expected: usize, got: usize },
    #[error("timed out after {seconds:.1}s waiting for labels")]
    Timeout { seconds: f64 },
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
}

/// One instance sent for labeling, with the scores that selected it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub instance_id: usize,
    pub item_ref: String,
    pub score: f64,
    pub distinctiveness: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub iteration: usize,
    pub queries: Vec<PendingQuery>,
}

impl QueryBatch {
    pub fn ids(&self) -> Vec<usize> {
        self.queries.iter().map(|q| q.instance_id).collect()
    }
}

/// Source of labels for a selected batch.
pub trait Oracle {
    /// Labels for every query in `batch`, in the same order. Blocks until the
    /// whole batch is labeled or the oracle gives up.
    fn label(&mut self, batch: &QueryBatch) -> Result<Vec<usize>, OracleError>;

    /// Called after every committed iteration.
    fn observe(&mut self, _state: &LoopState, _budget: usize) {}
}

/// Replays stored ground-truth labels.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    labels: Vec<usize>,
}

impl SimulatedOracle {
    pub fn new(dataset: &EmbeddingDataset) -> Result<Self, StoreError> {
        Ok(SimulatedOracle {
            labels: dataset.labels()?.to_vec(),
        })
    }

    pub fn query(&self, ids: &[usize]) -> Result<Vec<usize>, OracleError> {
        ids.iter()
            .map(|&id| self.labels.get(id).copied().ok_or(OracleError::UnknownInstance(id)))
            .collect()
    }
}

impl Oracle for SimulatedOracle {
    fn label(&mut self, batch: &QueryBatch) -> Result<Vec<usize>, OracleError> {
        self.query(&batch.ids())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn dataset() -> EmbeddingDataset {
        EmbeddingDataset {
            name: "d".into(),
            layer_a: Array2::zeros((8, 1)),
            layer_a_extra: vec![],
            layer_b: Array2::zeros((8, 1)),
            source_probs: Array2::from_elem((8, 1), 1.0),
            k_target: 4,
            labels: Some(vec![3, 1, 0, 2, 2, 1, 0, 3]),
            item_refs: None,
            class_names: None,
        }
    }

    #[test]
    fn replays_stored_labels_in_request_order() {
        let oracle = SimulatedOracle::new(&dataset()).unwrap();
        assert_eq!(oracle.query(&[5]).unwrap(), vec![1]);
        assert_eq!(oracle.query(&[7, 2, 0]).unwrap(), vec![3, 0, 3]);
        assert_eq!(oracle.query(&[8]), Err(OracleError::UnknownInstance(8)));
    }

    #[test]
    fn unlabeled_dataset_cannot_back_a_simulation() {
        let mut d = dataset();
        d.labels = None;
        assert!(SimulatedOracle::new(&d).is_err());
    }
}
