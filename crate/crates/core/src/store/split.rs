use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingDataset, StoreError};

/// Stratified pool/test split of `dataset` by label.
pub fn split_pool(
    dataset: &EmbeddingDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(EmbeddingDataset, EmbeddingDataset), StoreError> {
    let labels = dataset.labels()?;
    let (pool, test) = split_indices(labels, test_fraction, seed)?;
    let mut pool_ds = dataset.subset(&pool);
    let mut test_ds = dataset.subset(&test);
    pool_ds.name = format!("{}-pool", dataset.name);
    test_ds.name = format!("{}-test", dataset.name);
    Ok((pool_ds, test_ds))
}

/// Returns `(pool, test)` instance indices, each ascending.
///
/// The test side gets `round(n * test_fraction)` instances, apportioned over
/// classes by largest remainder. Every class with at least two members keeps
/// at least one instance on each side. Classes with a single member are pooled
/// together and placed without stratification.
pub fn split_indices(
    labels: &[usize],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), StoreError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(StoreError::InvalidConfig(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if labels.is_empty() {
        return Err(StoreError::EmptyDataset);
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }

    // strata: one per class with >= 2 members, plus one for all singletons
    let mut strata: Vec<(Vec<usize>, bool)> = Vec::new();
    let mut singletons = Vec::new();
    for (class, members) in by_class {
        if members.len() < 2 {
            warn!("class {class} has {} instance(s); placed without stratification", members.len());
            singletons.extend(members);
        } else {
            strata.push((members, true));
        }
    }
    if !singletons.is_empty() {
        strata.push((singletons, false));
    }

    let n = labels.len();
    let total = ((n as f64) * test_fraction).round() as usize;
    let quotas: Vec<f64> = strata.iter().map(|(m, _)| m.len() as f64 * test_fraction).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &s in order.iter().take(total.saturating_sub(assigned)) {
        counts[s] += 1;
    }
    for (count, (members, stratified)) in counts.iter_mut().zip(&strata) {
        if *stratified {
            *count = (*count).clamp(1, members.len() - 1);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(n);
    let mut test = Vec::with_capacity(total);
    for ((members, _), count) in strata.into_iter().zip(counts) {
        let mut members = members;
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..count]);
        pool.extend_from_slice(&members[count..]);
    }
    pool.sort_unstable();
    test.sort_unstable();
    Ok((pool, test))
}
