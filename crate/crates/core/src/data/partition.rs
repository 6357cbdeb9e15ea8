use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Stratified IID split into `n` disjoint shards.
///
/// Each class is shuffled with `seed` and dealt round-robin; the dealing
/// cursor carries over between classes, so shard sizes differ by at most one
/// and per-shard class histograms depend only on the class counts, never on
/// the seed.
pub fn partition_iid(dataset: &LabeledDataset, n: usize, seed: u64) -> Result<Vec<LabeledDataset>> {
    if n == 0 {
        return Err(Error::Partition("client count must be at least 1".into()));
    }
    if n > dataset.len() {
        return Err(Error::Partition(format!(
            "cannot split {} samples across {n} clients",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count()];
    for (i, &y) in dataset.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut cursor = 0usize;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            shards[cursor % n].push(i);
            cursor += 1;
        }
    }
    Ok(shards.iter().map(|idx| dataset.subset(idx)).collect())
}

/// Shard `k` holds exactly the samples of class `k`; requires `n == |Y|`.
pub fn partition_per_class(dataset: &LabeledDataset, n: usize) -> Result<Vec<LabeledDataset>> {
    if n != dataset.class_count() {
        return Err(Error::Partition(format!(
            "per-class partition needs one client per class ({}), got {n}",
            dataset.class_count()
        )));
    }
    let shards: Vec<LabeledDataset> = (0..n).map(|c| dataset.of_class(c)).collect();
    for (c, s) in shards.iter().enumerate() {
        if s.is_empty() {
            warn!("class {c} has no samples; client {c} receives an empty shard");
        }
    }
    Ok(shards)
}
