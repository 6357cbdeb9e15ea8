use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PerturbationSet;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::fedsim::{shuffled_order, SampleStream};

use crate::seed::derive_seed;

/// Remaining data interleaved with perturbation samples.
///
/// Every epoch contains all remaining samples plus
/// `round(ratio·R / (1 − ratio))` perturbation samples, taken cyclically
/// from a fixed shuffled order so that successive epochs cover the whole
/// perturbation set. `ratio = 1` yields every perturbation sample and no
/// remaining data. The combined list is shuffled per epoch exactly like
/// plain local data, so `ratio = 0` reproduces an ordinary client stream.
#[derive(Debug, Clone)]
pub struct MixedStream {
    data: LabeledDataset,
    remaining_len: usize,
    perturbation_order: Vec<usize>,
    per_epoch: usize,
    include_remaining: bool,
    seed: u64,
}

pub fn mix_batches(
    remaining: &LabeledDataset,
    perturbation: &PerturbationSet,
    ratio: f64,
    seed: u64,
) -> Result<MixedStream> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config(format!("mixing ratio must lie in [0, 1], got {ratio}")));
    }
    if remaining.is_empty() && ratio < 1.0 {
        return Err(Error::data("no remaining data to mix at ratio below 1"));
    }
    if perturbation.is_empty() && ratio > 0.0 {
        return Err(Error::data("no perturbation data to mix at ratio above 0"));
    }
    let r = remaining.len();
    let p = perturbation.len();
    let per_epoch = if ratio >= 1.0 {
        p
    } else {
        (ratio * r as f64 / (1.0 - ratio)).round() as usize
    };
    let mut data = remaining.clone();
    if data.is_empty() {
        data = perturbation.samples().empty_like();
    }
    data.extend(perturbation.samples())?;
    let mut perturbation_order: Vec<usize> = (r..r + p).collect();
    perturbation_order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        "perturbation-order",
    )));
    Ok(MixedStream {
        data,
        remaining_len: r,
        perturbation_order,
        per_epoch,
        include_remaining: ratio < 1.0,
        seed,
    })
}

impl MixedStream {
    /// Perturbation samples visited per epoch.
    pub fn perturbation_per_epoch(&self) -> usize {
        self.per_epoch
    }

    pub fn is_perturbation(&self, index: usize) -> bool {
        index >= self.remaining_len
    }
}

impl SampleStream for MixedStream {
    fn data(&self) -> &LabeledDataset {
        &self.data
    }

    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut list: Vec<usize> = if self.include_remaining {
            (0..self.remaining_len).collect()
        } else {
            Vec::new()
        };
        let p = self.perturbation_order.len();
        if p > 0 {
            let start = epoch * self.per_epoch;
            list.extend((0..self.per_epoch).map(|j| self.perturbation_order[(start + j) % p]));
        }
        shuffled_order(list, self.seed, epoch)
    }
}
