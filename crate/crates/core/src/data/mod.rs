//! Labeled datasets, client partitioning, file ingestion and the procedural
//! digit generator used for desk-scale experiments.

mod ingest;
mod partition;
mod synth;

pub use ingest::{load_csv, load_idx, parse_idx_images, parse_idx_labels, write_csv, write_idx};
pub use partition::{partition_iid, partition_per_class};
pub use synth::SyntheticDigits;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Samples stored contiguously; `sample(i)` yields a borrowed view.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    sample_shape: Vec<usize>,
    class_count: usize,
    inputs: Vec<f32>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(sample_shape: Vec<usize>, class_count: usize) -> Self {
        Self {
            sample_shape,
            class_count,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_parts(
        sample_shape: Vec<usize>,
        class_count: usize,
        inputs: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || inputs.len() != per * labels.len() {
            return Err(Error::dim(format!(
                "{} input values do not form {} samples of shape {sample_shape:?}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Input(format!("label {bad} outside [0, {class_count})")));
        }
        Ok(Self {
            sample_shape,
            class_count,
            inputs,
            labels,
        })
    }

    pub fn push(&mut self, x: &[f32], y: usize) -> Result<()> {
        if x.len() != self.sample_len() {
            return Err(Error::dim(format!(
                "sample has {} values, dataset expects {}",
                x.len(),
                self.sample_len()
            )));
        }
        if y >= self.class_count {
            return Err(Error::Input(format!(
                "label {y} outside [0, {})",
                self.class_count
            )));
        }
        self.inputs.extend_from_slice(x);
        self.labels.push(y);
        Ok(())
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f32], usize)> + '_ {
        self.inputs
            .chunks(self.sample_len())
            .zip(self.labels.iter().copied())
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    /// Empty dataset with the same sample shape and label space.
    pub fn empty_like(&self) -> Self {
        Self::new(self.sample_shape.clone(), self.class_count)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = self.empty_like();
        let n = self.sample_len();
        out.inputs.reserve(indices.len() * n);
        for &i in indices {
            out.inputs.extend_from_slice(self.input(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.labels[i])).collect();
        self.subset(&idx)
    }

    pub fn of_class(&self, class: usize) -> Self {
        self.filter(|y| y == class)
    }

    pub fn extend(&mut self, other: &LabeledDataset) -> Result<()> {
        if other.sample_shape != self.sample_shape || other.class_count != self.class_count {
            return Err(Error::dim("cannot concatenate datasets of different layouts"));
        }
        self.inputs.extend_from_slice(&other.inputs);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    /// Seeded shuffle, then the first `count` samples (all when `count >= len`).
    pub fn sample_subset(&self, count: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(count);
        self.subset(&idx)
    }

    /// Splits off the first `count` samples of a seeded shuffle; returns (taken, rest).
    pub fn split(&self, count: usize, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let count = count.min(idx.len());
        let (a, b) = idx.split_at(count);
        (self.subset(a), self.subset(b))
    }
}
