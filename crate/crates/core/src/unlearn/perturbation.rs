use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Deleted inputs relabeled with uniformly drawn wrong labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    samples: LabeledDataset,
    target: usize,
}

impl PerturbationSet {
    pub fn samples(&self) -> &LabeledDataset {
        &self.samples
    }

    pub fn source_count(&self) -> usize {
        self.samples.len()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One perturbed copy of every removed sample, labels uniform over
/// `Y \ {y_u}`. Labels are drawn once, so repeated epochs see the same ones.
pub fn make_perturbation_set(
    removed: &LabeledDataset,
    y_u: usize,
    class_count: usize,
    seed: u64,
) -> Result<PerturbationSet> {
    if class_count < 2 {
        return Err(Error::config("perturbation needs at least two classes"));
    }
    if y_u >= class_count {
        return Err(Error::Input(format!("class {y_u} outside [0, {class_count})")));
    }
    if removed.labels().iter().any(|&y| y != y_u) {
        return Err(Error::Input(format!(
            "perturbation source must contain only class {y_u}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..removed.len())
        .map(|_| {
            let r = rng.random_range(0..class_count - 1);
            r + usize::from(r >= y_u)
        })
        .collect();
    let samples = LabeledDataset::from_parts(
        removed.sample_shape().to_vec(),
        class_count,
        removed.inputs().to_vec(),
        labels,
    )?;
    Ok(PerturbationSet { samples, target: y_u })
}
