use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{argmax, Compiled, Model, Workspace};

/// Top-1 accuracy per class and overall.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub correct: Vec<usize>,
    pub counts: Vec<usize>,
}

impl ClassAccuracy {
    /// `None` for classes absent from the evaluation data.
    pub fn class(&self, c: usize) -> Option<f64> {
        (self.counts[c] > 0).then(|| self.correct[c] as f64 / self.counts[c] as f64)
    }

    pub fn per_class(&self) -> Vec<Option<f64>> {
        (0..self.counts.len()).map(|c| self.class(c)).collect()
    }

    pub fn overall(&self) -> f64 {
        let total: usize = self.counts.iter().sum();
        self.correct.iter().sum::<usize>() as f64 / total as f64
    }

    /// Unweighted mean of the defined per-class accuracies except `excluded`.
    pub fn remaining(&self, excluded: usize) -> Option<f64> {
        let accs: Vec<f64> = (0..self.counts.len())
            .filter(|&c| c != excluded)
            .filter_map(|c| self.class(c))
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }
}

pub fn predictions(model: &Model, dataset: &LabeledDataset) -> Vec<usize> {
    let compiled = Compiled::new(model);
    let mut ws = Workspace::new(model);
    dataset
        .iter()
        .map(|(x, _)| {
            compiled.run(&mut ws, x);
            argmax(ws.logits())
        })
        .collect()
}

pub fn class_accuracy(model: &Model, dataset: &LabeledDataset) -> Result<ClassAccuracy> {
    if dataset.is_empty() {
        return Err(Error::Metric("accuracy of an empty dataset".into()));
    }
    if dataset.sample_len() != model.input_len() || dataset.class_count() != model.class_count() {
        return Err(Error::dim("dataset layout does not match the model"));
    }
    let classes = model.class_count();
    let mut correct = vec![0; classes];
    let mut counts = vec![0; classes];
    for (p, &y) in predictions(model, dataset).iter().zip(dataset.labels()) {
        counts[y] += 1;
        if *p == y {
            correct[y] += 1;
        }
    }
    Ok(ClassAccuracy { correct, counts })
}

/// `m[true][predicted]` counts.
pub fn confusion_matrix(model: &Model, dataset: &LabeledDataset) -> Vec<Vec<usize>> {
    let classes = model.class_count();
    let mut m = vec![vec![0; classes]; classes];
    for (p, &y) in predictions(model, dataset).iter().zip(dataset.labels()) {
        m[y][*p] += 1;
    }
    m
}
