use serde::{Deserialize, Serialize};

use super::{
    delete_class, holder_ratio, make_perturbation_set, mix_batches, Scheme, UnlearnOutcome,
    UnlearningPlan,
};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::fedsim::{Control, RoundReport, SampleStream};
use crate::nn::{batch_gradient, Model};
use crate::seed::derive_seed;

/// Server-side fine-tuning settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CentralConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Unlearning on the server alone: fine-tune `T` on the server's remaining
/// data mixed with perturbation samples made from its copies of the target
/// class. No client is contacted, so every epoch reports zero traffic.
pub fn centralized_unlearn(
    model: &Model,
    server_data: &LabeledDataset,
    plan: &UnlearningPlan,
    cfg: &CentralConfig,
    mut observer: impl FnMut(&RoundReport, &Model) -> Result<Control>,
) -> Result<UnlearnOutcome> {
    plan.check(model, Scheme::Centralized)?;
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size must be at least 1"));
    }
    let y_u = plan.request.target_class;
    let (remaining, removed) = delete_class(server_data, y_u);
    if removed.is_empty() && plan.perturbation_ratio.is_none_or(|r| r > 0.0) {
        return Err(Error::data(format!(
            "server data holds no samples of class {y_u} to build perturbation data from"
        )));
    }
    let lr = plan.learning_rate.unwrap_or(cfg.learning_rate);
    let perturbation = make_perturbation_set(
        &removed,
        y_u,
        model.class_count(),
        derive_seed(cfg.seed, &format!("perturbation/{y_u}")),
    )?;
    let ratio = holder_ratio(plan.perturbation_ratio, remaining.len(), removed.len());
    let stream = mix_batches(&remaining, &perturbation, ratio, derive_seed(cfg.seed, "central"))?;
    let data = stream.data();

    let channels = plan.influential.channels();
    let mut working = model.clone();
    working.train_only(&channels)?;
    let mut current = model.clone();
    let mut epochs = Vec::with_capacity(plan.unlearn_epochs);
    for epoch in 0..plan.unlearn_epochs {
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for chunk in stream.epoch_order(epoch).chunks(cfg.batch_size) {
            let xs: Vec<&[f32]> = chunk.iter().map(|&i| data.input(i)).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
            let (loss, grads) = batch_gradient(&working, &xs, &ys)?;
            working.sgd_step(&grads, lr)?;
            loss_sum += loss;
            steps += 1;
        }
        // Report with the input model's masks so only T's parameters differ.
        for &ch in &channels {
            current.set_channel_values(ch, &working.channel_values(ch)?)?;
        }
        let report = RoundReport {
            round: epoch,
            participants: Vec::new(),
            bytes_up: 0,
            bytes_down: 0,
            mean_loss: (steps > 0).then(|| loss_sum / steps as f64),
        };
        let stop = observer(&report, &current)? == Control::Stop;
        epochs.push(report);
        if stop {
            break;
        }
    }
    Ok(UnlearnOutcome {
        model: current,
        epochs,
    })
}
