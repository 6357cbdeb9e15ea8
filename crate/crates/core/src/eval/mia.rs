use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{sample_loss, Compiled, Model, Workspace};

/// How the loss threshold τ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Fixed(f64),
    /// Mean loss of the attacked model on reference training members.
    MeanTrainingLoss,
    /// Maximise balanced accuracy on a held-out member/non-member split.
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub threshold: Threshold,
    /// Calibration samples drawn per side (members and non-members).
    pub calibration_samples: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::MeanTrainingLoss,
            calibration_samples: 1000,
        }
    }
}

/// Cross-entropy loss of every sample.
pub fn sample_losses(model: &Model, dataset: &LabeledDataset) -> Vec<f64> {
    let compiled = Compiled::new(model);
    let mut ws = Workspace::new(model);
    dataset
        .iter()
        .map(|(x, y)| {
            compiled.run(&mut ws, x);
            sample_loss(ws.logits(), y)
        })
        .collect()
}

/// Fraction of `losses` strictly below `tau`.
pub fn mia_recall_at(losses: &[f64], tau: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Metric("membership recall of an empty member set".into()));
    }
    if tau.is_nan() {
        return Err(Error::config("loss threshold is NaN"));
    }
    Ok(losses.iter().filter(|&&l| l < tau).count() as f64 / losses.len() as f64)
}

/// Recall `TP / (TP + FN)` of the loss-threshold attack on known members:
/// a sample is flagged as a member iff its loss is below `tau`.
pub fn mia_recall(model: &Model, members: &LabeledDataset, tau: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Metric("membership recall of an empty member set".into()));
    }
    mia_recall_at(&sample_losses(model, members), tau)
}

/// Chooses τ for `model`. `members` and `nonmembers` are reference samples
/// disjoint from the ones under attack; only `Calibrated` uses `nonmembers`.
pub fn attack_threshold(
    model: &Model,
    cfg: &AttackConfig,
    members: &LabeledDataset,
    nonmembers: &LabeledDataset,
) -> Result<f64> {
    match cfg.threshold {
        Threshold::Fixed(t) => {
            if t.is_nan() {
                return Err(Error::config("loss threshold is NaN"));
            }
            Ok(t)
        }
        Threshold::MeanTrainingLoss => mean_loss_threshold(&sample_losses(model, members)),
        Threshold::Calibrated => calibrate_threshold(
            &sample_losses(model, members),
            &sample_losses(model, nonmembers),
        ),
    }
}

/// Average of the member losses; samples scoring below it are flagged.
pub fn mean_loss_threshold(member_losses: &[f64]) -> Result<f64> {
    if member_losses.is_empty() {
        return Err(Error::Metric("threshold needs reference members".into()));
    }
    let mean = member_losses.iter().sum::<f64>() / member_losses.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Metric("non-finite mean training loss".into()));
    }
    Ok(mean)
}

/// Threshold maximising `TPR − FPR` over midpoints between consecutive
/// distinct losses (plus both extremes). Ties keep the smallest threshold.
pub fn calibrate_threshold(member_losses: &[f64], nonmember_losses: &[f64]) -> Result<f64> {
    if member_losses.is_empty() || nonmember_losses.is_empty() {
        return Err(Error::Metric("calibration needs members and non-members".into()));
    }
    let mut all: Vec<(f64, bool)> = member_losses
        .iter()
        .map(|&l| (l, true))
        .chain(nonmember_losses.iter().map(|&l| (l, false)))
        .collect();
    if all.iter().any(|(l, _)| !l.is_finite()) {
        return Err(Error::Metric("non-finite loss during calibration".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (m, n) = (member_losses.len() as f64, nonmember_losses.len() as f64);
    // τ below everything flags nothing.
    let mut best_tau = all[0].0;
    let mut best = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let value = all[i].0;
        while i < all.len() && all[i].0 == value {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tau = if i < all.len() {
            value + (all[i].0 - value) / 2.0
        } else {
            value + value.abs().max(1.0)
        };
        let score = tp as f64 / m - fp as f64 / n;
        if score > best {
            best = score;
            best_tau = tau;
        }
    }
    Ok(best_tau)
}
