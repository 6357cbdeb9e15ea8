//! The experiment stages as in-memory operations.
//!
//! Nothing here touches the filesystem apart from dataset ingestion; the
//! [`crate::commands`] module wraps these stages with artifact IO.

use std::time::Instant;

use fedunlearn::checkpoint::diff_outside;
use fedunlearn::data::{
    load_csv, load_idx, partition_iid, partition_per_class, LabeledDataset, SyntheticDigits,
};
use fedunlearn::eval::{
    attack_threshold, ce_speedup, class_accuracy, cost_communication, cost_computation,
    cost_storage, de_speedup, measured_storage_fraction, mia_recall, ClassAccuracy,
    CostModelParams, CostScheme, MetricsRecord, Threshold,
};
use fedunlearn::explain::{
    effect_sweep_metered, select, ChannelEffect, InfluentialSet, ProbeSet, Selection,
};
use fedunlearn::fedsim::wire::{self, Payload};
use fedunlearn::fedsim::{train_global_observed, Control, FederationState, RoundReport};
use fedunlearn::nn::ForwardMeter;
use fedunlearn::unlearn::{
    centralized_unlearn, decentralized_unlearn, CentralConfig, Scheme, UnlearningPlan,
    UnlearningRequest,
};
use fedunlearn::{Architecture, Model};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, PartitionMode};
use crate::error::{CliError, Stage, StageContext};

/// Loaded data, client shards and architecture for one experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub shards: Vec<LabeledDataset>,
    pub architecture: Architecture,
}

fn cap(ds: LabeledDataset, count: usize, seed: u64) -> LabeledDataset {
    if count == 0 || count >= ds.len() {
        ds
    } else {
        ds.sample_subset(count, seed)
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let d = &cfg.data;
    let (train, test) = match d.source {
        DataSource::Synthetic => {
            let g = SyntheticDigits::default();
            (
                g.generate(d.train_samples, cfg.stream_seed("data/train")),
                g.generate(d.test_samples, cfg.stream_seed("data/test")),
            )
        }
        DataSource::Idx => {
            let path = |p: &Option<std::path::PathBuf>| p.clone().expect("validated");
            (
                load_idx(&path(&d.train_path), &path(&d.train_labels), d.class_count).stage(Stage::Data)?,
                load_idx(&path(&d.test_path), &path(&d.test_labels), d.class_count).stage(Stage::Data)?,
            )
        }
        DataSource::Csv => {
            let path = |p: &Option<std::path::PathBuf>| p.clone().expect("validated");
            (
                load_csv(&path(&d.train_path), &d.image_shape, d.class_count).stage(Stage::Data)?,
                load_csv(&path(&d.test_path), &d.image_shape, d.class_count).stage(Stage::Data)?,
            )
        }
    };
    let train = cap(train, d.train_samples, cfg.stream_seed("data/train-subset"));
    let test = cap(test, d.test_samples, cfg.stream_seed("data/test-subset"));
    if train.sample_shape() != test.sample_shape() {
        return Err(CliError::Stage {
            stage: Stage::Data,
            source: fedunlearn::Error::Data(format!(
                "train samples are {:?} but test samples are {:?}",
                train.sample_shape(),
                test.sample_shape()
            )),
        });
    }
    let shards = match d.partition {
        PartitionMode::Iid => partition_iid(&train, d.clients, cfg.stream_seed("partition")),
        PartitionMode::PerClass => partition_per_class(&train, d.clients),
    }
    .stage(Stage::Data)?;
    let architecture = cfg.model.architecture(train.sample_shape(), d.class_count)?;
    info!(
        "data: {} training samples over {} clients, {} test samples",
        train.len(),
        shards.len(),
        test.len()
    );
    Ok(Prepared {
        config: cfg.clone(),
        train,
        test,
        shards,
        architecture,
    })
}

impl Prepared {
    pub fn target(&self) -> usize {
        self.config.unlearn.target_class
    }

    /// A federation over the prepared shards. `after_training` continues the
    /// round counter where training stopped, so unlearning rounds draw fresh
    /// participant and shuffle streams.
    pub fn federation(&self, model: Model, after_training: bool) -> Result<FederationState, CliError> {
        let mut fed = FederationState::new(model, self.shards.clone(), self.config.train_config())
            .stage(Stage::Train)?;
        if after_training {
            fed.round = self.config.train.global_epochs;
        }
        Ok(fed)
    }

    pub fn initial_model(&self) -> Result<Model, CliError> {
        Model::init(self.architecture.clone(), self.config.stream_seed("init")).stage(Stage::Train)
    }

    pub fn accuracy(&self, model: &Model) -> fedunlearn::Result<ClassAccuracy> {
        class_accuracy(model, &self.test)
    }
}

/// Federated training of `M*`, one metrics record per round.
pub fn train_model(
    p: &Prepared,
    mut on_round: impl FnMut(&MetricsRecord),
) -> Result<(Model, Vec<MetricsRecord>), CliError> {
    let mut fed = p.federation(p.initial_model()?, false)?;
    let mut records = Vec::new();
    let start = Instant::now();
    let model = train_global_observed(&mut fed, |r, m| {
        let acc = p.accuracy(m)?;
        let rec = MetricsRecord::new(
            "train",
            r.round + 1,
            &acc,
            Some(p.target()),
            (r.bytes_up, r.bytes_down),
            start.elapsed().as_secs_f64(),
        );
        on_round(&rec);
        records.push(rec);
        Ok(Control::Continue)
    })
    .stage(Stage::Train)?;
    Ok((model, records))
}

#[derive(Debug, Clone)]
pub struct Explanation {
    pub baseline_accuracy: f64,
    pub probe_samples: usize,
    pub effects: Vec<ChannelEffect>,
    pub forward_passes: u64,
}

/// Channel effects of `model` on training samples of the target class.
pub fn explain_model(p: &Prepared, model: &Model) -> Result<Explanation, CliError> {
    let e = &p.config.explain;
    let probe = ProbeSet::from_pool(
        model,
        &p.train,
        p.target(),
        e.probe_samples,
        p.config.stream_seed("probe"),
    )
    .stage(Stage::Explain)?;
    let meter = ForwardMeter::new();
    let effects = effect_sweep_metered(model, &probe, e.probe_batch, &meter).stage(Stage::Explain)?;
    Ok(Explanation {
        baseline_accuracy: probe.baseline_accuracy(),
        probe_samples: probe.samples().len(),
        effects,
        forward_passes: meter.count(),
    })
}

pub fn select_channels(
    p: &Prepared,
    model: &Model,
    effects: &[ChannelEffect],
    arm: Selection,
    delta: f64,
) -> Result<InfluentialSet, CliError> {
    select(arm, model, effects, delta, p.config.stream_seed("select")).stage(Stage::Explain)
}

/// Traffic of one unlearning epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTraffic {
    pub epoch: usize,
    pub participants: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

#[derive(Debug, Clone)]
pub struct UnlearnRun {
    pub scheme: Scheme,
    pub model: Model,
    pub influential: InfluentialSet,
    /// Index 0 is the input model, then one record per epoch.
    pub records: Vec<MetricsRecord>,
    pub traffic: Vec<EpochTraffic>,
}

impl UnlearnRun {
    /// Unlearning-class accuracy after each epoch (index 0 = before).
    pub fn unlearning_curve(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.unlearning_class_accuracy.unwrap_or(f64::NAN))
            .collect()
    }

    pub fn remaining_curve(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.remaining_accuracy.unwrap_or(f64::NAN))
            .collect()
    }
}

/// Unlearns the target class from `mstar` by updating only `influential`.
pub fn unlearn_model(
    p: &Prepared,
    mstar: &Model,
    influential: InfluentialSet,
    scheme: Scheme,
    epochs: usize,
) -> Result<UnlearnRun, CliError> {
    let u = &p.config.unlearn;
    let target = p.target();
    let phase = format!("unlearn_{scheme}");
    let plan = UnlearningPlan {
        request: UnlearningRequest {
            target_class: target,
            requested_at_round: p.config.train.global_epochs,
        },
        influential: influential.clone(),
        scheme,
        unlearn_epochs: epochs,
        perturbation_ratio: u.perturbation_ratio,
        learning_rate: match scheme {
            Scheme::Decentralized => u.learning_rate,
            Scheme::Centralized => Some(u.central_learning_rate),
        },
    };

    let start = Instant::now();
    let before = p.accuracy(mstar).stage(Stage::Unlearn)?;
    let mut records = vec![MetricsRecord::new(&phase, 0, &before, Some(target), (0, 0), 0.0)];
    let mut traffic = Vec::new();
    let observer = |r: &RoundReport, m: &Model| -> fedunlearn::Result<Control> {
        let acc = p.accuracy(m)?;
        let rec = MetricsRecord::new(
            &phase,
            records.len(),
            &acc,
            Some(target),
            (r.bytes_up, r.bytes_down),
            start.elapsed().as_secs_f64(),
        );
        info!(
            "{phase} epoch {}: unlearning accuracy {:.4}, remaining {:.4}, {} B up, {} B down",
            rec.index,
            rec.unlearning_class_accuracy.unwrap_or(f64::NAN),
            rec.remaining_accuracy.unwrap_or(f64::NAN),
            r.bytes_up,
            r.bytes_down
        );
        let stop = matches!(
            (u.stop_at_accuracy, rec.unlearning_class_accuracy),
            (Some(limit), Some(a)) if a <= limit
        );
        traffic.push(EpochTraffic {
            epoch: rec.index,
            participants: r.participants.len(),
            bytes_up: r.bytes_up,
            bytes_down: r.bytes_down,
        });
        records.push(rec);
        Ok(if stop { Control::Stop } else { Control::Continue })
    };
    let outcome = match scheme {
        Scheme::Decentralized => {
            let mut fed = p.federation(mstar.clone(), true)?;
            decentralized_unlearn(&mut fed, &plan, observer)
        }
        Scheme::Centralized => {
            let server = server_data(p);
            let cfg = CentralConfig {
                learning_rate: u.central_learning_rate,
                batch_size: u.central_batch_size,
                seed: p.config.stream_seed("central"),
            };
            centralized_unlearn(mstar, &server, &plan, &cfg, observer)
        }
    }
    .stage(Stage::Unlearn)?;
    Ok(UnlearnRun {
        scheme,
        model: outcome.model,
        influential,
        records,
        traffic,
    })
}

/// The training samples the server keeps for centralized unlearning.
pub fn server_data(p: &Prepared) -> LabeledDataset {
    cap(
        p.train.clone(),
        p.config.unlearn.server_samples,
        p.config.stream_seed("server"),
    )
}

/// Bytes of one full-model round: every participant downloads and uploads
/// all channels.
pub fn full_round_bytes(model: &Model, participants: usize) -> fedunlearn::Result<u64> {
    let payload = wire::encode(&Payload::broadcast(model, &model.channels())?)?;
    Ok(2 * participants as u64 * payload.len() as u64)
}

/// Body bytes of `after` that differ from `before` outside `influential`.
pub fn bytes_changed_outside(before: &Model, after: &Model, influential: &InfluentialSet) -> usize {
    diff_outside(before, after, &influential.channels()).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub overall: f64,
    pub unlearning: Option<f64>,
    pub remaining: Option<f64>,
    pub per_class: Vec<Option<f64>>,
}

pub fn model_report(p: &Prepared, model: &Model) -> fedunlearn::Result<ModelReport> {
    let acc = p.accuracy(model)?;
    Ok(ModelReport {
        overall: acc.overall(),
        unlearning: acc.class(p.target()),
        remaining: acc.remaining(p.target()),
        per_class: acc.per_class(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub threshold_rule: String,
    pub tau: f64,
    /// Training samples of the target class under attack.
    pub members: usize,
    pub recall: f64,
}

/// Loss-threshold membership inference against the training samples of the
/// target class. τ is chosen for `model` from reference training and test
/// samples of the other classes.
pub fn attack_model(p: &Prepared, model: &Model) -> fedunlearn::Result<AttackReport> {
    let target = p.target();
    let cfg = &p.config.attack;
    let members = p.train.of_class(target);
    let reference_members = p
        .train
        .filter(|y| y != target)
        .sample_subset(cfg.calibration_samples, p.config.stream_seed("attack/members"));
    let reference_nonmembers = p
        .test
        .filter(|y| y != target)
        .sample_subset(cfg.calibration_samples, p.config.stream_seed("attack/nonmembers"));
    let tau = attack_threshold(model, cfg, &reference_members, &reference_nonmembers)?;
    let recall = mia_recall(model, &members, tau)?;
    Ok(AttackReport {
        threshold_rule: match cfg.threshold {
            Threshold::Fixed(_) => "fixed",
            Threshold::MeanTrainingLoss => "mean_training_loss",
            Threshold::Calibrated => "calibrated",
        }
        .into(),
        tau,
        members: members.len(),
        recall,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeCosts {
    pub retrain: f64,
    pub decentralized: f64,
    pub centralized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: CostModelParams<f64>,
    pub computation: SchemeCosts,
    pub communication: SchemeCosts,
    pub storage: SchemeCosts,
    pub de_speedup: f64,
    pub ce_speedup: f64,
    /// Server samples over training samples.
    pub measured_storage_fraction: f64,
}

/// Analytic costs with `n` = client count, `δ` from the config and unit
/// `f`, `c`, `s`, `g = 0`.
pub fn cost_report(cfg: &ExperimentConfig, training_samples: usize) -> Result<CostReport, CliError> {
    let params = CostModelParams {
        n: cfg.data.clients as f64,
        delta: cfg.explain.delta,
        class_count: cfg.data.class_count as f64,
        ..Default::default()
    };
    params.validate().stage(Stage::Costs)?;
    let per = |f: fn(&CostModelParams<f64>, CostScheme) -> f64| SchemeCosts {
        retrain: f(&params, CostScheme::Retrain),
        decentralized: f(&params, CostScheme::Decentralized),
        centralized: f(&params, CostScheme::Centralized),
    };
    Ok(CostReport {
        computation: per(cost_computation),
        communication: per(cost_communication),
        storage: per(cost_storage),
        de_speedup: de_speedup(params.delta),
        ce_speedup: ce_speedup(&params),
        measured_storage_fraction: measured_storage_fraction(
            cfg.unlearn.server_samples.min(training_samples),
            training_samples,
        ),
        params,
    })
}
