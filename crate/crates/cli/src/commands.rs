//! Stages with artifact IO. Each stage reads what earlier stages wrote to the
//! output directory, so any stage can be rerun on its own.
//!
//! | stage | reads | writes |
//! |---|---|---|
//! | train | config | `model.ffgt`, `metrics_train.csv`, `timings_train.json` |
//! | explain | `model.ffgt` | `effects.csv`, `influential.json`, `explain.json` |
//! | unlearn | `model.ffgt`, `effects.csv` | `unlearned.ffgt`, `metrics_unlearn.csv`, `timings_unlearn.json`, `unlearn.json` |
//! | eval | `model.ffgt`, optionally `unlearned.ffgt` and `unlearn.json` | `eval.json` |
//! | attack | `model.ffgt`, optionally `unlearned.ffgt` | `attack.json` |
//! | costs | config, optionally `unlearn.json` | `costs.json` |
//!
//! Every command also writes `config.toml` (the exact config bytes) and
//! refreshes `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use fedunlearn::checkpoint;
use fedunlearn::eval::{write_metrics_csv, write_timings_json, MetricsRecord};
use fedunlearn::explain::{write_effects_csv, ChannelEffect, InfluentialSet, Selection};
use fedunlearn::unlearn::Scheme;
use fedunlearn::{ChannelId, Model};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;
use crate::error::{CliError, Stage, StageContext};
use crate::manifest::{self, RunManifest, RunStatus};
use crate::pipeline::{self, AttackReport, CostReport, EpochTraffic, Explanation, ModelReport, Prepared};

pub const CONFIG_FILE: &str = "config.toml";
pub const MODEL_FILE: &str = "model.ffgt";
pub const TRAIN_METRICS_FILE: &str = "metrics_train.csv";
pub const TRAIN_TIMINGS_FILE: &str = "timings_train.json";
pub const EFFECTS_FILE: &str = "effects.csv";
pub const INFLUENTIAL_FILE: &str = "influential.json";
pub const EXPLAIN_FILE: &str = "explain.json";
pub const UNLEARNED_FILE: &str = "unlearned.ffgt";
pub const UNLEARN_METRICS_FILE: &str = "metrics_unlearn.csv";
pub const UNLEARN_TIMINGS_FILE: &str = "timings_unlearn.json";
pub const UNLEARN_FILE: &str = "unlearn.json";
pub const EVAL_FILE: &str = "eval.json";
pub const ATTACK_FILE: &str = "attack.json";
pub const COSTS_FILE: &str = "costs.json";

/// Files a run may produce; a full pipeline run clears them first.
pub const ARTIFACT_FILES: &[&str] = &[
    CONFIG_FILE,
    MODEL_FILE,
    TRAIN_METRICS_FILE,
    TRAIN_TIMINGS_FILE,
    EFFECTS_FILE,
    INFLUENTIAL_FILE,
    EXPLAIN_FILE,
    UNLEARNED_FILE,
    UNLEARN_METRICS_FILE,
    UNLEARN_TIMINGS_FILE,
    UNLEARN_FILE,
    EVAL_FILE,
    ATTACK_FILE,
    COSTS_FILE,
    manifest::MANIFEST_FILE,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRecord {
    pub target_class: usize,
    pub probe_samples: usize,
    pub baseline_accuracy: f64,
    pub forward_passes: u64,
    pub selection: Selection,
    pub delta: f64,
    pub selected_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnRecord {
    pub scheme: Scheme,
    pub selection: Selection,
    pub delta: f64,
    pub target_class: usize,
    pub epochs_requested: usize,
    pub epochs_run: usize,
    pub influential: InfluentialSet,
    pub traffic: Vec<EpochTraffic>,
    /// Bytes a full-model round would move with the same participants.
    pub full_round_bytes: u64,
    pub channels_in_t: usize,
    /// Checkpoint body bytes changed outside `T`; zero by construction.
    pub bytes_changed_outside_t: usize,
}

impl UnlearnRecord {
    pub fn bytes(&self) -> (u64, u64) {
        self.traffic
            .iter()
            .fold((0, 0), |(u, d), t| (u + t.bytes_up, d + t.bytes_down))
    }

    /// Unlearning traffic over the traffic of as many full-model rounds.
    pub fn traffic_ratio(&self) -> Option<f64> {
        let full = self.full_round_bytes * self.traffic.len() as u64;
        let (up, down) = self.bytes();
        (full > 0).then(|| (up + down) as f64 / full as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSummary {
    pub scheme: Scheme,
    pub epochs: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub full_round_bytes: u64,
    pub ratio_to_full_rounds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub target_class: usize,
    pub original: ModelReport,
    pub unlearned: Option<ModelReport>,
    pub attack_original: AttackReport,
    pub attack_unlearned: Option<AttackReport>,
    pub traffic: Option<TrafficSummary>,
    pub bytes_changed_outside_t: Option<usize>,
    pub costs: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub original: AttackReport,
    pub unlearned: Option<AttackReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostsRecord {
    pub model: CostReport,
    pub measured: Option<TrafficSummary>,
}

fn write_json<T: Serialize>(path: &Path, value: &T, stage: Stage) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("records serialize");
    fs::write(path, text + "\n").stage(stage)
}

fn read_json<T: DeserializeOwned>(path: &Path, stage: Stage) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Artifact {
        stage,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Artifact {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

/// Parses the effects CSV written by the explain stage.
pub fn read_effects_csv(path: &Path) -> Result<Vec<ChannelEffect>, CliError> {
    let bad = |message: String| CliError::Artifact {
        stage: Stage::Unlearn,
        message,
    };
    let text = fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read {} (run `explain` first): {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (f.len() == 4)
            .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?)))
            .flatten();
        let (layer, channel, effect) =
            parsed.ok_or_else(|| bad(format!("{}:{}: malformed row", path.display(), i + 1)))?;
        out.push(ChannelEffect {
            channel: ChannelId::new(layer, channel),
            effect,
        });
    }
    Ok(out)
}

/// One invocation against an output directory.
pub struct Session {
    pub loaded: LoadedConfig,
    pub out: PathBuf,
    started_at: String,
    prepared: Option<Prepared>,
    stages: Vec<String>,
}

impl Session {
    pub fn open(loaded: LoadedConfig) -> Result<Self, CliError> {
        let out = loaded.config.output_dir.clone();
        fs::create_dir_all(&out)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", out.display())))?;
        let stages = match manifest::read_manifest(&out) {
            Some(m) if m.config_sha256 == loaded.sha256() => m.stages,
            Some(_) => {
                warn!(
                    "{} holds artifacts of a different config; earlier stages will be rerun as needed",
                    out.display()
                );
                Vec::new()
            }
            None => Vec::new(),
        };
        fs::write(out.join(CONFIG_FILE), &loaded.bytes)
            .map_err(|e| CliError::config(format!("cannot write config copy: {e}")))?;
        Ok(Self {
            loaded,
            out,
            started_at: manifest::now(),
            prepared: None,
            stages,
        })
    }

    /// Removes every artifact a previous run may have left behind.
    fn clear(&mut self) -> Result<(), CliError> {
        for name in ARTIFACT_FILES.iter().filter(|&&n| n != CONFIG_FILE) {
            let path = self.out.join(name);
            if path.exists() {
                fs::remove_file(&path)
                    .map_err(|e| CliError::config(format!("cannot clear {}: {e}", path.display())))?;
            }
        }
        self.stages.clear();
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn prepared(&mut self) -> Result<&Prepared, CliError> {
        if self.prepared.is_none() {
            self.prepared = Some(pipeline::prepare(&self.loaded.config)?);
        }
        Ok(self.prepared.as_ref().expect("just prepared"))
    }

    fn load_model(&self, name: &str, stage: Stage) -> Result<Model, CliError> {
        let path = self.path(name);
        if !path.exists() {
            return Err(CliError::Artifact {
                stage,
                message: format!("{} is missing; run the earlier stages first", path.display()),
            });
        }
        checkpoint::load(&path).stage(stage)
    }

    fn done(&mut self, stage: Stage) {
        let name = stage.name().to_string();
        self.stages.retain(|s| *s != name);
        self.stages.push(name);
    }

    pub fn write_manifest(&self, failure: Option<&CliError>) -> Result<RunManifest, CliError> {
        let artifacts = manifest::scan_artifacts(&self.out)
            .map_err(|e| CliError::config(format!("cannot scan {}: {e}", self.out.display())))?;
        let m = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.loaded.sha256(),
            started_at: self.started_at.clone(),
            finished_at: manifest::now(),
            status: if failure.is_some() {
                RunStatus::Failed
            } else {
                RunStatus::Complete
            },
            stages: self.stages.clone(),
            failed_stage: failure.and_then(|e| e.stage()).map(|s| s.name().to_string()),
            error: failure.map(|e| e.to_string()),
            artifacts,
        };
        manifest::write_manifest(&self.out, &m)
            .map_err(|e| CliError::config(format!("cannot write manifest: {e}")))?;
        Ok(m)
    }

    pub fn train(&mut self) -> Result<Vec<MetricsRecord>, CliError> {
        let p = self.prepared()?.clone();
        let (model, records) = pipeline::train_model(&p, |r| {
            info!(
                "round {}: test accuracy {:.4} ({} B up, {} B down)",
                r.index, r.overall_accuracy, r.bytes_up, r.bytes_down
            );
        })?;
        checkpoint::save(&model, &self.path(MODEL_FILE)).stage(Stage::Train)?;
        write_metrics_csv(&self.path(TRAIN_METRICS_FILE), &records, p.architecture.class_count())
            .stage(Stage::Train)?;
        write_timings_json(&self.path(TRAIN_TIMINGS_FILE), &records).stage(Stage::Train)?;
        self.done(Stage::Train);
        Ok(records)
    }

    pub fn explain(&mut self) -> Result<(ExplainRecord, Explanation, InfluentialSet), CliError> {
        let model = self.load_model(MODEL_FILE, Stage::Explain)?;
        let p = self.prepared()?.clone();
        let e = &p.config.explain;
        let explanation = pipeline::explain_model(&p, &model)?;
        let set = pipeline::select_channels(&p, &model, &explanation.effects, e.selection, e.delta)?;
        write_effects_csv(&self.path(EFFECTS_FILE), &explanation.effects, &set).stage(Stage::Explain)?;
        fs::write(self.path(INFLUENTIAL_FILE), set.to_json() + "\n").stage(Stage::Explain)?;
        let record = ExplainRecord {
            target_class: p.target(),
            probe_samples: explanation.probe_samples,
            baseline_accuracy: explanation.baseline_accuracy,
            forward_passes: explanation.forward_passes,
            selection: e.selection,
            delta: e.delta,
            selected_channels: set.len(),
        };
        write_json(&self.path(EXPLAIN_FILE), &record, Stage::Explain)?;
        self.done(Stage::Explain);
        Ok((record, explanation, set))
    }

    pub fn unlearn(
        &mut self,
        scheme: Option<Scheme>,
        selection: Option<Selection>,
    ) -> Result<(UnlearnRecord, pipeline::UnlearnRun), CliError> {
        let mstar = self.load_model(MODEL_FILE, Stage::Unlearn)?;
        let effects = read_effects_csv(&self.path(EFFECTS_FILE))?;
        let p = self.prepared()?.clone();
        let u = &p.config.unlearn;
        let scheme = scheme.unwrap_or(u.scheme);
        let selection = selection.unwrap_or(p.config.explain.selection);
        let set = pipeline::select_channels(&p, &mstar, &effects, selection, p.config.explain.delta)?;
        let run = pipeline::unlearn_model(&p, &mstar, set.clone(), scheme, u.epochs)?;

        checkpoint::save(&run.model, &self.path(UNLEARNED_FILE)).stage(Stage::Unlearn)?;
        write_metrics_csv(&self.path(UNLEARN_METRICS_FILE), &run.records, p.architecture.class_count())
            .stage(Stage::Unlearn)?;
        write_timings_json(&self.path(UNLEARN_TIMINGS_FILE), &run.records).stage(Stage::Unlearn)?;
        let participants = run.traffic.first().map_or(0, |t| t.participants);
        let record = UnlearnRecord {
            scheme,
            selection,
            delta: p.config.explain.delta,
            target_class: p.target(),
            epochs_requested: u.epochs,
            epochs_run: run.traffic.len(),
            channels_in_t: set.len(),
            influential: set,
            traffic: run.traffic.clone(),
            full_round_bytes: pipeline::full_round_bytes(&mstar, participants).stage(Stage::Unlearn)?,
            bytes_changed_outside_t: pipeline::bytes_changed_outside(&mstar, &run.model, &run.influential),
        };
        write_json(&self.path(UNLEARN_FILE), &record, Stage::Unlearn)?;
        self.done(Stage::Unlearn);
        Ok((record, run))
    }

    fn unlearned_if_present(&self, stage: Stage) -> Result<Option<Model>, CliError> {
        if self.path(UNLEARNED_FILE).exists() {
            self.load_model(UNLEARNED_FILE, stage).map(Some)
        } else {
            Ok(None)
        }
    }

    fn unlearn_record(&self, stage: Stage) -> Result<Option<UnlearnRecord>, CliError> {
        let path = self.path(UNLEARN_FILE);
        if path.exists() {
            read_json(&path, stage).map(Some)
        } else {
            Ok(None)
        }
    }

    fn traffic_summary(record: &UnlearnRecord) -> TrafficSummary {
        let (bytes_up, bytes_down) = record.bytes();
        TrafficSummary {
            scheme: record.scheme,
            epochs: record.epochs_run,
            bytes_up,
            bytes_down,
            full_round_bytes: record.full_round_bytes,
            ratio_to_full_rounds: record.traffic_ratio(),
        }
    }

    pub fn eval(&mut self) -> Result<EvalRecord, CliError> {
        let mstar = self.load_model(MODEL_FILE, Stage::Eval)?;
        let unlearned = self.unlearned_if_present(Stage::Eval)?;
        let record = self.unlearn_record(Stage::Eval)?;
        let p = self.prepared()?.clone();
        let report = EvalRecord {
            target_class: p.target(),
            original: pipeline::model_report(&p, &mstar).stage(Stage::Eval)?,
            unlearned: unlearned
                .as_ref()
                .map(|m| pipeline::model_report(&p, m))
                .transpose()
                .stage(Stage::Eval)?,
            attack_original: pipeline::attack_model(&p, &mstar).stage(Stage::Eval)?,
            attack_unlearned: unlearned
                .as_ref()
                .map(|m| pipeline::attack_model(&p, m))
                .transpose()
                .stage(Stage::Eval)?,
            traffic: record.as_ref().map(Self::traffic_summary),
            bytes_changed_outside_t: match (&unlearned, &record) {
                (Some(m), Some(r)) => Some(pipeline::bytes_changed_outside(&mstar, m, &r.influential)),
                _ => None,
            },
            costs: pipeline::cost_report(&p.config, p.train.len())?,
        };
        write_json(&self.path(EVAL_FILE), &report, Stage::Eval)?;
        self.done(Stage::Eval);
        Ok(report)
    }

    pub fn attack(&mut self) -> Result<AttackRecord, CliError> {
        let mstar = self.load_model(MODEL_FILE, Stage::Attack)?;
        let unlearned = self.unlearned_if_present(Stage::Attack)?;
        let p = self.prepared()?.clone();
        let record = AttackRecord {
            original: pipeline::attack_model(&p, &mstar).stage(Stage::Attack)?,
            unlearned: unlearned
                .as_ref()
                .map(|m| pipeline::attack_model(&p, m))
                .transpose()
                .stage(Stage::Attack)?,
        };
        write_json(&self.path(ATTACK_FILE), &record, Stage::Attack)?;
        self.done(Stage::Attack);
        Ok(record)
    }

    /// Analytic costs; needs no data unless the server share must be
    /// measured against a file-backed training set.
    pub fn costs(&mut self) -> Result<CostsRecord, CliError> {
        let cfg = self.loaded.config.clone();
        let training_samples = match cfg.data.source {
            crate::config::DataSource::Synthetic => cfg.data.train_samples,
            _ => self.prepared()?.train.len(),
        };
        let record = CostsRecord {
            model: pipeline::cost_report(&cfg, training_samples)?,
            measured: self.unlearn_record(Stage::Costs)?.as_ref().map(Self::traffic_summary),
        };
        write_json(&self.path(COSTS_FILE), &record, Stage::Costs)?;
        self.done(Stage::Costs);
        Ok(record)
    }
}

/// Everything the `run` command reports.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub manifest: RunManifest,
    pub train: Vec<MetricsRecord>,
    pub explain: Option<ExplainRecord>,
    pub unlearn: Option<UnlearnRecord>,
    pub unlearn_records: Vec<MetricsRecord>,
    pub eval: Option<EvalRecord>,
}

/// A failed run: the error plus the partial manifest already written.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: CliError,
    pub manifest: Option<RunManifest>,
}

/// train → explain → unlearn → eval into a cleared output directory. With
/// unlearning disabled only the training stage runs.
pub fn run_pipeline(loaded: LoadedConfig) -> Result<PipelineOutcome, PipelineFailure> {
    let mut session = Session::open(loaded).map_err(|error| PipelineFailure { error, manifest: None })?;
    let result = run_stages(&mut session);
    match result {
        Ok(mut outcome) => {
            let manifest = session
                .write_manifest(None)
                .map_err(|error| PipelineFailure { error, manifest: None })?;
            outcome.manifest = manifest;
            Ok(outcome)
        }
        Err(error) => {
            let manifest = session.write_manifest(Some(&error)).ok();
            Err(PipelineFailure { error, manifest })
        }
    }
}

fn run_stages(session: &mut Session) -> Result<PipelineOutcome, CliError> {
    session.clear()?;
    let train = session.train()?;
    let mut outcome = PipelineOutcome {
        manifest: empty_manifest(),
        train,
        explain: None,
        unlearn: None,
        unlearn_records: Vec::new(),
        eval: None,
    };
    if !session.loaded.config.unlearn.enabled {
        return Ok(outcome);
    }
    outcome.explain = Some(session.explain()?.0);
    let (record, run) = session.unlearn(None, None)?;
    outcome.unlearn = Some(record);
    outcome.unlearn_records = run.records;
    outcome.eval = Some(session.eval()?);
    Ok(outcome)
}

fn empty_manifest() -> RunManifest {
    RunManifest {
        tool_version: String::new(),
        config_sha256: String::new(),
        started_at: String::new(),
        finished_at: String::new(),
        status: RunStatus::Complete,
        stages: Vec::new(),
        failed_stage: None,
        error: None,
        artifacts: Vec::new(),
    }
}
