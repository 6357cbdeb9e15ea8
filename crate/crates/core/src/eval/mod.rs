//! Effectiveness and efficiency measurements.

mod accuracy;
mod cost;
mod metrics;
mod mia;

pub use accuracy::{class_accuracy, confusion_matrix, predictions, ClassAccuracy};
pub use cost::{
    ce_speedup, cost_communication, cost_computation, cost_storage, de_speedup,
    measured_storage_fraction, retrain_computation_uncompressed, CostModelParams, CostScheme,
};
pub use metrics::{
    measured_traffic, write_metrics_csv, write_timings_json, MetricsRecord, METRICS_HEADER_PREFIX,
};
pub use mia::{
    attack_threshold, calibrate_threshold, mean_loss_threshold, mia_recall, mia_recall_at,
    sample_losses, AttackConfig, Threshold,
};
