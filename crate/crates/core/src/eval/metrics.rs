use std::io::Write;
use std::path::Path;

use crate::error::Result;

use super::ClassAccuracy;

/// Evaluation of one training round or unlearning epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// `train`, `unlearn_de`, `unlearn_ce`, ...
    pub phase: String,
    pub index: usize,
    pub per_class: Vec<Option<f64>>,
    pub overall_accuracy: f64,
    pub unlearning_class_accuracy: Option<f64>,
    pub remaining_accuracy: Option<f64>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub wall_clock_seconds: f64,
}

impl MetricsRecord {
    pub fn new(
        phase: &str,
        index: usize,
        acc: &ClassAccuracy,
        target: Option<usize>,
        bytes: (u64, u64),
        wall_clock_seconds: f64,
    ) -> Self {
        Self {
            phase: phase.to_string(),
            index,
            per_class: acc.per_class(),
            overall_accuracy: acc.overall(),
            unlearning_class_accuracy: target.and_then(|t| acc.class(t)),
            remaining_accuracy: target.and_then(|t| acc.remaining(t)),
            bytes_up: bytes.0,
            bytes_down: bytes.1,
            wall_clock_seconds,
        }
    }
}

/// Leading columns of the metrics CSV; `class_<c>` columns follow.
pub const METRICS_HEADER_PREFIX: &str =
    "phase,index,overall_accuracy,unlearning_accuracy,remaining_accuracy,bytes_up,bytes_down";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Deterministic metrics CSV. Wall-clock time is kept out of this file so
/// identical runs produce identical bytes; see [`write_timings_json`].
pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord], class_count: usize) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "{METRICS_HEADER_PREFIX}")?;
    for c in 0..class_count {
        write!(out, ",class_{c}")?;
    }
    writeln!(out)?;
    for r in records {
        write!(
            out,
            "{},{},{:.6},{},{},{},{}",
            r.phase,
            r.index,
            r.overall_accuracy,
            opt(r.unlearning_class_accuracy),
            opt(r.remaining_accuracy),
            r.bytes_up,
            r.bytes_down
        )?;
        for c in 0..class_count {
            write!(out, ",{}", opt(r.per_class.get(c).copied().flatten()))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Wall-clock seconds per record as a JSON array of
/// `{phase, index, wall_clock_seconds}` objects.
pub fn write_timings_json(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let rows: Vec<serde_json::Value> = records
        .iter()
        .map(|r| {
            serde_json::json!({
                "phase": r.phase,
                "index": r.index,
                "wall_clock_seconds": r.wall_clock_seconds,
            })
        })
        .collect();
    let text = serde_json::to_string_pretty(&rows).expect("timings serialize");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Total `(bytes_up, bytes_down)` over a run's records.
pub fn measured_traffic(records: &[MetricsRecord]) -> (u64, u64) {
    records
        .iter()
        .fold((0, 0), |(u, d), r| (u + r.bytes_up, d + r.bytes_down))
}
