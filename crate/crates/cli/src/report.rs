//! Plain-text summaries printed by the CLI.

use std::fmt::Write;

use fedunlearn::eval::MetricsRecord;

use crate::commands::{AttackRecord, CostsRecord, EvalRecord, ExplainRecord, UnlearnRecord};
use crate::pipeline::SchemeCosts;

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:6.2}%", 100.0 * x)).unwrap_or_else(|| "     -".into())
}

pub fn metrics_table(records: &[MetricsRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<11} {:>5} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "phase", "index", "overall", "unlearning", "remaining", "bytes_up", "bytes_down"
    );
    for r in records {
        let _ = writeln!(
            s,
            "{:<11} {:>5} {:>8} {:>10} {:>10} {:>10} {:>10}",
            r.phase,
            r.index,
            pct(Some(r.overall_accuracy)),
            pct(r.unlearning_class_accuracy),
            pct(r.remaining_accuracy),
            r.bytes_up,
            r.bytes_down
        );
    }
    s
}

pub fn explain_summary(r: &ExplainRecord) -> String {
    format!(
        "class {}: {} probe samples at baseline accuracy {}, {} forward passes, \
         {} channels selected ({} arm, delta {})\n",
        r.target_class,
        r.probe_samples,
        pct(Some(r.baseline_accuracy)),
        r.forward_passes,
        r.selected_channels,
        r.selection,
        r.delta
    )
}

pub fn unlearn_summary(r: &UnlearnRecord) -> String {
    let (up, down) = r.bytes();
    let mut s = format!(
        "{} unlearning of class {} over {} channels ({} arm): {} epochs, {} B up, {} B down\n",
        r.scheme, r.target_class, r.channels_in_t, r.selection, r.epochs_run, up, down
    );
    if let Some(ratio) = r.traffic_ratio() {
        let _ = writeln!(s, "traffic relative to full-model rounds: {ratio:.4}");
    }
    let _ = writeln!(s, "checkpoint bytes changed outside T: {}", r.bytes_changed_outside_t);
    s
}

fn costs_rows(s: &mut String, name: &str, c: &SchemeCosts) {
    let _ = writeln!(
        s,
        "{:<14} {:>12.4} {:>12.4} {:>12.4}",
        name, c.retrain, c.decentralized, c.centralized
    );
}

pub fn costs_summary(r: &CostsRecord) -> String {
    let mut s = String::new();
    let m = &r.model;
    let _ = writeln!(s, "{:<14} {:>12} {:>12} {:>12}", "cost", "retrain", "de", "ce");
    costs_rows(&mut s, "computation", &m.computation);
    costs_rows(&mut s, "communication", &m.communication);
    costs_rows(&mut s, "storage", &m.storage);
    let _ = writeln!(s, "speedup over retraining: de {:.2}x, ce {:.2}x", m.de_speedup, m.ce_speedup);
    let _ = writeln!(s, "server data share: {:.4}", m.measured_storage_fraction);
    if let Some(t) = &r.measured {
        let _ = writeln!(
            s,
            "measured {} traffic: {} B up, {} B down over {} epochs",
            t.scheme, t.bytes_up, t.bytes_down, t.epochs
        );
    }
    s
}

pub fn attack_summary(r: &AttackRecord) -> String {
    let mut s = format!(
        "original:  recall {} over {} members (tau {:.6}, {})\n",
        pct(Some(r.original.recall)),
        r.original.members,
        r.original.tau,
        r.original.threshold_rule
    );
    if let Some(u) = &r.unlearned {
        let _ = writeln!(
            s,
            "unlearned: recall {} over {} members (tau {:.6})",
            pct(Some(u.recall)),
            u.members,
            u.tau
        );
    }
    s
}

pub fn eval_summary(r: &EvalRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>8} {:>10} {:>10} {:>10}", "model", "overall", "unlearning", "remaining", "mia");
    let _ = writeln!(
        s,
        "{:<10} {:>8} {:>10} {:>10} {:>10}",
        "original",
        pct(Some(r.original.overall)),
        pct(r.original.unlearning),
        pct(r.original.remaining),
        pct(Some(r.attack_original.recall))
    );
    if let Some(u) = &r.unlearned {
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>10} {:>10} {:>10}",
            "unlearned",
            pct(Some(u.overall)),
            pct(u.unlearning),
            pct(u.remaining),
            pct(r.attack_unlearned.as_ref().map(|a| a.recall))
        );
    }
    if let Some(t) = &r.traffic {
        let _ = writeln!(
            s,
            "{} traffic: {} B up, {} B down over {} epochs",
            t.scheme, t.bytes_up, t.bytes_down, t.epochs
        );
    }
    s
}
