use crate::error::{Error, Result};
use crate::nn::Model;

use super::ClientUpdate;

/// How client deltas are weighted when averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `1/m` over the round's `m` contributing clients.
    #[default]
    Uniform,
    /// Proportional to each client's local sample count.
    SampleCount,
}

/// Uniform averaging: `M ← M + (1/m)·Σ R^k` on the declared channels.
pub fn aggregate(server: &Model, updates: &[ClientUpdate]) -> Result<Model> {
    aggregate_weighted(server, updates, Weighting::Uniform)
}

/// Averages client deltas into a copy of `server`.
///
/// Empty updates (clients without data) are ignored. Every other update must
/// declare the same channel list. Reductions run in client-id order with
/// `f64` accumulation.
pub fn aggregate_weighted(
    server: &Model,
    updates: &[ClientUpdate],
    weighting: Weighting,
) -> Result<Model> {
    let mut live: Vec<&ClientUpdate> = updates.iter().filter(|u| !u.is_empty()).collect();
    live.sort_by_key(|u| u.client_id);
    let Some(first) = live.first() else {
        return Ok(server.clone());
    };
    let declared = first.channels();
    for u in &live[1..] {
        if u.channels() != declared {
            return Err(Error::Aggregation(format!(
                "client {} declares a different channel set than client {}",
                u.client_id, first.client_id
            )));
        }
    }
    for (ch, d) in &first.deltas {
        server.check_channel(*ch)?;
        let expected = server.channel_param_len(ch.layer);
        if let Some(u) = live.iter().find(|u| {
            u.deltas
                .iter()
                .any(|(c, v)| c == ch && v.len() != expected)
        }) {
            return Err(Error::dim(format!(
                "client {} sent {} values for {ch}, expected {expected}",
                u.client_id,
                d.len()
            )));
        }
    }

    let total_samples: usize = live.iter().map(|u| u.sample_count).sum();
    let mut out = server.clone();
    for (k, &ch) in declared.iter().enumerate() {
        let mut acc = vec![0f64; server.channel_param_len(ch.layer)];
        for u in &live {
            let w = match weighting {
                Weighting::Uniform => 1.0,
                Weighting::SampleCount => u.sample_count as f64,
            };
            for (a, &d) in acc.iter_mut().zip(&u.deltas[k].1) {
                *a += w * d as f64;
            }
        }
        let denom = match weighting {
            Weighting::Uniform => live.len() as f64,
            Weighting::SampleCount => total_samples as f64,
        };
        let current = server.channel_values(ch)?;
        let next: Vec<f32> = current
            .iter()
            .zip(&acc)
            .map(|(&w, &a)| (w as f64 + a / denom) as f32)
            .collect();
        out.set_channel_values(ch, &next)?;
    }
    Ok(out)
}
