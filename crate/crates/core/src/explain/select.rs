use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ChannelEffect;
use crate::error::{Error, Result};
use crate::nn::{ChannelId, Model};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSelection {
    pub layer_index: usize,
    pub channels: Vec<usize>,
}

/// The channel set `T` updated during unlearning, grouped by layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluentialSet {
    pub delta: f64,
    pub layers: Vec<LayerSelection>,
}

impl InfluentialSet {
    pub fn channels(&self) -> Vec<ChannelId> {
        self.layers
            .iter()
            .flat_map(|l| l.channels.iter().map(|&c| ChannelId::new(l.layer_index, c)))
            .collect()
    }

    pub fn contains(&self, ch: ChannelId) -> bool {
        self.layers
            .iter()
            .any(|l| l.layer_index == ch.layer && l.channels.contains(&ch.channel))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.channels.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The same selection limited to one layer.
    pub fn restrict_to_layer(&self, layer: usize) -> Self {
        Self {
            delta: self.delta,
            layers: self
                .layers
                .iter()
                .filter(|l| l.layer_index == layer)
                .cloned()
                .collect(),
        }
    }

    /// Checks that every channel exists in `model`.
    pub fn validate(&self, model: &Model) -> Result<()> {
        for ch in self.channels() {
            model.check_channel(ch).map_err(|e| Error::Plan(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("influential set JSON: {e}")))
    }
}

/// Channels taken per layer: `max(1, round(δ·count))`, never above `count`.
pub fn selection_count(delta: f64, count: usize) -> usize {
    ((delta * count as f64).round() as usize).clamp(1, count.max(1)).min(count)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::config(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

fn by_layer(effects: &[ChannelEffect]) -> BTreeMap<usize, Vec<(usize, f64)>> {
    let mut layers: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for e in effects {
        layers
            .entry(e.channel.layer)
            .or_default()
            .push((e.channel.channel, e.effect));
    }
    layers
}

fn select_ranked(effects: &[ChannelEffect], delta: f64, largest: bool) -> Result<InfluentialSet> {
    check_delta(delta)?;
    let mut layers = Vec::new();
    for (layer, mut chans) in by_layer(effects) {
        // Stable ordering: value first, lower channel index on ties.
        chans.sort_by(|a, b| {
            let ord = if largest {
                b.1.total_cmp(&a.1)
            } else {
                a.1.total_cmp(&b.1)
            };
            ord.then(a.0.cmp(&b.0))
        });
        let k = selection_count(delta, chans.len());
        let mut picked: Vec<usize> = chans[..k].iter().map(|c| c.0).collect();
        picked.sort_unstable();
        layers.push(LayerSelection {
            layer_index: layer,
            channels: picked,
        });
    }
    Ok(InfluentialSet { delta, layers })
}

/// Per layer, the channels with the largest effect.
pub fn select_influential(effects: &[ChannelEffect], delta: f64) -> Result<InfluentialSet> {
    select_ranked(effects, delta, true)
}

/// Per layer, the channels with the smallest effect.
pub fn select_non_important(effects: &[ChannelEffect], delta: f64) -> Result<InfluentialSet> {
    select_ranked(effects, delta, false)
}

/// Per layer, a uniformly random subset of the same size as the other arms.
pub fn select_random(model: &Model, delta: f64, seed: u64) -> Result<InfluentialSet> {
    check_delta(delta)?;
    let layers = model
        .parameterized_layers()
        .map(|l| {
            let count = model.channel_count(l);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("random/{l}")));
            let mut picked =
                rand::seq::index::sample(&mut rng, count, selection_count(delta, count)).into_vec();
            picked.sort_unstable();
            LayerSelection {
                layer_index: l,
                channels: picked,
            }
        })
        .collect();
    Ok(InfluentialSet { delta, layers })
}

/// Which comparison arm picks the channel set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Important,
    Random,
    NonImportant,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Important => "important",
            Selection::Random => "random",
            Selection::NonImportant => "nonimportant",
        })
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "important" => Ok(Selection::Important),
            "random" => Ok(Selection::Random),
            "nonimportant" | "non_important" => Ok(Selection::NonImportant),
            other => Err(Error::config(format!("unknown selection arm {other:?}"))),
        }
    }
}

/// Dispatches to the arm's selector; `seed` is used by the random arm only.
pub fn select(
    arm: Selection,
    model: &Model,
    effects: &[ChannelEffect],
    delta: f64,
    seed: u64,
) -> Result<InfluentialSet> {
    match arm {
        Selection::Important => select_influential(effects, delta),
        Selection::NonImportant => select_non_important(effects, delta),
        Selection::Random => select_random(model, delta, seed),
    }
}

/// Copy of `model` with every channel of `channels` masked.
pub fn mask_channels(model: &Model, channels: &[ChannelId]) -> Result<Model> {
    let mut out = model.clone();
    for &ch in channels {
        out.set_channel_active(ch, false)?;
    }
    Ok(out)
}
