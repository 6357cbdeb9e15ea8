//! Ablation-based channel explanations.
//!
//! A channel's effect is the probe-set accuracy of the intact model minus
//! the accuracy with that single channel masked. The probe set holds only
//! samples of the class to be forgotten, so a high effect marks a channel
//! the model relies on to recognise that class.

mod effect;
mod select;

pub use effect::{
    channel_effect, effect_sweep, effect_sweep_metered, write_effects_csv, ChannelEffect, ProbeSet,
    DEFAULT_PROBE_BATCH,
};
pub use select::{
    mask_channels, select, select_influential, select_non_important, select_random,
    selection_count, InfluentialSet, LayerSelection, Selection,
};
