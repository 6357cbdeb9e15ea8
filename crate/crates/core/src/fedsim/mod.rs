//! Simulated cross-silo federation: clients, local training, aggregation
//! and the global training loop.

mod aggregate;
mod federation;
mod local;
pub mod wire;

pub use aggregate::{aggregate, aggregate_weighted, Weighting};
pub use federation::{
    select_participants, train_global, train_global_observed, Client, Control, FederationState,
    RoundReport, TrainConfig,
};
pub use local::{local_train, local_train_stream, ClientUpdate, SampleStream, Shuffled};
pub(crate) use federation::federated_round;
pub(crate) use local::shuffled_order;

use crate::error::Result;
use crate::nn::{ChannelId, Model};

/// Channels a round broadcasts, trains and uploads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelSet {
    All,
    Only(Vec<ChannelId>),
}

impl ChannelSet {
    /// Concrete channel list in (layer, channel) order, bounds-checked.
    pub fn resolve(&self, model: &Model) -> Result<Vec<ChannelId>> {
        match self {
            ChannelSet::All => Ok(model.channels()),
            ChannelSet::Only(chs) => {
                let mut v = chs.clone();
                for &ch in &v {
                    model.check_channel(ch)?;
                }
                v.sort();
                v.dedup();
                Ok(v)
            }
        }
    }
}
