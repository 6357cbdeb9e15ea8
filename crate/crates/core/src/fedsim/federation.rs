use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_weighted, Weighting};
use super::local::{local_train_stream, SampleStream, Shuffled};
use super::wire::{self, Payload};
use super::{ChannelSet, ClientUpdate};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub global_epochs: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub participation_fraction: f64,
    pub seed: u64,
    pub weighting: Weighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            global_epochs: 10,
            local_epochs: 1,
            batch_size: 32,
            learning_rate: 0.05,
            participation_fraction: 1.0,
            seed: 0,
            weighting: Weighting::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.participation_fraction > 0.0 && self.participation_fraction <= 1.0) {
            return Err(Error::config(format!(
                "participation_fraction must lie in (0, 1], got {}",
                self.participation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Client {
    pub id: usize,
    pub data: LabeledDataset,
    pub rng_seed: u64,
}

impl Client {
    pub fn new(id: usize, data: LabeledDataset, rng_seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::data(format!("client {id} registered with no data")));
        }
        Ok(Self { id, data, rng_seed })
    }

    /// Seed of everything this client draws during `round`.
    pub fn round_seed(&self, round: usize) -> u64 {
        derive_seed(self.rng_seed, &format!("round/{round}"))
    }

    pub fn stream(&self, round: usize) -> Shuffled<'_> {
        Shuffled {
            data: &self.data,
            seed: self.round_seed(round),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationState {
    pub server_model: Model,
    pub clients: Vec<Client>,
    /// Index of the next round to run.
    pub round: usize,
    pub config: TrainConfig,
}

impl FederationState {
    /// Registers one client per shard with ids `0..n` and seeds derived from
    /// `config.seed`.
    pub fn new(model: Model, shards: Vec<LabeledDataset>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if shards.is_empty() {
            return Err(Error::config("a federation needs at least one client"));
        }
        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(id, data)| Client::new(id, data, derive_seed(config.seed, &format!("client/{id}"))))
            .collect::<Result<_>>()?;
        Ok(Self {
            server_model: model,
            clients,
            round: 0,
            config,
        })
    }
}

/// Traffic and loss for one completed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub participants: Vec<usize>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Mean of the participants' local losses.
    pub mean_loss: Option<f64>,
}

/// Returned by round observers to continue or end a loop early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// `⌈fraction·n⌉` distinct client indices drawn uniformly for `round`,
/// sorted ascending.
pub fn select_participants(n: usize, fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let k = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    if k == n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("participants/{round}")));
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// One round: broadcast `channels` of `server`, train every participant on
/// the stream built by `stream_for`, aggregate.
pub(crate) fn federated_round<'c, S, F>(
    server: &Model,
    clients: &'c [Client],
    cfg: &TrainConfig,
    round: usize,
    channels: &ChannelSet,
    mut stream_for: F,
) -> Result<(Model, RoundReport)>
where
    S: SampleStream,
    F: FnMut(&'c Client) -> Result<S>,
{
    let participants = select_participants(clients.len(), cfg.participation_fraction, cfg.seed, round);
    let broadcast = Payload::broadcast(server, &channels.resolve(server)?)?;
    let broadcast_bytes = wire::encode(&broadcast)?;

    let mut updates: Vec<ClientUpdate> = Vec::with_capacity(participants.len());
    let mut bytes_down = 0u64;
    for &k in &participants {
        let client = &clients[k];
        // Clients hold the previous global model; the broadcast refreshes
        // the channels being trained this round.
        let mut received = server.clone();
        wire::decode(&broadcast_bytes)?.apply_to(&mut received)?;
        bytes_down += broadcast_bytes.len() as u64;
        let stream = stream_for(client)?;
        updates.push(local_train_stream(&stream, client.id, &received, cfg, channels)?);
    }
    let bytes_up = updates.iter().map(|u| u.byte_size as u64).sum();
    let next = aggregate_weighted(server, &updates, cfg.weighting)?;
    if !next.is_finite() {
        return Err(Error::Input(format!("round {round} produced non-finite parameters")));
    }
    let losses: Vec<f64> = updates.iter().filter_map(|u| u.mean_loss).collect();
    let report = RoundReport {
        round,
        participants,
        bytes_up,
        bytes_down,
        mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
    };
    debug!(
        "round {round}: loss {:?}, {} B up, {} B down",
        report.mean_loss, report.bytes_up, report.bytes_down
    );
    Ok((next, report))
}

pub fn train_global(fed: &mut FederationState) -> Result<Model> {
    train_global_observed(fed, |_, _| Ok(Control::Continue))
}

/// Runs `config.global_epochs` rounds of broadcast, local training on all
/// channels, and aggregation. `observer` sees every round's report and the
/// resulting global model.
pub fn train_global_observed(
    fed: &mut FederationState,
    mut observer: impl FnMut(&RoundReport, &Model) -> Result<Control>,
) -> Result<Model> {
    fed.config.validate()?;
    if fed.clients.is_empty() {
        return Err(Error::config("a federation needs at least one client"));
    }
    if fed.clients.iter().all(|c| c.data.is_empty()) {
        warn!("no client holds any data; training is a no-op");
    }
    for _ in 0..fed.config.global_epochs {
        let round = fed.round;
        let (next, report) = federated_round(
            &fed.server_model,
            &fed.clients,
            &fed.config,
            round,
            &ChannelSet::All,
            |c| Ok(c.stream(round)),
        )?;
        fed.server_model = next;
        fed.round += 1;
        if observer(&report, &fed.server_model)? == Control::Stop {
            break;
        }
    }
    Ok(fed.server_model.clone())
}
