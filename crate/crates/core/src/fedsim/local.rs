use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::federation::{Client, TrainConfig};
use super::wire::{self, Payload, PayloadKind};
use super::ChannelSet;
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::nn::{batch_gradient, ChannelId, Model};
use crate::seed::derive_seed;

/// Per-epoch visiting order over a client's training samples.
pub trait SampleStream {
    fn data(&self) -> &LabeledDataset;
    /// Indices into [`SampleStream::data`] for local epoch `epoch`.
    fn epoch_order(&self, epoch: usize) -> Vec<usize>;
}

/// Shuffles `0..len` with a stream derived from `seed` and the epoch index.
pub(crate) fn shuffled_order(mut indices: Vec<usize>, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("epoch/{epoch}")));
    indices.shuffle(&mut rng);
    indices
}

/// Plain local data, reshuffled every epoch.
#[derive(Debug, Clone, Copy)]
pub struct Shuffled<'a> {
    pub data: &'a LabeledDataset,
    pub seed: u64,
}

impl SampleStream for Shuffled<'_> {
    fn data(&self) -> &LabeledDataset {
        self.data
    }

    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        shuffled_order((0..self.data.len()).collect(), self.seed, epoch)
    }
}

/// One client's upload for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub sample_count: usize,
    /// `(channel, trained − received)` for each uploadable channel.
    pub deltas: Vec<(ChannelId, Vec<f32>)>,
    /// Length of the serialized upload; 0 when nothing was sent.
    pub byte_size: usize,
    /// Mean mini-batch loss over all local steps.
    pub mean_loss: Option<f64>,
}

impl ClientUpdate {
    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn payload(&self) -> Payload {
        Payload {
            kind: PayloadKind::ClientDelta,
            sender: self.client_id as u32,
            entries: self.deltas.clone(),
        }
    }

    pub fn channels(&self) -> Vec<ChannelId> {
        self.deltas.iter().map(|(ch, _)| *ch).collect()
    }
}

/// Local training of `client` on its own data for `round`.
pub fn local_train(
    client: &Client,
    model: &Model,
    cfg: &TrainConfig,
    uploadable: &ChannelSet,
    round: usize,
) -> Result<ClientUpdate> {
    local_train_stream(&client.stream(round), client.id, model, cfg, uploadable)
}

/// Masked SGD for `cfg.local_epochs` passes over `stream`, starting from the
/// received model. Channels outside `uploadable` are frozen unless it is
/// [`ChannelSet::All`].
pub fn local_train_stream<S: SampleStream + ?Sized>(
    stream: &S,
    client_id: usize,
    received: &Model,
    cfg: &TrainConfig,
    uploadable: &ChannelSet,
) -> Result<ClientUpdate> {
    let data = stream.data();
    if data.is_empty() {
        info!("client {client_id} has no local data; skipping");
        return Ok(ClientUpdate {
            client_id,
            sample_count: 0,
            deltas: Vec::new(),
            byte_size: 0,
            mean_loss: None,
        });
    }
    let channels = uploadable.resolve(received)?;
    let mut model = received.clone();
    match uploadable {
        ChannelSet::All => model.set_all_trainable(true),
        ChannelSet::Only(_) => model.train_only(&channels)?,
    }

    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    for epoch in 0..cfg.local_epochs {
        let order = stream.epoch_order(epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f32]> = chunk.iter().map(|&i| data.input(i)).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
            let (loss, grads) = batch_gradient(&model, &xs, &ys)?;
            model.sgd_step(&grads, cfg.learning_rate)?;
            loss_sum += loss;
            steps += 1;
        }
    }

    let deltas = channels
        .iter()
        .map(|&ch| {
            let after = model.channel_values(ch)?;
            let before = received.channel_values(ch)?;
            Ok((ch, after.iter().zip(&before).map(|(a, b)| a - b).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut update = ClientUpdate {
        client_id,
        sample_count: data.len(),
        deltas,
        byte_size: 0,
        mean_loss: (steps > 0).then(|| loss_sum / steps as f64),
    };
    update.byte_size = wire::encode(&update.payload())?.len();
    Ok(update)
}
