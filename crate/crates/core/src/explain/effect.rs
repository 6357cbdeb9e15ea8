use std::io::Write;
use std::path::Path;

use crate::checkpoint;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{argmax, ChannelId, Compiled, ForwardMeter, Model, Workspace};

use super::InfluentialSet;

/// Probe batch size used to count forward passes.
pub const DEFAULT_PROBE_BATCH: usize = 64;

/// Samples of the unlearning class plus the intact model's accuracy on them.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    samples: LabeledDataset,
    target: usize,
    baseline_accuracy: f64,
    fingerprint: [u8; 32],
}

fn fingerprint(model: &Model) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(checkpoint::encode_body(model)).into()
}

fn accuracy(correct: usize, total: usize) -> f64 {
    correct as f64 / total as f64
}

impl ProbeSet {
    /// Records the baseline accuracy `H_b` of `model` on `samples`.
    pub fn new(model: &Model, samples: LabeledDataset, target: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("probe set is empty"));
        }
        if target >= model.class_count() {
            return Err(Error::Input(format!("target class {target} out of range")));
        }
        if samples.labels().iter().any(|&y| y != target) {
            return Err(Error::Input(format!(
                "probe set must contain only class {target}"
            )));
        }
        if samples.sample_len() != model.input_len() {
            return Err(Error::dim("probe samples do not match the model input"));
        }
        let compiled = Compiled::new(model);
        let mut ws = Workspace::new(model);
        let correct = samples
            .iter()
            .filter(|(x, y)| {
                compiled.run(&mut ws, x);
                argmax(ws.logits()) == *y
            })
            .count();
        Ok(Self {
            baseline_accuracy: accuracy(correct, samples.len()),
            samples,
            target,
            fingerprint: fingerprint(model),
        })
    }

    /// Up to `count` samples of `target` drawn from `pool`.
    pub fn from_pool(
        model: &Model,
        pool: &LabeledDataset,
        target: usize,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::new(model, pool.of_class(target).sample_subset(count, seed), target)
    }

    pub fn samples(&self) -> &LabeledDataset {
        &self.samples
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn baseline_accuracy(&self) -> f64 {
        self.baseline_accuracy
    }

    fn check_model(&self, model: &Model) -> Result<()> {
        if fingerprint(model) != self.fingerprint {
            return Err(Error::config(
                "probe baseline was recorded on a different model",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEffect {
    pub channel: ChannelId,
    /// `H_b − H(M', I)`, accuracies as fractions.
    pub effect: f64,
}

/// Effect of masking `ch`, computed from scratch on a pruned copy.
pub fn channel_effect(model: &Model, probe: &ProbeSet, ch: ChannelId) -> Result<ChannelEffect> {
    probe.check_model(model)?;
    let pruned = model.prune_channel(ch)?;
    let compiled = Compiled::new(&pruned);
    let mut ws = Workspace::new(&pruned);
    let correct = probe
        .samples
        .iter()
        .filter(|(x, y)| {
            compiled.run(&mut ws, x);
            argmax(ws.logits()) == *y
        })
        .count();
    Ok(ChannelEffect {
        channel: ch,
        effect: probe.baseline_accuracy - accuracy(correct, probe.samples.len()),
    })
}

/// Effects of every channel in (layer, channel) order.
pub fn effect_sweep(model: &Model, probe: &ProbeSet) -> Result<Vec<ChannelEffect>> {
    effect_sweep_metered(model, probe, DEFAULT_PROBE_BATCH, &ForwardMeter::new())
}

/// As [`effect_sweep`], recording one forward pass per probe batch per
/// evaluated model (the intact baseline plus one per channel).
///
/// Each layer's input is cached from the intact pass, so masking a channel
/// of layer `l` only recomputes layers `l..`. The result is bit-identical to
/// full forwards of pruned copies.
pub fn effect_sweep_metered(
    model: &Model,
    probe: &ProbeSet,
    batch_size: usize,
    meter: &ForwardMeter,
) -> Result<Vec<ChannelEffect>> {
    if batch_size == 0 {
        return Err(Error::config("probe batch size must be at least 1"));
    }
    probe.check_model(model)?;
    let n = probe.samples.len();
    let batches = n.div_ceil(batch_size) as u64;
    let compiled = Compiled::new(model);
    let mut ws = Workspace::new(model);
    let layer_count = model.layers().len();

    // cache[s][l] = input of layer l for sample s
    let mut cache: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    let mut correct = 0usize;
    for (x, y) in probe.samples.iter() {
        compiled.run(&mut ws, x);
        correct += usize::from(argmax(ws.logits()) == y);
        cache.push((0..layer_count).map(|l| ws.layer_input(l).to_vec()).collect());
    }
    meter.record(batches);
    if accuracy(correct, n) != probe.baseline_accuracy {
        return Err(Error::config("probe baseline does not reproduce on this model"));
    }

    let mut effects = Vec::with_capacity(model.total_channels());
    for ch in model.channels() {
        let mut hits = 0usize;
        for (s, &y) in probe.samples.labels().iter().enumerate() {
            compiled.load_layer_input(&mut ws, ch.layer, &cache[s][ch.layer]);
            compiled.run_from(&mut ws, ch.layer, Some(ch));
            hits += usize::from(argmax(ws.logits()) == y);
        }
        meter.record(batches);
        effects.push(ChannelEffect {
            channel: ch,
            effect: probe.baseline_accuracy - accuracy(hits, n),
        });
    }
    Ok(effects)
}

/// CSV with header `layer_index,channel_index,effect,selected`.
pub fn write_effects_csv(
    path: &Path,
    effects: &[ChannelEffect],
    selected: &InfluentialSet,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "layer_index,channel_index,effect,selected")?;
    for e in effects {
        writeln!(
            out,
            "{},{},{},{}",
            e.channel.layer,
            e.channel.channel,
            e.effect,
            u8::from(selected.contains(e.channel))
        )?;
    }
    out.flush()?;
    Ok(())
}
