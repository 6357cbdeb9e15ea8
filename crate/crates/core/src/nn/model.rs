use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::GradientSet;
use super::layer::{Architecture, Layer, LayerSpec};
use crate::error::{Error, Result};

/// Address of one output channel: `layer_index` indexes the full layer list
/// (parameter-free layers included).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelId {
    #[serde(rename = "layer_index")]
    pub layer: usize,
    #[serde(rename = "channel_index")]
    pub channel: usize,
}

impl ChannelId {
    pub const fn new(layer: usize, channel: usize) -> Self {
        Self { layer, channel }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}:C{}", self.layer, self.channel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    shapes: Vec<Vec<usize>>,
    pub(crate) layers: Vec<Layer>,
    channel_mask: Vec<Vec<bool>>,
    trainable_mask: Vec<Vec<bool>>,
}

impl Model {
    /// All-zero parameters, every channel active and trainable.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let shapes = arch.layer_shapes()?;
        arch.validate()?;
        let layers: Vec<Layer> = arch.layers.iter().cloned().map(Layer::zeroed).collect();
        let channel_mask = layers
            .iter()
            .map(|l| vec![true; l.out_channel_count()])
            .collect::<Vec<_>>();
        let trainable_mask = channel_mask.clone();
        Ok(Self {
            arch,
            shapes,
            layers,
            channel_mask,
            trainable_mask,
        })
    }

    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let fan_in = layer.spec.fan_in();
            if fan_in == 0 {
                continue;
            }
            let bound = (6.0 / fan_in as f64).sqrt() as f32;
            for w in layer.weights.data_mut() {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    /// Rebuilds a model from raw parts, validating every invariant.
    pub fn from_parts(
        arch: Architecture,
        params: Vec<(Vec<f32>, Vec<f32>)>,
        channel_mask: Vec<Vec<bool>>,
        trainable_mask: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let n = model.layers.len();
        if params.len() != n || channel_mask.len() != n || trainable_mask.len() != n {
            return Err(Error::dim(format!(
                "expected per-layer data for {n} layers"
            )));
        }
        for (i, (w, b)) in params.into_iter().enumerate() {
            let layer = &mut model.layers[i];
            if w.len() != layer.weights.len() || b.len() != layer.bias.len() {
                return Err(Error::dim(format!("layer {i}: parameter length mismatch")));
            }
            layer.weights.data_mut().copy_from_slice(&w);
            layer.bias.data_mut().copy_from_slice(&b);
            let count = layer.out_channel_count();
            if channel_mask[i].len() != count || trainable_mask[i].len() != count {
                return Err(Error::dim(format!("layer {i}: mask length mismatch")));
            }
        }
        model.channel_mask = channel_mask;
        model.trainable_mask = trainable_mask;
        Ok(model)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.arch.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.shapes.last().map(|s| s[0]).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape of layer `i`.
    pub fn layer_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Input shape of layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.arch.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    /// Indices of the conv/dense layers, in declaration order.
    pub fn parameterized_layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.spec.is_parameterized())
            .map(|(i, _)| i)
    }

    pub fn channel_count(&self, layer: usize) -> usize {
        self.layers
            .get(layer)
            .map(|l| l.out_channel_count())
            .unwrap_or(0)
    }

    /// Every prunable channel ordered by (layer, channel).
    pub fn channels(&self) -> Vec<ChannelId> {
        self.parameterized_layers()
            .flat_map(|l| (0..self.channel_count(l)).map(move |c| ChannelId::new(l, c)))
            .collect()
    }

    pub fn total_channels(&self) -> usize {
        self.layers.iter().map(|l| l.out_channel_count()).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters owned by one channel: `fan_in` weights plus its bias.
    pub fn channel_param_len(&self, layer: usize) -> usize {
        self.layers[layer].spec.fan_in() + 1
    }

    pub fn check_channel(&self, ch: ChannelId) -> Result<()> {
        let count = self.channel_count(ch.layer);
        if ch.layer >= self.layers.len() || ch.channel >= count {
            return Err(Error::Index(format!(
                "{ch} outside model ({} layers, {count} channels in layer)",
                self.layers.len()
            )));
        }
        Ok(())
    }

    /// Channel parameters in wire order: weight row, then bias.
    pub fn channel_values(&self, ch: ChannelId) -> Result<Vec<f32>> {
        self.check_channel(ch)?;
        let layer = &self.layers[ch.layer];
        let fan_in = layer.spec.fan_in();
        let mut out = Vec::with_capacity(fan_in + 1);
        out.extend_from_slice(&layer.weights.data()[ch.channel * fan_in..(ch.channel + 1) * fan_in]);
        out.push(layer.bias.data()[ch.channel]);
        Ok(out)
    }

    pub fn set_channel_values(&mut self, ch: ChannelId, values: &[f32]) -> Result<()> {
        self.check_channel(ch)?;
        let fan_in = self.layers[ch.layer].spec.fan_in();
        if values.len() != fan_in + 1 {
            return Err(Error::dim(format!(
                "{ch} owns {} parameters, got {}",
                fan_in + 1,
                values.len()
            )));
        }
        let layer = &mut self.layers[ch.layer];
        layer.weights.data_mut()[ch.channel * fan_in..(ch.channel + 1) * fan_in]
            .copy_from_slice(&values[..fan_in]);
        layer.bias.data_mut()[ch.channel] = values[fan_in];
        Ok(())
    }

    pub fn channel_mask(&self, layer: usize) -> &[bool] {
        &self.channel_mask[layer]
    }

    pub fn trainable_mask(&self, layer: usize) -> &[bool] {
        &self.trainable_mask[layer]
    }

    pub fn is_active(&self, ch: ChannelId) -> bool {
        self.channel_mask
            .get(ch.layer)
            .and_then(|m| m.get(ch.channel))
            .copied()
            .unwrap_or(false)
    }

    pub fn is_trainable(&self, ch: ChannelId) -> bool {
        self.trainable_mask
            .get(ch.layer)
            .and_then(|m| m.get(ch.channel))
            .copied()
            .unwrap_or(false)
    }

    pub fn set_channel_active(&mut self, ch: ChannelId, active: bool) -> Result<()> {
        self.check_channel(ch)?;
        self.channel_mask[ch.layer][ch.channel] = active;
        Ok(())
    }

    pub fn set_trainable(&mut self, ch: ChannelId, trainable: bool) -> Result<()> {
        self.check_channel(ch)?;
        self.trainable_mask[ch.layer][ch.channel] = trainable;
        Ok(())
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for m in &mut self.trainable_mask {
            m.iter_mut().for_each(|t| *t = trainable);
        }
    }

    /// Freezes everything except `channels`.
    pub fn train_only(&mut self, channels: &[ChannelId]) -> Result<()> {
        self.set_all_trainable(false);
        for &ch in channels {
            self.set_trainable(ch, true)?;
        }
        Ok(())
    }

    /// Copy of the model with `ch` masked out; `self` is untouched.
    pub fn prune_channel(&self, ch: ChannelId) -> Result<Model> {
        let mut pruned = self.clone();
        pruned.set_channel_active(ch, false)?;
        Ok(pruned)
    }

    pub fn restore_channel(&self, ch: ChannelId) -> Result<Model> {
        let mut restored = self.clone();
        restored.set_channel_active(ch, true)?;
        Ok(restored)
    }

    /// `w ← w − lr·g` for trainable channels; frozen channels keep their exact bits.
    pub fn sgd_step(&mut self, grads: &GradientSet, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        grads.check_congruent(self)?;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if !layer.spec.is_parameterized() {
                continue;
            }
            let fan_in = layer.spec.fan_in();
            let g = grads.layer(i);
            for (c, &trainable) in self.trainable_mask[i].iter().enumerate() {
                if !trainable {
                    continue;
                }
                let range = c * fan_in..(c + 1) * fan_in;
                for (w, &dw) in layer.weights.data_mut()[range.clone()]
                    .iter_mut()
                    .zip(&g.weights[range])
                {
                    *w = (*w as f64 - lr * dw) as f32;
                }
                let b = &mut layer.bias.data_mut()[c];
                *b = (*b as f64 - lr * g.bias[c]) as f32;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }

    /// Parameter access for tests and tooling.
    pub fn layer_params_mut(&mut self, layer: usize) -> (&mut [f32], &mut [f32]) {
        let l = &mut self.layers[layer];
        (l.weights.data_mut(), l.bias.data_mut())
    }

    pub(crate) fn spec(&self, layer: usize) -> &LayerSpec {
        &self.layers[layer].spec
    }
}
