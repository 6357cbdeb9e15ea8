use super::model::{ChannelId, Model};
use crate::error::{Error, Result};

/// Gradient of one layer's weights and biases, laid out like the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-layer gradients, shape-congruent with the model that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(model: &Model) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| LayerGrad {
                weights: vec![0.0; l.weights().len()],
                bias: vec![0.0; l.bias().len()],
            })
            .collect();
        Self { layers }
    }

    pub fn layer(&self, i: usize) -> &LayerGrad {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut LayerGrad {
        &mut self.layers[i]
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    /// Gradient entries owned by one channel, in wire order (weights, then bias).
    pub fn channel(&self, model: &Model, ch: ChannelId) -> Result<Vec<f64>> {
        model.check_channel(ch)?;
        let fan_in = model.channel_param_len(ch.layer) - 1;
        let g = &self.layers[ch.layer];
        let mut out = g.weights[ch.channel * fan_in..(ch.channel + 1) * fan_in].to_vec();
        out.push(g.bias[ch.channel]);
        Ok(out)
    }

    pub fn check_congruent(&self, model: &Model) -> Result<()> {
        let ok = self.layers.len() == model.layers().len()
            && self.layers.iter().zip(model.layers()).all(|(g, l)| {
                g.weights.len() == l.weights().len() && g.bias.len() == l.bias().len()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::dim("gradient set is not shape-congruent with the model"))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
