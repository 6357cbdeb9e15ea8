use std::sync::atomic::{AtomicU64, Ordering};

use super::grad::GradientSet;
use super::layer::LayerSpec;
use super::model::{ChannelId, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Counts batched forward passes; shared by reference across workers.
#[derive(Debug, Default)]
pub struct ForwardMeter(AtomicU64);

impl ForwardMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, passes: u64) {
        self.0.fetch_add(passes, Ordering::Relaxed);
    }

    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Per-thread scratch: activations of every layer plus pooling argmaxes.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(model: &Model) -> Self {
        let n = model.layers().len();
        Self {
            acts: vec![Vec::new(); n + 1],
            argmax: vec![Vec::new(); n],
            grad_a: Vec::new(),
            grad_b: Vec::new(),
        }
    }

    pub(crate) fn logits(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Input of layer `i` from the most recent pass.
    pub(crate) fn layer_input(&self, i: usize) -> &[f64] {
        &self.acts[i]
    }
}

/// A model with its parameters widened to `f64` for one batch of work.
pub(crate) struct Compiled<'a> {
    model: &'a Model,
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl<'a> Compiled<'a> {
    pub(crate) fn new(model: &'a Model) -> Self {
        let weights = model
            .layers()
            .iter()
            .map(|l| l.weights().data().iter().map(|&v| v as f64).collect())
            .collect();
        let bias = model
            .layers()
            .iter()
            .map(|l| l.bias().data().iter().map(|&v| v as f64).collect())
            .collect();
        Self {
            model,
            weights,
            bias,
        }
    }

    fn active(&self, layer: usize, channel: usize, extra: Option<ChannelId>) -> bool {
        self.model.channel_mask(layer)[channel] && extra != Some(ChannelId::new(layer, channel))
    }

    /// Full forward pass of one sample; logits land in `ws.logits()`.
    pub(crate) fn run(&self, ws: &mut Workspace, sample: &[f32]) {
        let input = &mut ws.acts[0];
        input.clear();
        input.extend(sample.iter().map(|&v| v as f64));
        self.run_layers(ws, 0, None);
    }

    /// Forward from layer `start` using the cached input `ws.layer_input(start)`,
    /// treating `extra` as masked in addition to the model's own mask.
    pub(crate) fn run_from(&self, ws: &mut Workspace, start: usize, extra: Option<ChannelId>) {
        self.run_layers(ws, start, extra);
    }

    /// Copies an externally cached layer input into the workspace.
    pub(crate) fn load_layer_input(&self, ws: &mut Workspace, layer: usize, input: &[f64]) {
        let buf = &mut ws.acts[layer];
        buf.clear();
        buf.extend_from_slice(input);
    }

    fn run_layers(&self, ws: &mut Workspace, start: usize, extra: Option<ChannelId>) {
        for i in start..self.model.layers().len() {
            let (before, after) = ws.acts.split_at_mut(i + 1);
            let input = &before[i];
            let out = &mut after[0];
            let in_shape = self.model.layer_input_shape(i);
            match *self.model.spec(i) {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let (h, w) = (in_shape[1], in_shape[2]);
                    let (oh, ow) = (h - kernel + 1, w - kernel + 1);
                    let plane_len = oh * ow;
                    out.clear();
                    out.resize(out_channels * plane_len, 0.0);
                    let wts = &self.weights[i];
                    for co in 0..out_channels {
                        let plane = &mut out[co * plane_len..(co + 1) * plane_len];
                        if !self.active(i, co, extra) {
                            continue;
                        }
                        plane.fill(self.bias[i][co]);
                        for ci in 0..in_channels {
                            let inp = &input[ci * h * w..(ci + 1) * h * w];
                            let kbase = (co * in_channels + ci) * kernel * kernel;
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let wv = wts[kbase + ky * kernel + kx];
                                    for oy in 0..oh {
                                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                                        let start = (oy + ky) * w + kx;
                                        let irow = &inp[start..start + ow];
                                        for (o, &x) in orow.iter_mut().zip(irow) {
                                            *o += wv * x;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    out.clear();
                    out.resize(out_features, 0.0);
                    let wts = &self.weights[i];
                    for (j, o) in out.iter_mut().enumerate() {
                        if !self.active(i, j, extra) {
                            continue;
                        }
                        let row = &wts[j * in_features..(j + 1) * in_features];
                        *o = self.bias[i][j] + dot(row, input);
                    }
                }
                LayerSpec::Relu => {
                    out.clear();
                    out.extend(input.iter().map(|&x| if x > 0.0 { x } else { 0.0 }));
                }
                LayerSpec::MaxPool { size } => {
                    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                    let (oh, ow) = (h / size, w / size);
                    out.clear();
                    out.resize(c * oh * ow, 0.0);
                    let arg = &mut ws.argmax[i];
                    arg.clear();
                    arg.resize(c * oh * ow, 0);
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_idx = 0usize;
                                for dy in 0..size {
                                    for dx in 0..size {
                                        let idx = ch * h * w + (oy * size + dy) * w + ox * size + dx;
                                        if input[idx] > best {
                                            best = input[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                let o = ch * oh * ow + oy * ow + ox;
                                out[o] = best;
                                arg[o] = best_idx as u32;
                            }
                        }
                    }
                }
                LayerSpec::Flatten => {
                    out.clear();
                    out.extend_from_slice(input);
                }
            }
        }
    }

    /// Backpropagates softmax cross-entropy for the sample held in `ws`,
    /// adding `scale`-weighted gradients into `grads`. Returns the sample loss.
    pub(crate) fn backprop(
        &self,
        ws: &mut Workspace,
        label: usize,
        scale: f64,
        grads: &mut GradientSet,
    ) -> f64 {
        let logits = ws.logits();
        let (loss, mut dz) = softmax_xent(logits, label);
        dz.iter_mut().for_each(|v| *v *= scale);
        let mut dout = std::mem::take(&mut ws.grad_a);
        let mut din = std::mem::take(&mut ws.grad_b);
        dout.clear();
        dout.extend_from_slice(&dz);

        for i in (0..self.model.layers().len()).rev() {
            let input = &ws.acts[i];
            let output = &ws.acts[i + 1];
            let need_din = i > 0;
            din.clear();
            din.resize(input.len(), 0.0);
            let in_shape = self.model.layer_input_shape(i);
            match *self.model.spec(i) {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let (h, w) = (in_shape[1], in_shape[2]);
                    let (oh, ow) = (h - kernel + 1, w - kernel + 1);
                    let plane_len = oh * ow;
                    let wts = &self.weights[i];
                    let g = grads.layer_mut(i);
                    for co in 0..out_channels {
                        if !self.model.channel_mask(i)[co] {
                            continue;
                        }
                        let dplane = &dout[co * plane_len..(co + 1) * plane_len];
                        g.bias[co] += dplane.iter().sum::<f64>();
                        for ci in 0..in_channels {
                            let inp = &input[ci * h * w..(ci + 1) * h * w];
                            let kbase = (co * in_channels + ci) * kernel * kernel;
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let mut acc = 0.0;
                                    for oy in 0..oh {
                                        let drow = &dplane[oy * ow..(oy + 1) * ow];
                                        let start = (oy + ky) * w + kx;
                                        acc += dot(drow, &inp[start..start + ow]);
                                    }
                                    g.weights[kbase + ky * kernel + kx] += acc;
                                    if need_din {
                                        let wv = wts[kbase + ky * kernel + kx];
                                        let dslab = &mut din[ci * h * w..(ci + 1) * h * w];
                                        for oy in 0..oh {
                                            let drow = &dplane[oy * ow..(oy + 1) * ow];
                                            let start = (oy + ky) * w + kx;
                                            for (d, &gv) in
                                                dslab[start..start + ow].iter_mut().zip(drow)
                                            {
                                                *d += wv * gv;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    let wts = &self.weights[i];
                    let g = grads.layer_mut(i);
                    for j in 0..out_features {
                        let gv = dout[j];
                        if !self.model.channel_mask(i)[j] || gv == 0.0 {
                            continue;
                        }
                        g.bias[j] += gv;
                        let grow = &mut g.weights[j * in_features..(j + 1) * in_features];
                        for (gw, &x) in grow.iter_mut().zip(input.iter()) {
                            *gw += gv * x;
                        }
                        if need_din {
                            let row = &wts[j * in_features..(j + 1) * in_features];
                            for (d, &wv) in din.iter_mut().zip(row) {
                                *d += gv * wv;
                            }
                        }
                    }
                }
                LayerSpec::Relu => {
                    for ((d, &x), &g) in din.iter_mut().zip(input.iter()).zip(dout.iter()) {
                        if x > 0.0 {
                            *d = g;
                        }
                    }
                }
                LayerSpec::MaxPool { .. } => {
                    for (o, &src) in ws.argmax[i].iter().enumerate() {
                        din[src as usize] += dout[o];
                    }
                }
                LayerSpec::Flatten => {
                    din.copy_from_slice(&dout[..input.len()]);
                }
            }
            debug_assert_eq!(output.len(), dout.len());
            std::mem::swap(&mut dout, &mut din);
        }
        ws.grad_a = dout;
        ws.grad_b = din;
        loss
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stable softmax cross-entropy: returns the loss and `softmax − onehot`.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let lse = max + sum.ln();
    let loss = lse - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss.max(0.0), grad)
}

pub(crate) fn sample_loss(logits: &[f64], label: usize) -> f64 {
    softmax_xent(logits, label).0
}

/// Index of the largest logit; ties resolve to the lowest class index.
pub(crate) fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

fn split_batch<'t>(model: &Model, batch: &'t Tensor) -> Result<Vec<&'t [f32]>> {
    let shape = batch.shape();
    if shape.len() != model.input_shape().len() + 1 || &shape[1..] != model.input_shape() {
        return Err(Error::dim(format!(
            "batch shape {shape:?} does not match model input {:?}",
            model.input_shape()
        )));
    }
    let per = model.input_len();
    Ok(batch.data().chunks(per).collect())
}

fn check_labels(model: &Model, labels: &[usize], batch_len: usize) -> Result<()> {
    if labels.len() != batch_len {
        return Err(Error::Input(format!(
            "{} labels for a batch of {batch_len}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.class_count()) {
        return Err(Error::Input(format!(
            "label {bad} outside [0, {})",
            model.class_count()
        )));
    }
    Ok(())
}

/// Class logits for a batch shaped `(batch, input_shape...)`.
pub fn forward(model: &Model, batch: &Tensor) -> Result<Tensor> {
    let samples = split_batch(model, batch)?;
    let compiled = Compiled::new(model);
    let mut ws = Workspace::new(model);
    let classes = model.class_count();
    let mut out = Vec::with_capacity(samples.len() * classes);
    for s in &samples {
        compiled.run(&mut ws, s);
        out.extend(ws.logits().iter().map(|&v| v as f32));
    }
    Tensor::new(vec![samples.len(), classes], out)
}

/// Activations of every layer for one sample; entry 0 is the input.
pub fn forward_trace(model: &Model, sample: &[f32]) -> Result<Vec<Vec<f64>>> {
    if sample.len() != model.input_len() {
        return Err(Error::dim(format!(
            "sample has {} values, model expects {}",
            sample.len(),
            model.input_len()
        )));
    }
    let compiled = Compiled::new(model);
    let mut ws = Workspace::new(model);
    compiled.run(&mut ws, sample);
    Ok(ws.acts)
}

/// Predicted class per sample.
pub fn predict(model: &Model, samples: &[&[f32]]) -> Vec<usize> {
    let compiled = Compiled::new(model);
    let mut ws = Workspace::new(model);
    samples
        .iter()
        .map(|s| {
            compiled.run(&mut ws, s);
            argmax(ws.logits())
        })
        .collect()
}

/// Mean cross-entropy over the batch.
pub fn loss(model: &Model, batch: &Tensor, labels: &[usize]) -> Result<f64> {
    let samples = split_batch(model, batch)?;
    check_labels(model, labels, samples.len())?;
    let compiled = Compiled::new(model);
    let mut ws = Workspace::new(model);
    let total: f64 = samples
        .iter()
        .zip(labels)
        .map(|(s, &y)| {
            compiled.run(&mut ws, s);
            sample_loss(ws.logits(), y)
        })
        .sum();
    Ok(total / samples.len() as f64)
}

/// Mean cross-entropy and its gradient with respect to every parameter.
///
/// Gradients are produced for frozen channels too; only the optimizer honours
/// the trainable mask. Masked channels receive zero gradient.
pub fn backward(model: &Model, batch: &Tensor, labels: &[usize]) -> Result<(f64, GradientSet)> {
    let samples = split_batch(model, batch)?;
    check_labels(model, labels, samples.len())?;
    batch_gradient(model, &samples, labels)
}

pub(crate) fn batch_gradient(
    model: &Model,
    samples: &[&[f32]],
    labels: &[usize],
) -> Result<(f64, GradientSet)> {
    if samples.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let compiled = Compiled::new(model);
    let mut ws = Workspace::new(model);
    let mut grads = GradientSet::zeros_like(model);
    let scale = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    for (s, &y) in samples.iter().zip(labels) {
        compiled.run(&mut ws, s);
        total += compiled.backprop(&mut ws, y, scale, &mut grads);
    }
    let mean = total / samples.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Input("loss diverged to a non-finite value".into()));
    }
    Ok((mean, grads))
}
