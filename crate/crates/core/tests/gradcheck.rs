//! Analytic gradients against central finite differences.

mod common;

use common::*;
use fedunlearn::nn::{backward, forward_trace, loss, LayerSpec};
use fedunlearn::{Architecture, ChannelId, Model};

const EPS: f32 = 1e-4;
const TOL: f64 = 1e-4;

/// ReLU sign patterns and max-pool winners of one forward pass; a finite
/// difference is only meaningful when both probes share them.
fn regime(model: &Model, inputs: &[Vec<f32>]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for x in inputs {
        let acts = forward_trace(model, x).unwrap();
        for (i, spec) in model.architecture().layers.iter().enumerate() {
            let input = &acts[i];
            match spec {
                LayerSpec::Relu => out.push(input.iter().map(|&v| usize::from(v > 0.0)).collect()),
                LayerSpec::MaxPool { size } => {
                    let shape = model.layer_input_shape(i);
                    let (c, h, w) = (shape[0], shape[1], shape[2]);
                    let mut winners = Vec::new();
                    for ch in 0..c {
                        for oy in 0..h / size {
                            for ox in 0..w / size {
                                let mut best = (f64::NEG_INFINITY, 0);
                                for dy in 0..*size {
                                    for dx in 0..*size {
                                        let idx = ch * h * w + (oy * size + dy) * w + ox * size + dx;
                                        if input[idx] > best.0 {
                                            best = (input[idx], idx);
                                        }
                                    }
                                }
                                winners.push(best.1);
                            }
                        }
                    }
                    out.push(winners);
                }
                _ => {}
            }
        }
    }
    out
}

struct Report {
    checked: usize,
    skipped: usize,
    worst: f64,
}

fn check(model: &Model, inputs: &[Vec<f32>], labels: &[usize]) -> Report {
    let b = batch(model, inputs);
    let (_, grads) = backward(model, &b, labels).unwrap();
    let mut report = Report {
        checked: 0,
        skipped: 0,
        worst: 0.0,
    };
    let layers: Vec<usize> = model.parameterized_layers().collect();
    for l in layers {
        let (nw, nb) = {
            let layer = &model.layers()[l];
            (layer.weights().len(), layer.bias().len())
        };
        for idx in 0..nw + nb {
            let analytic = if idx < nw {
                grads.layer(l).weights[idx]
            } else {
                grads.layer(l).bias[idx - nw]
            };
            let probe = |sign: f32| {
                let mut m = model.clone();
                let (w, bias) = m.layer_params_mut(l);
                let slot = if idx < nw { &mut w[idx] } else { &mut bias[idx - nw] };
                *slot += sign * EPS;
                let value = *slot as f64;
                (m, value)
            };
            let (plus, vp) = probe(1.0);
            let (minus, vm) = probe(-1.0);
            if regime(&plus, inputs) != regime(&minus, inputs) {
                report.skipped += 1;
                continue;
            }
            let lp = loss(&plus, &b, labels).unwrap();
            let lm = loss(&minus, &b, labels).unwrap();
            let numeric = (lp - lm) / (vp - vm);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
            report.worst = report.worst.max(rel);
            report.checked += 1;
            assert!(
                rel < TOL,
                "layer {l} param {idx}: analytic {analytic:e} vs numeric {numeric:e} (rel {rel:e})"
            );
        }
    }
    report
}

#[test]
fn conv_relu_pool_dense_gradients_match_finite_differences() {
    for seed in 0..4 {
        let m = random_model(conv_arch(), seed);
        let inputs = random_inputs(&m, 3, seed + 100);
        let labels = random_labels(&m, 3, seed);
        let r = check(&m, &inputs, &labels);
        assert!(r.checked > 10 * r.skipped.max(1), "too many kinks: {} skipped", r.skipped);
        assert!(r.worst < TOL);
    }
}

#[test]
fn dense_relu_dense_gradients_match_finite_differences() {
    for seed in 0..4 {
        let m = random_model(mlp_arch(), seed);
        let inputs = random_inputs(&m, 4, seed + 7);
        let labels = random_labels(&m, 4, seed);
        let r = check(&m, &inputs, &labels);
        assert!(r.checked >= 50);
    }
}

#[test]
fn masked_channels_get_zero_gradient_and_others_still_match() {
    let mut m = random_model(conv_arch(), 9);
    m.set_channel_active(ChannelId::new(0, 1), false).unwrap();
    m.set_channel_active(ChannelId::new(4, 2), false).unwrap();
    let inputs = random_inputs(&m, 3, 1);
    let labels = random_labels(&m, 3, 1);
    let (_, grads) = backward(&m, &batch(&m, &inputs), &labels).unwrap();
    for ch in [ChannelId::new(0, 1), ChannelId::new(4, 2)] {
        assert!(grads.channel(&m, ch).unwrap().iter().all(|&g| g == 0.0));
    }
    check(&m, &inputs, &labels);
}

#[test]
fn frozen_channels_still_receive_gradients() {
    let mut m = random_model(mlp_arch(), 3);
    m.set_all_trainable(false);
    let inputs = random_inputs(&m, 4, 2);
    let labels = random_labels(&m, 4, 2);
    let (_, grads) = backward(&m, &batch(&m, &inputs), &labels).unwrap();
    assert!(grads.max_abs() > 0.0);
}

#[test]
fn reference_architecture_gradients_spot_check() {
    let arch = Architecture::reference([1, 12, 12], 3).unwrap();
    let m = random_model(arch, 5);
    let inputs = random_inputs(&m, 2, 5);
    let labels = random_labels(&m, 2, 5);
    let r = check(&m, &inputs, &labels);
    assert!(r.checked > 1000);
}
