#![allow(dead_code)]

use fedunlearn::data::LabeledDataset;
use fedunlearn::nn::LayerSpec;
use fedunlearn::{Architecture, Model, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// conv(2→3, k3) → relu → pool2 → flatten → dense(12→4) on 2×6×6 inputs.
pub fn conv_arch() -> Architecture {
    Architecture {
        input_shape: vec![2, 6, 6],
        layers: vec![
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel: 3,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                in_features: 12,
                out_features: 4,
            },
        ],
    }
}

/// dense(5→6) → relu → dense(6→3).
pub fn mlp_arch() -> Architecture {
    Architecture {
        input_shape: vec![5],
        layers: vec![
            LayerSpec::Dense {
                in_features: 5,
                out_features: 6,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                in_features: 6,
                out_features: 3,
            },
        ],
    }
}

/// He-initialised weights plus small random biases.
pub fn random_model(arch: Architecture, seed: u64) -> Model {
    let mut m = Model::init(arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let layers: Vec<usize> = m.parameterized_layers().collect();
    for l in layers {
        for b in m.layer_params_mut(l).1 {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    m
}

pub fn random_inputs(model: &Model, n: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..model.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn batch(model: &Model, inputs: &[Vec<f32>]) -> Tensor {
    let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
    Tensor::stack(&refs, model.input_shape()).unwrap()
}

pub fn random_labels(model: &Model, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1abe1);
    (0..n).map(|_| rng.random_range(0..model.class_count())).collect()
}

/// Random labeled dataset shaped for `model`.
pub fn random_dataset(model: &Model, n: usize, seed: u64) -> LabeledDataset {
    let inputs = random_inputs(model, n, seed);
    let labels = random_labels(model, n, seed);
    LabeledDataset::from_parts(
        model.input_shape().to_vec(),
        model.class_count(),
        inputs.concat(),
        labels,
    )
    .unwrap()
}
