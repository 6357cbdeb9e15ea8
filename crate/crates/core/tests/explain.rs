//! Channel effects and influential-channel selection.

mod common;

use common::*;
use fedunlearn::data::LabeledDataset;
use fedunlearn::explain::{
    channel_effect, effect_sweep, effect_sweep_metered, select_influential, select_non_important,
    select_random, selection_count, ChannelEffect, ProbeSet,
};
use fedunlearn::nn::{ForwardMeter, LayerSpec};
use fedunlearn::{Architecture, ChannelId, Error, Model};
use proptest::prelude::*;

fn probe_for(model: &Model, n: usize, target: usize, seed: u64) -> ProbeSet {
    let data = random_dataset(model, n, seed);
    let inputs: Vec<f32> = data.iter().flat_map(|(x, _)| x.to_vec()).collect();
    let samples = LabeledDataset::from_parts(
        model.input_shape().to_vec(),
        model.class_count(),
        inputs,
        vec![target; n],
    )
    .unwrap();
    ProbeSet::new(model, samples, target).unwrap()
}

/// dense(4→2) → relu → dense(2→3).
fn two_unit_arch() -> Architecture {
    Architecture {
        input_shape: vec![4],
        layers: vec![
            LayerSpec::Dense {
                in_features: 4,
                out_features: 2,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                in_features: 2,
                out_features: 3,
            },
        ],
    }
}

/// Hand-written forward of the two-unit MLP keeping only hidden units in
/// `keep`; returns the predicted class.
fn rebuilt_predict(m: &Model, keep: &[usize], x: &[f32]) -> usize {
    let hidden: Vec<f64> = (0..2)
        .map(|h| {
            let row = m.channel_values(ChannelId::new(0, h)).unwrap();
            let z = row[4] as f64 + (0..4).map(|i| row[i] as f64 * x[i] as f64).sum::<f64>();
            if keep.contains(&h) { z.max(0.0) } else { 0.0 }
        })
        .collect();
    let logits: Vec<f64> = (0..3)
        .map(|o| {
            let row = m.channel_values(ChannelId::new(2, o)).unwrap();
            row[2] as f64 + keep.iter().map(|&h| row[h] as f64 * hidden[h]).sum::<f64>()
        })
        .collect();
    (0..3).fold(0, |best, k| if logits[k] > logits[best] { k } else { best })
}

#[test]
fn dead_channel_has_zero_effect() {
    let mut m = random_model(conv_arch(), 3);
    let dead = ChannelId::new(0, 1);
    m.set_channel_values(dead, &vec![0.0; m.channel_param_len(0)]).unwrap();
    let probe = probe_for(&m, 40, 2, 4);
    assert_eq!(channel_effect(&m, &probe, dead).unwrap().effect, 0.0);
}

#[test]
fn effect_matches_rebuilt_network() {
    for seed in 0..20 {
        let m = random_model(two_unit_arch(), seed);
        let target = (seed % 3) as usize;
        let probe = probe_for(&m, 60, target, seed + 100);
        let acc = |keep: &[usize]| {
            probe
                .samples()
                .iter()
                .filter(|(x, y)| rebuilt_predict(&m, keep, x) == *y)
                .count() as f64
                / 60.0
        };
        assert_eq!(probe.baseline_accuracy(), acc(&[0, 1]));
        for (h, keep) in [(0, [1]), (1, [0])] {
            let e = channel_effect(&m, &probe, ChannelId::new(0, h)).unwrap();
            assert!((e.effect - (acc(&[0, 1]) - acc(&keep))).abs() < 1e-12, "seed {seed} unit {h}");
        }
    }
}

#[test]
fn sweep_agrees_with_per_channel_definition() {
    for (arch, seed) in [(conv_arch(), 1), (mlp_arch(), 2), (conv_arch(), 9)] {
        let m = random_model(arch, seed);
        let probe = probe_for(&m, 50, 1, seed);
        let sweep = effect_sweep(&m, &probe).unwrap();
        let direct: Vec<ChannelEffect> = m
            .channels()
            .into_iter()
            .map(|ch| channel_effect(&m, &probe, ch).unwrap())
            .collect();
        assert_eq!(sweep, direct);
    }
}

#[test]
fn sweep_forward_count() {
    let m = random_model(conv_arch(), 5);
    let probe = probe_for(&m, 70, 0, 6);
    let meter = ForwardMeter::new();
    effect_sweep_metered(&m, &probe, 32, &meter).unwrap();
    assert_eq!(meter.count(), (m.total_channels() as u64 + 1) * 3);
}

#[test]
fn sweep_is_deterministic_and_leaves_model_untouched() {
    let m = random_model(conv_arch(), 7);
    let before = m.clone();
    let probe = probe_for(&m, 30, 3, 8);
    assert_eq!(effect_sweep(&m, &probe).unwrap(), effect_sweep(&m, &probe).unwrap());
    assert_eq!(m, before);
}

#[test]
fn stale_probe_is_rejected() {
    let m = random_model(mlp_arch(), 1);
    let probe = probe_for(&m, 10, 0, 2);
    let mut changed = m.clone();
    let ch = ChannelId::new(2, 0);
    let mut v = changed.channel_values(ch).unwrap();
    v[0] += 0.5;
    changed.set_channel_values(ch, &v).unwrap();
    assert!(matches!(effect_sweep(&changed, &probe), Err(Error::Config(_))));
    assert!(matches!(channel_effect(&changed, &probe, ch), Err(Error::Config(_))));
}

#[test]
fn probe_rejects_foreign_labels_and_empty_sets() {
    let m = random_model(mlp_arch(), 1);
    let mixed = random_dataset(&m, 30, 3);
    assert!(matches!(ProbeSet::new(&m, mixed.clone(), 0), Err(Error::Input(_))));
    assert!(matches!(ProbeSet::new(&m, mixed.empty_like(), 0), Err(Error::Config(_))));
}

fn effects(layer_sizes: &[(usize, usize)], values: &[f64]) -> Vec<ChannelEffect> {
    let mut it = values.iter();
    layer_sizes
        .iter()
        .flat_map(|&(l, n)| (0..n).map(move |c| ChannelId::new(l, c)))
        .map(|channel| ChannelEffect {
            channel,
            effect: *it.next().unwrap(),
        })
        .collect()
}

#[test]
fn important_and_non_important_arms_pick_extremes() {
    let e = effects(&[(0, 5), (3, 4)], &[0.1, 0.5, -0.2, 0.5, 0.0, 0.3, 0.9, 0.3, -0.1]);
    let top = select_influential(&e, 0.4).unwrap();
    assert_eq!(
        top.channels(),
        vec![ChannelId::new(0, 1), ChannelId::new(0, 3), ChannelId::new(3, 0), ChannelId::new(3, 1)]
    );
    let bottom = select_non_important(&e, 0.4).unwrap();
    assert!(bottom.contains(ChannelId::new(0, 2)) && bottom.contains(ChannelId::new(0, 4)));
    assert!(bottom.contains(ChannelId::new(3, 3)) && bottom.contains(ChannelId::new(3, 0)));
    assert_eq!(bottom.len(), 4);
}

#[test]
fn random_arm_is_uniform_over_channels() {
    let m = Model::zeros(mlp_arch()).unwrap();
    let mut hits = [0usize; 6];
    for seed in 0..1000 {
        let t = select_random(&m, 0.5, seed).unwrap();
        assert_eq!(t.len(), 3 + 2);
        for ch in t.channels().into_iter().filter(|ch| ch.layer == 0) {
            hits[ch.channel] += 1;
        }
    }
    for h in hits {
        assert!((450..=550).contains(&h), "{hits:?}");
    }
}

#[test]
fn random_arm_frequency_at_delta_point_three() {
    let arch = Architecture {
        input_shape: vec![3],
        layers: vec![LayerSpec::Dense {
            in_features: 3,
            out_features: 10,
        }],
    };
    let m = Model::zeros(arch).unwrap();
    let mut hits = [0usize; 10];
    for seed in 0..1000 {
        for ch in select_random(&m, 0.3, seed).unwrap().channels() {
            hits[ch.channel] += 1;
        }
    }
    for h in hits {
        assert!((250..=350).contains(&h), "{hits:?}");
    }
}

proptest! {
    #[test]
    fn selection_grows_with_delta(
        values in proptest::collection::vec(-1.0f64..1.0, 12),
        d1 in 0.01f64..1.0,
        d2 in 0.01f64..1.0,
    ) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let e = effects(&[(0, 8), (2, 4)], &values);
        let small = select_influential(&e, lo).unwrap();
        let large = select_influential(&e, hi).unwrap();
        for ch in small.channels() {
            prop_assert!(large.contains(ch));
        }
        for sel in &large.layers {
            let n = if sel.layer_index == 0 { 8 } else { 4 };
            prop_assert_eq!(sel.channels.len(), selection_count(hi, n));
            // every selected effect dominates every unselected one
            let min_in = sel.channels.iter().map(|&c| e.iter().find(|x| x.channel == ChannelId::new(sel.layer_index, c)).unwrap().effect).fold(f64::INFINITY, f64::min);
            let max_out = e.iter().filter(|x| x.channel.layer == sel.layer_index && !sel.channels.contains(&x.channel.channel)).map(|x| x.effect).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_in >= max_out);
        }
    }

    #[test]
    fn selection_size_follows_rounding_rule(delta in 0.001f64..=1.0, count in 1usize..600) {
        let k = selection_count(delta, count);
        prop_assert_eq!(k, ((delta * count as f64).round() as usize).max(1));
        prop_assert!(k >= 1 && k <= count);
    }
}
