//! Procedural handwritten-style digits.
//!
//! Each class is a fixed set of pen strokes in the unit square. A sample
//! jitters every stroke vertex, applies a random affine warp (rotation,
//! anisotropic scale, shear, translation), rasterises the strokes with a
//! random pen width and antialiased edges, and finally adds pixel noise and
//! an occasional stray stroke. The result is MNIST-like: single-channel,
//! intensities in `[0, 1]`, ten balanced classes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;

type Point = (f64, f64);
type Stroke = Vec<Point>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let steps = (((to_deg - from_deg).abs() / 15.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|i| {
            let t = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64) * PI / 180.0;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

fn line(points: &[Point]) -> Stroke {
    points.to_vec()
}

/// Pen strokes per digit, x to the right and y downwards.
fn glyph(class: usize) -> Vec<Stroke> {
    match class {
        0 => vec![arc(0.5, 0.5, 0.2, 0.3, 0.0, 360.0)],
        1 => vec![line(&[(0.38, 0.3), (0.52, 0.18), (0.52, 0.82)])],
        2 => vec![
            arc(0.5, 0.36, 0.18, 0.16, 190.0, 380.0),
            line(&[(0.66, 0.42), (0.3, 0.82), (0.72, 0.82)]),
        ],
        3 => vec![
            arc(0.48, 0.34, 0.16, 0.15, 210.0, 450.0),
            arc(0.48, 0.66, 0.19, 0.17, 270.0, 510.0),
        ],
        4 => vec![
            line(&[(0.6, 0.18), (0.28, 0.6), (0.76, 0.6)]),
            line(&[(0.62, 0.36), (0.62, 0.85)]),
        ],
        5 => vec![
            line(&[(0.7, 0.18), (0.36, 0.18), (0.34, 0.47)]),
            arc(0.48, 0.63, 0.19, 0.18, 240.0, 500.0),
        ],
        6 => vec![
            line(&[(0.64, 0.18), (0.38, 0.45), (0.32, 0.62)]),
            arc(0.5, 0.64, 0.18, 0.18, 0.0, 360.0),
        ],
        7 => vec![line(&[(0.28, 0.2), (0.72, 0.2), (0.44, 0.84)])],
        8 => vec![
            arc(0.5, 0.33, 0.15, 0.14, 0.0, 360.0),
            arc(0.5, 0.66, 0.18, 0.17, 0.0, 360.0),
        ],
        9 => vec![
            arc(0.5, 0.36, 0.17, 0.16, 0.0, 360.0),
            line(&[(0.67, 0.38), (0.6, 0.84)]),
        ],
        _ => unreachable!("glyph classes are 0..10"),
    }
}

/// Generator settings; the defaults give desk-scale 28×28 digits.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDigits {
    pub side: usize,
    pub vertex_jitter: f64,
    pub max_rotation: f64,
    pub max_shear: f64,
    pub max_shift: f64,
    pub noise_std: f64,
    pub stray_stroke_prob: f64,
}

impl Default for SyntheticDigits {
    fn default() -> Self {
        Self {
            side: 28,
            vertex_jitter: 0.045,
            max_rotation: 0.3,
            max_shear: 0.25,
            max_shift: 0.08,
            noise_std: 0.12,
            stray_stroke_prob: 0.35,
        }
    }
}

pub const CLASS_COUNT: usize = 10;

impl SyntheticDigits {
    /// `count` samples with labels cycling 0..9, fully determined by `seed`.
    pub fn generate(&self, count: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = self.side;
        let mut inputs = Vec::with_capacity(count * side * side);
        let mut labels = Vec::with_capacity(count);
        let mut canvas = vec![0f32; side * side];
        for i in 0..count {
            let class = i % CLASS_COUNT;
            self.render(class, &mut rng, &mut canvas);
            inputs.extend_from_slice(&canvas);
            labels.push(class);
        }
        LabeledDataset::from_parts(vec![1, side, side], CLASS_COUNT, inputs, labels)
            .expect("generator output is well-formed")
    }

    fn render(&self, class: usize, rng: &mut ChaCha8Rng, canvas: &mut [f32]) {
        let side = self.side as f64;
        let rot = rng.random_range(-self.max_rotation..=self.max_rotation);
        let sx = rng.random_range(0.8..1.1);
        let sy = rng.random_range(0.85..1.1);
        let shear = rng.random_range(-self.max_shear..=self.max_shear);
        let tx = rng.random_range(-self.max_shift..=self.max_shift);
        let ty = rng.random_range(-self.max_shift..=self.max_shift);
        let (s, c) = rot.sin_cos();
        let warp = |(x, y): Point| -> Point {
            let (x, y) = (x - 0.5, y - 0.5);
            let (x, y) = (x * sx + shear * y, y * sy);
            let (x, y) = (c * x - s * y, s * x + c * y);
            ((x + 0.5 + tx) * side - 0.5, (y + 0.5 + ty) * side - 0.5)
        };

        let mut segments: Vec<(Point, Point)> = Vec::new();
        for stroke in glyph(class) {
            let pts: Vec<Point> = stroke
                .iter()
                .map(|&(x, y)| {
                    let jx = rng.random_range(-self.vertex_jitter..=self.vertex_jitter);
                    let jy = rng.random_range(-self.vertex_jitter..=self.vertex_jitter);
                    warp((x + jx, y + jy))
                })
                .collect();
            segments.extend(pts.windows(2).map(|w| (w[0], w[1])));
        }
        let pen = rng.random_range(0.7..1.6);
        let mut stray: Vec<(Point, Point)> = Vec::new();
        if rng.random_bool(self.stray_stroke_prob) {
            let a = (rng.random_range(0.0..side), rng.random_range(0.0..side));
            let len = rng.random_range(3.0..8.0);
            let ang: f64 = rng.random_range(0.0..2.0 * PI);
            stray.push((a, (a.0 + len * ang.cos(), a.1 + len * ang.sin())));
        }

        for py in 0..self.side {
            for px in 0..self.side {
                let p = (px as f64, py as f64);
                let d = segments
                    .iter()
                    .map(|&(a, b)| seg_dist(p, a, b))
                    .fold(f64::INFINITY, f64::min);
                let mut v = (pen + 0.5 - d).clamp(0.0, 1.0);
                if let Some(&(a, b)) = stray.first() {
                    v = v.max((0.9 - seg_dist(p, a, b)).clamp(0.0, 0.7));
                }
                let noise: f64 = rng.sample(StandardNormal);
                v = (v + self.noise_std * noise).clamp(0.0, 1.0);
                canvas[py * self.side + px] = v as f32;
            }
        }
    }
}

fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}
