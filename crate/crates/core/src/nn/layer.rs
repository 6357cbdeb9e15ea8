use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    Dense,
    Activation,
    Pool,
    Flatten,
}

/// Declarative description of one layer; the JSON form is the checkpoint's
/// architecture descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) stride-1 convolution, weights `out × in × k × k`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    /// Fully connected layer, weights `out × in`.
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    /// Non-overlapping max pooling; trailing rows/columns that do not fill a
    /// window are dropped.
    MaxPool { size: usize },
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Relu => LayerKind::Activation,
            LayerSpec::MaxPool { .. } => LayerKind::Pool,
            LayerSpec::Flatten => LayerKind::Flatten,
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn out_channel_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { out_channels, .. } => out_channels,
            LayerSpec::Dense { out_features, .. } => out_features,
            _ => 0,
        }
    }

    /// Number of weights feeding one output channel.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerSpec::Dense { in_features, .. } => in_features,
            _ => 0,
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => vec![out_channels, in_channels, kernel, kernel],
            LayerSpec::Dense {
                in_features,
                out_features,
            } => vec![out_features, in_features],
            _ => vec![0],
        }
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => {
                let [c, h, w] = expect_chw(input, "conv2d")?;
                if c != in_channels {
                    return Err(Error::dim(format!(
                        "conv2d expects {in_channels} input channels, got {c}"
                    )));
                }
                if kernel == 0 || kernel > h || kernel > w {
                    return Err(Error::dim(format!(
                        "kernel {kernel} does not fit a {h}x{w} input"
                    )));
                }
                Ok(vec![out_channels, h - kernel + 1, w - kernel + 1])
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if input.len() != 1 || input[0] != in_features {
                    return Err(Error::dim(format!(
                        "dense expects a flat input of {in_features}, got {input:?}"
                    )));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool { size } => {
                let [c, h, w] = expect_chw(input, "max_pool")?;
                if size == 0 || size > h || size > w {
                    return Err(Error::dim(format!(
                        "pool size {size} does not fit a {h}x{w} input"
                    )));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

fn expect_chw(shape: &[usize], what: &str) -> Result<[usize; 3]> {
    match *shape {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::dim(format!(
            "{what} expects a (channels, height, width) input, got {shape:?}"
        ))),
    }
}

/// Input shape plus the ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// conv(8,3×3) → ReLU → pool → conv(16,3×3) → ReLU → pool → dense(64) → ReLU → dense(classes).
    pub fn reference(input_shape: [usize; 3], class_count: usize) -> Result<Self> {
        let [c, h, w] = input_shape;
        let after1 = ((h - 2) / 2, (w - 2) / 2);
        if after1.0 < 3 || after1.1 < 3 {
            return Err(Error::dim(format!(
                "input {h}x{w} is too small for the reference architecture"
            )));
        }
        let after2 = ((after1.0 - 2) / 2, (after1.1 - 2) / 2);
        let flat = 16 * after2.0 * after2.1;
        let arch = Self {
            input_shape: input_shape.to_vec(),
            layers: vec![
                LayerSpec::Conv2d {
                    in_channels: c,
                    out_channels: 8,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Conv2d {
                    in_channels: 8,
                    out_channels: 16,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: flat,
                    out_features: 64,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_features: 64,
                    out_features: class_count,
                },
            ],
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Output shape of every layer, in order. Fails on any inconsistency.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::dim(format!(
                "invalid input shape {:?}",
                self.input_shape
            )));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer
                .output_shape(&cur)
                .map_err(|e| Error::dim(format!("layer {i}: {e}")))?;
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.layer_shapes()?;
        match shapes.last() {
            Some(s) if s.len() == 1 && s[0] >= 2 => Ok(()),
            Some(s) => Err(Error::dim(format!(
                "final layer must produce at least two class logits, got {s:?}"
            ))),
            None => Err(Error::dim("architecture has no layers")),
        }
    }

    pub fn class_count(&self) -> usize {
        self.layer_shapes()
            .ok()
            .and_then(|s| s.last().map(|l| l[0]))
            .unwrap_or(0)
    }
}

/// One layer with its parameters. Parameter-free layers hold empty tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) spec: LayerSpec,
    pub(crate) weights: Tensor,
    pub(crate) bias: Tensor,
}

impl Layer {
    pub(crate) fn zeroed(spec: LayerSpec) -> Self {
        if spec.is_parameterized() {
            let weights = Tensor::zeros(spec.weight_shape());
            let bias = Tensor::zeros(vec![spec.out_channel_count()]);
            Self {
                spec,
                weights,
                bias,
            }
        } else {
            Self {
                spec,
                weights: Tensor::empty(),
                bias: Tensor::empty(),
            }
        }
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn kind(&self) -> LayerKind {
        self.spec.kind()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn out_channel_count(&self) -> usize {
        self.spec.out_channel_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shapes_for_28x28() {
        let arch = Architecture::reference([1, 28, 28], 10).unwrap();
        let shapes = arch.layer_shapes().unwrap();
        assert_eq!(shapes[0], vec![8, 26, 26]);
        assert_eq!(shapes[2], vec![8, 13, 13]);
        assert_eq!(shapes[3], vec![16, 11, 11]);
        assert_eq!(shapes[5], vec![16, 5, 5]);
        assert_eq!(shapes[6], vec![400]);
        assert_eq!(shapes.last().unwrap(), &vec![10]);
        assert_eq!(arch.class_count(), 10);
    }

    #[test]
    fn mismatched_dense_input_is_rejected() {
        let arch = Architecture {
            input_shape: vec![4],
            layers: vec![LayerSpec::Dense {
                in_features: 5,
                out_features: 2,
            }],
        };
        assert!(matches!(arch.validate(), Err(Error::Dimension(_))));
    }

    #[test]
    fn descriptor_json_is_tagged() {
        let spec = LayerSpec::MaxPool { size: 2 };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"max_pool","size":2}"#);
    }
}
