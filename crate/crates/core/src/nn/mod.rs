//! Micro neural-network engine with an explicit output-channel abstraction.
//!
//! Parameters are stored as `f32`; activations, losses and gradients are
//! computed in `f64`. Every parameterized layer (`conv2d`, `dense`) exposes
//! its output channels: a conv filter or a dense output unit, together with
//! the bias entry that belongs to it. Each channel carries two flags:
//!
//! - the *channel mask*: a masked channel's output is forced to exactly zero
//!   (pruning by ablation, reversible in O(1));
//! - the *trainable mask*: a frozen channel's parameters are never touched by
//!   [`Model::sgd_step`].

mod engine;
mod grad;
mod layer;
mod model;

pub use engine::{backward, forward, forward_trace, loss, predict, ForwardMeter};
pub(crate) use engine::{argmax, batch_gradient, sample_loss, Compiled, Workspace};
pub use grad::{GradientSet, LayerGrad};
pub use layer::{Architecture, Layer, LayerKind, LayerSpec};
pub use model::{ChannelId, Model};
