//! Federated class unlearning driven by channel-level explanations.
//!
//! The crate simulates a cross-silo federation training a small CNN, scores
//! every channel by how much masking it hurts the class to be forgotten, and
//! then removes that class by retraining only the most influential channels,
//! either with the clients (decentralized) or on the server alone
//! (centralized).

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod fedsim;
pub mod nn;
pub mod seed;
pub mod tensor;
pub mod unlearn;

pub use error::{Error, Result};
pub use nn::{Architecture, ChannelId, Model};
pub use tensor::Tensor;
