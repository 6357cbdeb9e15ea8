//! Class-level unlearning.
//!
//! Clients first delete the target class from their local data and turn the
//! deleted inputs into perturbation samples carrying random wrong labels.
//! Unlearning then fine-tunes only the influential channel set `T`, either
//! through federated rounds that exchange nothing but `T`
//! ([`decentralized_unlearn`]) or on the server with a small local dataset
//! ([`centralized_unlearn`]). Every other parameter keeps its exact bits.

mod centralized;
mod decentralized;
mod deletion;
mod mix;
mod perturbation;

pub use centralized::{centralized_unlearn, CentralConfig};
pub use decentralized::decentralized_unlearn;
pub use deletion::delete_class;
pub use mix::{mix_batches, MixedStream};
pub use perturbation::{make_perturbation_set, PerturbationSet};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::InfluentialSet;
use crate::fedsim::RoundReport;
use crate::nn::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlearningRequest {
    pub target_class: usize,
    pub requested_at_round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    #[serde(alias = "de")]
    Decentralized,
    #[serde(alias = "ce")]
    Centralized,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Decentralized => "de",
            Scheme::Centralized => "ce",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "de" | "decentralized" => Ok(Scheme::Decentralized),
            "ce" | "centralized" => Ok(Scheme::Centralized),
            other => Err(Error::config(format!("unknown unlearning scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlearningPlan {
    pub request: UnlearningRequest,
    pub influential: InfluentialSet,
    pub scheme: Scheme,
    pub unlearn_epochs: usize,
    /// Share of perturbation samples in each epoch's stream; `None` uses
    /// each data holder's own `|D^u| / (|D^r| + |D^u|)`.
    pub perturbation_ratio: Option<f64>,
    /// Overrides the scheme's default learning rate.
    pub learning_rate: Option<f64>,
}

impl UnlearningPlan {
    pub(crate) fn check(&self, model: &Model, scheme: Scheme) -> Result<()> {
        if self.scheme != scheme {
            return Err(Error::Plan(format!(
                "plan is for scheme {}, not {scheme}",
                self.scheme
            )));
        }
        if self.request.target_class >= model.class_count() {
            return Err(Error::Plan(format!(
                "target class {} outside [0, {})",
                self.request.target_class,
                model.class_count()
            )));
        }
        if self.influential.is_empty() {
            return Err(Error::Plan("influential set is empty".into()));
        }
        self.influential.validate(model)?;
        if let Some(r) = self.perturbation_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!(
                    "perturbation_ratio must lie in [0, 1], got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Default perturbation share: the holder's own fraction of deleted samples.
pub fn natural_ratio(remaining: usize, removed: usize) -> f64 {
    if remaining + removed == 0 {
        0.0
    } else {
        removed as f64 / (remaining + removed) as f64
    }
}

/// Effective ratio for one data holder: holders without perturbation data
/// train on remaining data only, holders without remaining data on
/// perturbation data only.
pub(crate) fn holder_ratio(requested: Option<f64>, remaining: usize, removed: usize) -> f64 {
    if removed == 0 {
        0.0
    } else if remaining == 0 {
        1.0
    } else {
        requested.unwrap_or_else(|| natural_ratio(remaining, removed))
    }
}

/// Model and traffic per unlearning epoch.
#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    pub model: Model,
    /// One report per completed epoch; CE reports zero traffic.
    pub epochs: Vec<RoundReport>,
}
