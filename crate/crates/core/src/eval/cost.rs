//! Analytic cost model.
//!
//! Units: `f` is one full-model forward pass over one batch, one
//! backpropagation step costs at most `5f`, `g` is one aggregation, `c` is
//! one serialized full-model transfer, `s` is one training-set sample. The
//! scale parameter `n` stands for every loop count at once (global rounds,
//! clients, local epochs, batches).
//!
//! All formulas are generic over the numeric type so they can be evaluated
//! exactly with rationals as well as with `f64`.

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScheme {
    Retrain,
    Decentralized,
    Centralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams<T> {
    pub n: T,
    pub delta: T,
    pub f: T,
    pub g: T,
    pub c: T,
    pub s: T,
    pub class_count: T,
    /// Share of the training data the server keeps for centralized unlearning.
    pub ce_storage_fraction: T,
}

impl Default for CostModelParams<f64> {
    fn default() -> Self {
        Self {
            n: 10.0,
            delta: 0.05,
            f: 1.0,
            g: 0.0,
            c: 1.0,
            s: 1.0,
            class_count: 10.0,
            ce_storage_fraction: 0.05,
        }
    }
}

impl<T: Num + Copy + PartialOrd> CostModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let positive = [self.n, self.f, self.c, self.s, self.class_count];
        if positive.iter().any(|&v| !(v > zero)) || !(self.g >= zero) {
            return Err(Error::config("cost parameters must be positive (g non-negative)"));
        }
        if !(self.delta > zero && self.delta <= T::one()) {
            return Err(Error::config("delta must lie in (0, 1]"));
        }
        if !(self.ce_storage_fraction > zero && self.ce_storage_fraction <= T::one()) {
            return Err(Error::config("server data fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn int<T: Num + Copy>(k: u32) -> T {
    (0..k).fold(T::zero(), |acc, _| acc + T::one())
}

/// Cost of one forward plus a backward restricted to a `δ` share of channels.
fn partial_step<T: Num + Copy>(p: &CostModelParams<T>) -> T {
    p.f * (T::one() + int::<T>(5) * p.delta)
}

/// Retrain `n(n³·6f + g)`, DE `n(n³·f(1+5δ) + g)`, CE `n²·f(1+5δ)`.
pub fn cost_computation<T: Num + Copy>(p: &CostModelParams<T>, scheme: CostScheme) -> T {
    let n = p.n;
    let n3 = n * n * n;
    match scheme {
        CostScheme::Retrain => n * (n3 * int::<T>(6) * p.f + p.g),
        CostScheme::Decentralized => n * (n3 * partial_step(p) + p.g),
        CostScheme::Centralized => n * n * partial_step(p),
    }
}

/// Retrain `2n²c`, DE `2n²cδ`, CE 0.
pub fn cost_communication<T: Num + Copy>(p: &CostModelParams<T>, scheme: CostScheme) -> T {
    let base = int::<T>(2) * p.n * p.n * p.c;
    match scheme {
        CostScheme::Retrain => base,
        CostScheme::Decentralized => base * p.delta,
        CostScheme::Centralized => T::zero(),
    }
}

/// Retrain and DE keep the remaining data, `(|Y| − 1)/|Y|·s`; CE keeps the
/// configured server share.
pub fn cost_storage<T: Num + Copy>(p: &CostModelParams<T>, scheme: CostScheme) -> T {
    match scheme {
        CostScheme::Retrain | CostScheme::Decentralized => {
            (p.class_count - T::one()) / p.class_count * p.s
        }
        CostScheme::Centralized => p.ce_storage_fraction * p.s,
    }
}

/// Retraining cost without collapsing the loop counts into `n`:
/// `E_global(N_user·E_local·N_batch·6f + g)`.
pub fn retrain_computation_uncompressed<T: Num + Copy>(
    global_epochs: T,
    users: T,
    local_epochs: T,
    batches: T,
    f: T,
    g: T,
) -> T {
    global_epochs * (users * local_epochs * batches * int::<T>(6) * f + g)
}

/// Per-step speed-up of DE over retraining with free aggregation, `6/(1+5δ)`.
pub fn de_speedup<T: Num + Copy>(delta: T) -> T {
    int::<T>(6) / (T::one() + int::<T>(5) * delta)
}

/// Retrain computation over CE computation.
pub fn ce_speedup<T: Num + Copy>(p: &CostModelParams<T>) -> T {
    cost_computation(p, CostScheme::Retrain) / cost_computation(p, CostScheme::Centralized)
}

/// Measured CE storage share: server samples over training samples.
pub fn measured_storage_fraction(server_samples: usize, training_samples: usize) -> f64 {
    server_samples as f64 / training_samples as f64
}
