//! Composite reward and per-benchmark z-normalization.
//!
//! The reward scores one response as `alpha * r_acc - beta * e_hat -
//! gamma * l_hat - delta * c_hat`, where the hatted quantities are energy,
//! latency, and cost z-normalized over the evaluated benchmark. Accuracy
//! stays raw in [0, 1]; only the resource axes are normalized. This module
//! only scores; nothing here triggers training.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::TelemetryRecord;

/// Errors from fitting or applying the reward.
#[derive(Debug, Error)]
pub enum RewardError {
    #[error("cannot fit normalization over an empty record set")]
    EmptyInput,
    #[error("non-finite {quantity} value in record set")]
    NonFinite { quantity: &'static str },
    #[error("invalid reward weights: {0}")]
    InvalidWeights(String),
}

/// Objective weights (alpha, beta, gamma, delta) for accuracy, energy,
/// latency, and cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 0.5,
            beta: 0.1,
            gamma: 0.1,
            delta: 0.3,
        }
    }
}

impl RewardWeights {
    /// All weights must be finite and nonnegative, and at least one nonzero.
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.alpha, self.beta, self.gamma, self.delta];
        if all.iter().any(|w| !w.is_finite()) {
            return Err("weights must be finite".to_string());
        }
        if all.iter().any(|w| *w < 0.0) {
            return Err("weights must be nonnegative".to_string());
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err("at least one weight must be nonzero".to_string());
        }
        Ok(())
    }
}

/// Mean and population standard deviation of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    /// Population statistics: `std = sqrt(sum((x - mean)^2) / n)`.
    pub fn fit(values: &[f64], quantity: &'static str) -> Result<Moments, RewardError> {
        if values.is_empty() {
            return Err(RewardError::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RewardError::NonFinite { quantity });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Moments {
            mean,
            std: var.sqrt(),
        })
    }

    /// `(x - mean) / std`; a degenerate column (`std == 0`) normalizes to
    /// exactly 0 for every input, since it carries no ranking signal.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.std == 0.0 {
            0.0
        } else {
            (x - self.mean) / self.std
        }
    }
}

/// Per-quantity normalization statistics over one evaluated benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub energy: Moments,
    pub latency: Moments,
    pub cost: Moments,
}

/// Fits population moments for energy, latency, and cost over the records.
pub fn fit_normalization(records: &[TelemetryRecord]) -> Result<NormalizationStats, RewardError> {
    if records.is_empty() {
        return Err(RewardError::EmptyInput);
    }
    let column = |f: fn(&TelemetryRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    Ok(NormalizationStats {
        energy: Moments::fit(&column(|r| r.energy_j), "energy")?,
        latency: Moments::fit(&column(|r| r.latency_s), "latency")?,
        cost: Moments::fit(&column(|r| r.cost_usd), "cost")?,
    })
}

/// The composite reward: `alpha * r_acc - beta * e_hat - gamma * l_hat -
/// delta * c_hat`.
pub fn composite_reward(r_acc: f64, e_hat: f64, l_hat: f64, c_hat: f64, w: &RewardWeights) -> f64 {
    w.alpha * r_acc - w.beta * e_hat - w.gamma * l_hat - w.delta * c_hat
}

/// Scores one record against fitted stats: accuracy raw, resources
/// normalized.
pub fn reward_for_record(
    record: &TelemetryRecord,
    stats: &NormalizationStats,
    w: &RewardWeights,
) -> f64 {
    composite_reward(
        record.accuracy,
        stats.energy.normalize(record.energy_j),
        stats.latency.normalize(record.latency_s),
        stats.cost.normalize(record.cost_usd),
        w,
    )
}
