//! The probabilistic termination rule.
//!
//! A partially trained configuration is stopped when the predicted final
//! score, modelled as `N(y_hat, sigma)`, falls below a reference score with
//! probability at least `delta_threshold`. The reference is the `top_n`-th
//! best finished score minus an `offset`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every uncertainty estimate.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;

/// `Phi((x - mean) / std)`.
pub fn normal_cdf(x: f64, mean: f64, std: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::precondition(format!("standard deviation must be positive, got {std}")));
    }
    let z = (x - mean) / std;
    Ok(0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationPolicy {
    /// Probability required before terminating, in (0, 1).
    pub delta_threshold: f64,
    /// Slack subtracted from the reference score.
    pub offset: f64,
    /// Compare against the n-th best finished score.
    pub top_n: usize,
    pub sigma_floor: f64,
}

impl TerminationPolicy {
    pub fn new(delta_threshold: f64) -> Result<Self> {
        let p = TerminationPolicy { delta_threshold, ..Default::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_top_n(mut self, top_n: usize) -> Self {
        self.top_n = top_n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_threshold > 0.0 && self.delta_threshold < 1.0) {
            return Err(Error::invalid(format!("delta threshold must lie in (0, 1), got {}", self.delta_threshold)));
        }
        if !(self.offset >= 0.0) {
            return Err(Error::invalid(format!("offset must be nonnegative, got {}", self.offset)));
        }
        if self.top_n == 0 {
            return Err(Error::invalid("top_n must be at least 1"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::invalid("sigma floor must be positive"));
        }
        Ok(())
    }
}

impl Default for TerminationPolicy {
    fn default() -> Self {
        TerminationPolicy { delta_threshold: 0.99, offset: 0.0, top_n: 1, sigma_floor: DEFAULT_SIGMA_FLOOR }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Continue,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    /// `Phi(reference; y_hat, sigma)`, or 0 when there is no reference yet.
    pub probability: f64,
    /// `None` stands for the minus-infinity sentinel.
    pub reference: Option<f64>,
}

impl Decision {
    pub fn terminate(&self) -> bool {
        self.action == Action::Terminate
    }
}

/// Decides whether to stop a configuration predicted at `y_hat +- sigma`.
///
/// `best_values` holds finished scores in descending order.
pub fn should_terminate(policy: &TerminationPolicy, y_hat: f64, sigma: f64, best_values: &[f64]) -> Result<Decision> {
    if !y_hat.is_finite() {
        return Err(Error::invalid(format!("prediction {y_hat} is not finite")));
    }
    if !(sigma >= policy.sigma_floor) {
        return Err(Error::precondition(format!("sigma {sigma} is below the floor {}", policy.sigma_floor)));
    }
    let reference = best_values.get(policy.top_n - 1).copied().filter(|v| v.is_finite()).map(|v| v - policy.offset);
    let Some(reference) = reference else {
        return Ok(Decision { action: Action::Continue, probability: 0.0, reference: None });
    };
    let probability = normal_cdf(reference, y_hat, sigma)?;
    let action = if probability >= policy.delta_threshold { Action::Terminate } else { Action::Continue };
    Ok(Decision { action, probability, reference: Some(reference) })
}

/// Finished scores in descending order; equal scores keep insertion order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BestScores {
    values: Vec<f64>,
    capacity: Option<usize>,
}

impl BestScores {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps at most `capacity` entries (the smallest are dropped).
    pub fn with_capacity_limit(capacity: usize) -> Self {
        BestScores { values: Vec::new(), capacity: Some(capacity) }
    }

    pub fn from_scores(scores: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut b = BestScores::new();
        for s in scores {
            b.update(s)?;
        }
        Ok(b)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn best(&self) -> Option<f64> {
        self.values.first().copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn update(&mut self, score: f64) -> Result<()> {
        self.values = update_best(core::mem::take(&mut self.values), score)?;
        if let Some(cap) = self.capacity {
            self.values.truncate(cap);
        }
        Ok(())
    }
}

/// Inserts `score` into a descending list, after any equal entries.
pub fn update_best(mut ledger: Vec<f64>, score: f64) -> Result<Vec<f64>> {
    if score.is_nan() {
        return Err(Error::invalid("cannot record a NaN score"));
    }
    let at = ledger.partition_point(|&v| v >= score);
    ledger.insert(at, score);
    Ok(ledger)
}
