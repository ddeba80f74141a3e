use serde::{Deserialize, Serialize};

use crate::grid::Action;

/// Probability vector over the six actions, indexed by `Action::index`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution(pub [f64; Action::COUNT]);

impl ActionDistribution {
    pub fn zero() -> Self {
        ActionDistribution([0.0; Action::COUNT])
    }

    pub fn prob(&self, a: Action) -> f64 {
        self.0[a.index()]
    }

    /// Highest-probability action; ties go to the earlier action.
    pub fn argmax(&self) -> Action {
        let mut best = 0;
        for i in 1..Action::COUNT {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub(crate) fn add_scaled(&mut self, other: &ActionDistribution, w: f64) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += w * b;
        }
    }

    pub(crate) fn normalize(&mut self) {
        let s = self.sum();
        if s > 0.0 {
            self.0.iter_mut().for_each(|p| *p /= s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Action, f64)> + '_ {
        Action::ALL.into_iter().zip(self.0)
    }
}

/// Turns a deterministic program action into a distribution: `1 - ε` on
/// the chosen action and `ε / 5` on each other one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub epsilon: f64,
    pub min_action_prob: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { epsilon: 0.05, min_action_prob: 1e-8 }
    }
}

impl NoiseModel {
    pub fn new(epsilon: f64) -> Self {
        NoiseModel { epsilon, ..NoiseModel::default() }
    }

    pub fn is_valid(&self) -> bool {
        self.epsilon > 0.0 && self.epsilon < 1.0 && self.min_action_prob >= 0.0
    }

    /// `p(observed | program chose `chosen`)`.
    pub fn likelihood(&self, chosen: Action, observed: Action) -> f64 {
        let p = if chosen == observed { 1.0 - self.epsilon } else { self.epsilon / (Action::COUNT - 1) as f64 };
        p.max(self.min_action_prob)
    }

    pub fn distribution(&self, chosen: Action) -> ActionDistribution {
        let mut d = ActionDistribution::zero();
        for a in Action::ALL {
            d.0[a.index()] = self.likelihood(chosen, a);
        }
        d.normalize();
        d
    }
}
