//! Bayesian inference over candidate programs: likelihood, posterior,
//! rejuvenation, mixture prediction, rollout and transfer.

mod engine;
mod noise;
mod posterior;

pub use engine::{rejuvenate, Inference, Rejuvenation, InferenceReport, Rote, SynthesisSettings};
pub use noise::{ActionDistribution, NoiseModel};
pub use posterior::{fit_posterior, priors, replay, Hypothesis, HypothesisSet, Prediction, Replay};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// Replace persistently wrong programs with fresh samples.
    #[default]
    SmcRejuvenation,
    ImportanceSampling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub n_hypotheses: usize,
    pub top_k: usize,
    pub epsilon: f64,
    pub mode: InferenceMode,
    /// A program needs at least this many correct predictions in the
    /// window to be kept.
    pub rejuvenation_threshold: usize,
    pub window: usize,
    pub max_rejuvenation_attempts: u32,
    pub max_retries: u32,
    pub min_hypothesis_prob: f64,
    pub min_action_prob: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            n_hypotheses: 30,
            top_k: 30,
            epsilon: 0.05,
            mode: InferenceMode::SmcRejuvenation,
            rejuvenation_threshold: 1,
            window: 20,
            max_rejuvenation_attempts: 2,
            max_retries: 2,
            min_hypothesis_prob: 1e-6,
            min_action_prob: 1e-8,
        }
    }
}

impl InferenceConfig {
    pub fn noise(&self) -> NoiseModel {
        NoiseModel { epsilon: self.epsilon, min_action_prob: self.min_action_prob }
    }

    /// Resamples one slot may spend across repair and rejuvenation.
    pub fn retry_budget(&self) -> u32 {
        self.max_rejuvenation_attempts.min(self.max_retries)
    }

    pub fn validate(&self) -> Result<(), InferError> {
        let bad = |m: &str| Err(InferError::Config(m.to_string()));
        if self.n_hypotheses == 0 {
            return bad("n_hypotheses must be at least 1");
        }
        if self.top_k == 0 || self.top_k > self.n_hypotheses {
            return bad("top_k must be in 1..=n_hypotheses");
        }
        if !self.noise().is_valid() {
            return bad("epsilon must be in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.min_hypothesis_prob) {
            return bad("min_hypothesis_prob must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferError {
    #[error("no hypotheses")]
    NoHypotheses,
    #[error("history has no observed steps")]
    EmptyHistory,
    #[error("history has no current observation to predict from")]
    NoCurrentObservation,
    #[error("invalid inference config: {0}")]
    Config(String),
}
