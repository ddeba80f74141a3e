use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{fit_posterior, Hypothesis, HypothesisSet, InferError, InferenceConfig, InferenceMode, Prediction};
use crate::agents::dataset::derive_seed;
use crate::synth::{Condition, Purpose, SynthesisRequest, Synthesizer};
use crate::trajectory::History;

/// Prompt-side options passed through to every synthesis request.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisSettings {
    pub condition: Condition,
    pub two_stage: bool,
    pub max_tokens: Option<u32>,
}

impl SynthesisSettings {
    fn request(&self, history: &History, n: usize, max_retries: u32, purpose: Purpose, salt: u64) -> SynthesisRequest {
        let mut req = SynthesisRequest::new(history.clone());
        req.condition = self.condition;
        req.two_stage = self.two_stage && purpose == Purpose::Initial;
        req.n_programs = n;
        req.max_retries = max_retries;
        req.purpose = purpose;
        req.salt = salt;
        if let Some(t) = self.max_tokens {
            req.max_tokens = t;
        }
        req
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub synthesized: usize,
    pub dropped: usize,
    pub rejuvenation_passes: usize,
    pub replaced: usize,
    /// Backend calls spent by this inference.
    pub calls: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub set: HypothesisSet,
    pub report: InferenceReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejuvenation {
    pub set: HypothesisSet,
    pub replaced: usize,
    pub calls: u64,
}

/// One rejuvenation pass. Every slot with fewer than `threshold` correct
/// predictions in the window and budget left is resampled; the set is then
/// refit.
pub fn rejuvenate(
    set: &HypothesisSet,
    history: &History,
    config: &InferenceConfig,
    synthesizer: &dyn Synthesizer,
    settings: &SynthesisSettings,
    salt: u64,
) -> Result<Rejuvenation, InferError> {
    let unchanged = || Ok(Rejuvenation { set: set.clone(), replaced: 0, calls: 0 });
    if config.mode == InferenceMode::ImportanceSampling {
        return unchanged();
    }
    let budget = config.retry_budget();
    let due: Vec<usize> = set
        .hypotheses
        .iter()
        .enumerate()
        .filter(|(_, h)| h.window_correct < config.rejuvenation_threshold && h.attempts < budget)
        .map(|(i, _)| i)
        .collect();
    if due.is_empty() {
        return unchanged();
    }
    // Backend calls block on I/O, so each slot gets its own thread rather
    // than a slot in the CPU pool.
    let fresh: Vec<(usize, Option<Hypothesis>, u64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = due
            .iter()
            .map(|&i| {
                let old = &set.hypotheses[i];
                let retries = budget - old.attempts - 1;
                let req = settings.request(
                    history,
                    1,
                    retries,
                    Purpose::Rejuvenation,
                    derive_seed(salt, &[i as u64, old.attempts as u64]),
                );
                scope.spawn(move || match synthesizer.synthesize(&req) {
                    Ok(out) => (i, out.hypotheses.first().map(Hypothesis::from_synthesized), out.calls),
                    Err(e) => {
                        log::warn!("rejuvenation of slot {i} failed: {e}");
                        (i, None, 0)
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rejuvenation thread panicked")).collect()
    });
    let mut hypotheses = set.hypotheses.clone();
    let mut replaced = 0;
    let mut calls = 0;
    for (i, new, c) in fresh {
        calls += c;
        let spent = hypotheses[i].attempts + 1;
        match new {
            Some(mut h) => {
                h.attempts += spent;
                hypotheses[i] = h;
                replaced += 1;
            }
            None => {
                log::info!("no replacement for slot {i}; keeping it");
                hypotheses[i].attempts = spent;
            }
        }
    }
    Ok(Rejuvenation { set: fit_posterior(hypotheses, history, config)?, replaced, calls })
}

/// The full predictor: synthesize to fill the candidate pool, fit, and
/// rejuvenate.
pub struct Rote {
    synthesizer: Arc<dyn Synthesizer>,
    config: InferenceConfig,
    settings: SynthesisSettings,
}

impl Rote {
    pub fn new(synthesizer: Arc<dyn Synthesizer>, config: InferenceConfig) -> Self {
        Rote { synthesizer, config, settings: SynthesisSettings::default() }
    }

    pub fn with_settings(mut self, settings: SynthesisSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.config
    }

    pub fn synthesizer(&self) -> &Arc<dyn Synthesizer> {
        &self.synthesizer
    }

    /// Posterior over programs given `history`, topping `candidates` up to
    /// `n_hypotheses` with freshly synthesized programs.
    pub fn infer(&self, history: &History, candidates: Vec<Hypothesis>, salt: u64) -> Result<Inference, InferError> {
        self.config.validate()?;
        if history.is_empty() {
            return Err(InferError::EmptyHistory);
        }
        let mut report = InferenceReport::default();
        let mut pool = candidates;
        pool.truncate(self.config.n_hypotheses);
        let need = self.config.n_hypotheses - pool.len();
        if need > 0 {
            let req = self.settings.request(history, need, self.config.retry_budget(), Purpose::Initial, salt);
            match self.synthesizer.synthesize(&req) {
                Ok(out) => {
                    report.synthesized = out.hypotheses.len();
                    report.dropped = out.dropped;
                    report.calls += out.calls;
                    pool.extend(out.hypotheses.iter().map(Hypothesis::from_synthesized));
                }
                Err(e) => log::warn!("synthesis failed: {e}"),
            }
        }
        let mut set = fit_posterior(pool, history, &self.config)?;
        if self.config.mode == InferenceMode::SmcRejuvenation {
            for pass in 0..self.config.max_rejuvenation_attempts {
                let pass_salt = derive_seed(salt, &[0x5e7, pass as u64, history.len() as u64]);
                let r = rejuvenate(&set, history, &self.config, self.synthesizer.as_ref(), &self.settings, pass_salt)?;
                if r.replaced == 0 && r.set == set {
                    break;
                }
                report.rejuvenation_passes += 1;
                report.replaced += r.replaced;
                report.calls += r.calls;
                set = r.set;
            }
        }
        Ok(Inference { set, report })
    }

    /// Fits on `h_{0:t-1}` and predicts `a_t` at the history's current
    /// observation. `previous` carries candidates forward between steps.
    pub fn predict_action(
        &self,
        history: &History,
        previous: Option<&HypothesisSet>,
        salt: u64,
    ) -> Result<(Prediction, Inference), InferError> {
        let current = history.current().ok_or(InferError::NoCurrentObservation)?.clone();
        let candidates = previous.map(|s| s.hypotheses.clone()).unwrap_or_default();
        let inference = self.infer(history, candidates, salt)?;
        Ok((inference.set.predict(&current), inference))
    }
}
