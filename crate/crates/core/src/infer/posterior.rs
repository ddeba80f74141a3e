use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ActionDistribution, InferError, InferenceConfig, NoiseModel};
use crate::dsl::{BehaviorProgram, ProgramState};
use crate::grid::{Action, GridWorld, Observation};
use crate::synth::SynthesizedHypothesis;
use crate::trajectory::History;

mod program_source {
    use super::*;

    pub fn serialize<S: Serializer>(p: &BehaviorProgram, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(p.source())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BehaviorProgram, D::Error> {
        let text = String::deserialize(d)?;
        BehaviorProgram::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// One weighted program together with its replayed internal state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    #[serde(with = "program_source")]
    pub program: BehaviorProgram,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub prior_logprob: Option<f64>,
    pub prior: f64,
    pub log_likelihood: f64,
    pub posterior: f64,
    /// Internal state after replaying the history, aligned with `o_t`.
    pub state: ProgramState,
    /// Correct predictions over the trailing window.
    pub window_correct: usize,
    pub window_len: usize,
    /// Steps of the whole history the program predicted correctly.
    pub correct: usize,
    /// Repairs and rejuvenations spent on this slot.
    pub attempts: u32,
}

impl Hypothesis {
    pub fn new(program: BehaviorProgram) -> Self {
        Hypothesis {
            program,
            name: None,
            prior_logprob: None,
            prior: 0.0,
            log_likelihood: 0.0,
            posterior: 0.0,
            state: ProgramState::default(),
            window_correct: 0,
            window_len: 0,
            correct: 0,
            attempts: 0,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn from_synthesized(h: &SynthesizedHypothesis) -> Self {
        Hypothesis {
            name: h.name.clone(),
            prior_logprob: h.prior_logprob,
            attempts: h.repairs,
            ..Hypothesis::new(h.program.clone())
        }
    }

    /// The program's own action at `obs` from its current state.
    pub fn action(&self, obs: &Observation) -> Action {
        self.program.step(&self.state, obs).0
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("program#{:016x}", fxhash(self.program.source())))
    }
}

fn fxhash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// A fitted set of hypotheses: `Δ(Λ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub hypotheses: Vec<Hypothesis>,
    pub noise: NoiseModel,
    /// Number of observed steps the weights condition on.
    pub observed: usize,
}

/// Result of replaying one program through a history.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub log_likelihood: f64,
    pub state: ProgramState,
    pub correct: usize,
    pub window_correct: usize,
    pub window_len: usize,
}

/// Runs `program` from `init(o_0)` over the observed pairs, scoring each
/// observed action against the program's choice.
pub fn replay(program: &BehaviorProgram, history: &History, noise: &NoiseModel, window: usize) -> Replay {
    let pairs = history.pairs();
    let first = history.first_observation().expect("replay needs an observation");
    let mut state = program.init(first);
    let mut log_likelihood = 0.0;
    let mut correct = 0;
    let mut window_correct = 0;
    let window_start = pairs.len().saturating_sub(window);
    for (i, (obs, observed)) in pairs.iter().enumerate() {
        let (chosen, next) = program.step(&state, obs);
        log_likelihood += noise.likelihood(chosen, *observed).ln();
        if chosen == *observed {
            correct += 1;
            if i >= window_start {
                window_correct += 1;
            }
        }
        state = next;
    }
    Replay { log_likelihood, state, correct, window_correct, window_len: pairs.len() - window_start }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn renormalize(ws: &mut [f64]) {
    let s: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= s);
}

/// Normalized priors: from backend log-probabilities when every hypothesis
/// has one, uniform otherwise.
pub fn priors(hypotheses: &[Hypothesis]) -> Vec<f64> {
    let n = hypotheses.len();
    let lps: Option<Vec<f64>> = hypotheses.iter().map(|h| h.prior_logprob).collect();
    match lps {
        Some(lps) if lps.iter().all(|l| l.is_finite()) => {
            let z = log_sum_exp(&lps);
            lps.iter().map(|l| (l - z).exp()).collect()
        }
        _ => vec![1.0 / n as f64; n],
    }
}

/// Posterior over `hypotheses` given the observed pairs of `history`.
///
/// Weights are accumulated in log space, clamped to the configured floor,
/// renormalized, cut to the top `k` and renormalized again. Surviving
/// hypotheses keep their input order.
pub fn fit_posterior(
    hypotheses: Vec<Hypothesis>,
    history: &History,
    config: &InferenceConfig,
) -> Result<HypothesisSet, InferError> {
    if hypotheses.is_empty() {
        return Err(InferError::NoHypotheses);
    }
    if history.is_empty() {
        return Err(InferError::EmptyHistory);
    }
    let noise = config.noise();
    let prior = priors(&hypotheses);
    let mut fitted: Vec<Hypothesis> = hypotheses
        .into_par_iter()
        .zip(prior)
        .map(|(mut h, p)| {
            let r = replay(&h.program, history, &noise, config.window);
            h.prior = p;
            h.log_likelihood = r.log_likelihood;
            h.state = r.state;
            h.correct = r.correct;
            h.window_correct = r.window_correct;
            h.window_len = r.window_len;
            h
        })
        .collect();

    let logs: Vec<f64> = fitted.iter().map(|h| h.prior.ln() + h.log_likelihood).collect();
    let z = log_sum_exp(&logs);
    let mut ws: Vec<f64> = logs.iter().map(|l| (l - z).exp().max(config.min_hypothesis_prob)).collect();
    renormalize(&mut ws);

    if config.top_k < ws.len() {
        let mut order: Vec<usize> = (0..ws.len()).collect();
        order.sort_by(|&a, &b| ws[b].total_cmp(&ws[a]));
        let mut keep = vec![false; ws.len()];
        order.iter().take(config.top_k.max(1)).for_each(|&i| keep[i] = true);
        let mut i = 0;
        fitted.retain(|_| (keep[i], i += 1).0);
        let mut j = 0;
        ws.retain(|_| (keep[j], j += 1).0);
        renormalize(&mut ws);
    }
    for (h, w) in fitted.iter_mut().zip(ws) {
        h.posterior = w;
    }
    Ok(HypothesisSet { hypotheses: fitted, noise, observed: history.len() })
}

/// Mixture prediction at one observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub action: Action,
    pub distribution: ActionDistribution,
}

impl HypothesisSet {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|h| h.posterior).collect()
    }

    pub fn programs(&self) -> Vec<BehaviorProgram> {
        self.hypotheses.iter().map(|h| h.program.clone()).collect()
    }

    /// Index of the highest-posterior hypothesis (first on ties).
    pub fn best(&self) -> Option<&Hypothesis> {
        self.hypotheses.iter().reduce(|a, b| if b.posterior > a.posterior { b } else { a })
    }

    /// `Σ_λ p(λ|h) · λ(·|o)`, with the argmax taken in action order.
    pub fn predict(&self, obs: &Observation) -> Prediction {
        let mut distribution = ActionDistribution::zero();
        for h in &self.hypotheses {
            distribution.add_scaled(&self.noise.distribution(h.action(obs)), h.posterior);
        }
        distribution.normalize();
        Prediction { action: distribution.argmax(), distribution }
    }

    /// Advances every program state on `obs` (the step after a prediction).
    pub fn advance(&mut self, obs: &Observation) {
        for h in &mut self.hypotheses {
            h.state = h.program.step(&h.state, obs).1;
        }
    }

    /// Predicts `horizon` actions by executing the mixture in a simulated
    /// copy of `world`. The set itself is left untouched.
    pub fn rollout(&self, world: &GridWorld, horizon: usize) -> Vec<Prediction> {
        let mut set = self.clone();
        let mut world = world.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let obs = world.observe();
            let p = set.predict(&obs);
            set.advance(&obs);
            world = world.step(p.action);
            out.push(p);
        }
        out
    }

    /// Moves the set to a new environment: weights stay as they are and
    /// every program restarts from `init(new_obs)`.
    pub fn transfer(&self, new_obs: &Observation) -> HypothesisSet {
        let mut set = self.clone();
        for h in &mut set.hypotheses {
            h.state = h.program.init(new_obs);
        }
        set
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hypothesis sets serialize")
    }

    pub fn from_json(text: &str) -> Result<HypothesisSet, serde_json::Error> {
        serde_json::from_str(text)
    }
}
