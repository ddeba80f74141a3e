use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{Action, GridWorld};
use crate::infer::{HypothesisSet, InferError, Rote};
use crate::synth::gateway::{CallKind, CompletionRequest, LlmGateway};
use crate::synth::prompt::{action_prompt, parse_action};
use crate::trajectory::History;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Rote,
    Nllm,
    Frequency,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Rote => "rote",
            PredictorKind::Nllm => "nllm",
            PredictorKind::Frequency => "frequency",
        }
    }
}

impl std::str::FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rote" => Ok(PredictorKind::Rote),
            "nllm" => Ok(PredictorKind::Nllm),
            "frequency" => Ok(PredictorKind::Frequency),
            _ => Err(format!("unknown predictor `{s}` (rote, nllm, frequency)")),
        }
    }
}

/// What a predictor returns for one evaluation item.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub actions: Vec<Action>,
    /// Backend calls spent on this item.
    pub calls: u64,
    /// Backend calls spent after the model was fitted.
    pub rollout_calls: u64,
    /// The fitted set, for predictors that have one.
    pub set: Option<HypothesisSet>,
}

pub trait Predictor: Send + Sync {
    fn kind(&self) -> PredictorKind;

    /// Predicts `horizon` actions continuing `history` from its current
    /// observation, self-simulating observations with the dynamics.
    fn forecast(&self, history: &History, horizon: usize, salt: u64) -> Result<Forecast, String>;

    /// Fits on `history` and predicts `horizon` actions starting from
    /// `world`, a different environment.
    fn forecast_transfer(&self, history: &History, world: &GridWorld, horizon: usize, salt: u64)
        -> Result<Forecast, String>;
}

fn start_world(history: &History) -> Result<GridWorld, String> {
    history.current().map(|o| o.to_world()).ok_or_else(|| InferError::NoCurrentObservation.to_string())
}

pub struct RotePredictor {
    pub engine: Rote,
}

impl RotePredictor {
    pub fn new(engine: Rote) -> Self {
        RotePredictor { engine }
    }

    fn fit(&self, history: &History, salt: u64) -> Result<(HypothesisSet, u64), String> {
        let inf = self.engine.infer(history, Vec::new(), salt).map_err(|e| e.to_string())?;
        Ok((inf.set, inf.report.calls))
    }
}

impl Predictor for RotePredictor {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Rote
    }

    fn forecast(&self, history: &History, horizon: usize, salt: u64) -> Result<Forecast, String> {
        let world = start_world(history)?;
        let (set, calls) = self.fit(history, salt)?;
        // Rollout only executes programs; it has no access to the backend.
        let actions = set.rollout(&world, horizon).into_iter().map(|p| p.action).collect();
        Ok(Forecast { actions, calls, rollout_calls: 0, set: Some(set) })
    }

    fn forecast_transfer(
        &self,
        history: &History,
        world: &GridWorld,
        horizon: usize,
        salt: u64,
    ) -> Result<Forecast, String> {
        let (set, calls) = self.fit(history, salt)?;
        let moved = set.transfer(&world.observe());
        let actions = moved.rollout(world, horizon).into_iter().map(|p| p.action).collect();
        Ok(Forecast { actions, calls, rollout_calls: 0, set: Some(moved) })
    }
}

/// Direct next-action prompting: one backend call per predicted step.
pub struct NllmPredictor {
    gateway: Arc<dyn LlmGateway>,
    calls: AtomicU64,
}

impl NllmPredictor {
    pub fn new(gateway: Arc<dyn LlmGateway>) -> Self {
        NllmPredictor { gateway, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn next_action(&self, history: &History, salt: u64, step: usize) -> Action {
        let mut req = CompletionRequest::new(CallKind::Action, action_prompt(history));
        req.max_tokens = 16;
        req.salt = salt;
        req.sample_index = step;
        self.calls.fetch_add(1, Ordering::Relaxed);
        match self.gateway.complete(&req) {
            Ok(c) => parse_action(&c.text).unwrap_or_else(|| {
                log::debug!("unparseable action reply {:?}; using Noop", c.text);
                Action::Noop
            }),
            Err(e) => {
                log::warn!("action call failed ({e}); using Noop");
                Action::Noop
            }
        }
    }

    fn roll(&self, mut history: History, mut world: GridWorld, horizon: usize, salt: u64) -> Forecast {
        let mut actions = Vec::with_capacity(horizon);
        for step in 0..horizon {
            history.set_current(world.observe());
            let a = self.next_action(&history, salt, step);
            history.push(world.observe(), a);
            world = world.step(a);
            actions.push(a);
        }
        let n = horizon as u64;
        Forecast { actions, calls: n, rollout_calls: n, set: None }
    }
}

impl Predictor for NllmPredictor {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Nllm
    }

    fn forecast(&self, history: &History, horizon: usize, salt: u64) -> Result<Forecast, String> {
        Ok(self.roll(history.clone(), start_world(history)?, horizon, salt))
    }

    fn forecast_transfer(
        &self,
        history: &History,
        world: &GridWorld,
        horizon: usize,
        salt: u64,
    ) -> Result<Forecast, String> {
        Ok(self.roll(history.clone(), world.clone(), horizon, salt))
    }
}

/// Always predicts the most frequent observed action (earliest in action
/// order on ties).
pub struct FrequencyPredictor;

impl FrequencyPredictor {
    pub fn modal(history: &History) -> Action {
        let mut counts = [0usize; Action::COUNT];
        history.actions().for_each(|a| counts[a.index()] += 1);
        let mut best = 0;
        for i in 1..Action::COUNT {
            if counts[i] > counts[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }
}

impl Predictor for FrequencyPredictor {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Frequency
    }

    fn forecast(&self, history: &History, horizon: usize, _salt: u64) -> Result<Forecast, String> {
        Ok(Forecast { actions: vec![Self::modal(history); horizon], calls: 0, rollout_calls: 0, set: None })
    }

    fn forecast_transfer(&self, history: &History, _: &GridWorld, horizon: usize, salt: u64) -> Result<Forecast, String> {
        self.forecast(history, horizon, salt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::dataset::{generate_one, DatasetSpec};
    use crate::agents::ScriptId;
    use crate::dsl::library;
    use crate::synth::gateway::MockGateway;

    #[test]
    fn frequency_mode_and_ties() {
        let t = generate_one(&DatasetSpec::new(0), ScriptId::UpDownPatrol, 0);
        let h = t.history(20);
        let f = FrequencyPredictor.forecast(&h, 3, 0).unwrap();
        assert_eq!(f.actions.len(), 3);
        assert!(f.actions.iter().all(|&a| a == f.actions[0]));
        assert_eq!(FrequencyPredictor::modal(&History::new()), Action::Up);
    }

    #[test]
    fn nllm_calls_once_per_step() {
        let t = generate_one(&DatasetSpec::new(0), ScriptId::LeftRightPatrol, 0);
        let p = NllmPredictor::new(Arc::new(MockGateway::new(library::standard(), 0)));
        let f = p.forecast(&t.history(20), 7, 0).unwrap();
        assert_eq!((f.calls, f.actions.len()), (7, 7));
        assert_eq!(p.calls(), 7);
    }
}
