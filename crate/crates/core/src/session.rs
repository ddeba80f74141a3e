//! Interactive sessions behind the study service.
//!
//! A play session is a live world that a person steps one action at a
//! time. After every action the engine refits on the history so far,
//! carrying the previous candidates forward, and predicts the next action.
//! A game session replays a stored trajectory: the first 20 steps are shown,
//! five guesses are collected and scored against the recorded actions.
//!
//! Each session sits behind its own lock, so actions on one session are
//! serialized while different sessions proceed independently.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::dataset::{derive_seed, random_world, WorldGenConfig};
use crate::agents::ScriptId;
use crate::eval::mean_se;
use crate::grid::{Action, GridWorld, Observation};
use crate::infer::{HypothesisSet, InferError, Prediction, Rote};
use crate::trajectory::{History, Record, Source, Trajectory, TrajectoryMeta};

/// Steps shown before guessing in a prediction game.
pub const GAME_CONTEXT: usize = 20;
/// Guesses collected per game.
pub const GAME_GUESSES: usize = 5;
/// Hypotheses listed in a prediction view.
pub const TOP_HYPOTHESES: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("no session `{0}`")]
    NotFound(String),
    #[error("no stored trajectory `{0}`")]
    UnknownTrajectory(String),
    #[error("malformed action: {0}")]
    BadAction(String),
    #[error("expected {expected} guesses, got {got}")]
    GuessCount { expected: usize, got: usize },
    #[error("session `{0}` is a {1} session")]
    WrongKind(String, &'static str),
    #[error("game `{0}` was already scored")]
    AlreadyScored(String),
    #[error("trajectory `{0}` has fewer than {1} steps")]
    TooShort(String, usize),
    #[error(transparent)]
    Infer(#[from] InferError),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreatePlay {
    pub seed: u64,
    /// The behavior the participant is asked to perform; free play if absent.
    pub script: Option<ScriptId>,
    pub participant: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisView {
    pub name: String,
    pub posterior: f64,
    pub source: String,
}

/// The engine's guess for the next action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionView {
    /// Index of the step being predicted.
    pub step: usize,
    pub action: Action,
    pub probabilities: BTreeMap<Action, f64>,
    pub top: Vec<HypothesisView>,
    pub calls: u64,
}

impl PredictionView {
    fn new(step: usize, p: &Prediction, set: &HypothesisSet, calls: u64) -> Self {
        let probabilities = Action::ALL.iter().map(|&a| (a, p.distribution.prob(a))).collect();
        let mut ranked: Vec<_> = set.hypotheses.iter().collect();
        ranked.sort_by(|a, b| b.posterior.total_cmp(&a.posterior));
        let top = ranked
            .into_iter()
            .take(TOP_HYPOTHESES)
            .map(|h| HypothesisView { name: h.label(), posterior: h.posterior, source: h.program.source().to_string() })
            .collect();
        PredictionView { step, action: p.action, probabilities, top, calls }
    }
}

/// What a client needs to render a play session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayView {
    pub id: String,
    pub script: Option<ScriptId>,
    pub step: usize,
    pub observation: Observation,
    pub actions: Vec<Action>,
    pub prediction: Option<PredictionView>,
    /// Error from the last refit, if it failed. The world still advanced.
    pub prediction_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameView {
    pub id: String,
    pub trajectory: String,
    pub script: Option<ScriptId>,
    /// Observations `o_0..o_20`; the last one is where guessing starts.
    pub shown: Vec<Observation>,
    /// Actions `a_0..a_19`.
    pub actions: Vec<Action>,
    pub guesses_needed: usize,
    pub score: Option<GameScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameScore {
    pub guesses: Vec<Action>,
    pub truth: Vec<Action>,
    pub correct: Vec<bool>,
    pub accuracy: f64,
}

/// Scores guesses position by position.
pub fn score_guesses(guesses: &[Action], truth: &[Action]) -> GameScore {
    let correct: Vec<bool> = guesses.iter().zip(truth).map(|(g, t)| g == t).collect();
    let hits = correct.iter().filter(|&&c| c).count();
    let accuracy = if correct.is_empty() { 0.0 } else { hits as f64 / correct.len() as f64 };
    GameScore { guesses: guesses.to_vec(), truth: truth.to_vec(), correct, accuracy }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptAggregate {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GameAggregate {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub by_script: BTreeMap<String, ScriptAggregate>,
}

struct PlaySession {
    meta: TrajectoryMeta,
    world: GridWorld,
    records: Vec<Record>,
    set: Option<HypothesisSet>,
    prediction: Option<PredictionView>,
    prediction_error: Option<String>,
}

impl PlaySession {
    fn history(&self) -> History {
        let pairs = self.records.iter().map(|r| (r.observation.clone(), r.action)).collect();
        History::from_pairs(pairs, Some(self.world.observe()))
    }

    fn view(&self) -> PlayView {
        PlayView {
            id: self.meta.id.clone(),
            script: self.meta.script,
            step: self.records.len(),
            observation: self.world.observe(),
            actions: self.records.iter().map(|r| r.action).collect(),
            prediction: self.prediction.clone(),
            prediction_error: self.prediction_error.clone(),
        }
    }

    fn trajectory(&self) -> Trajectory {
        Trajectory {
            meta: self.meta.clone(),
            environment: crate::trajectory::Environment::of(&self.world),
            records: self.records.clone(),
            final_observation: Some(self.world.observe()),
        }
    }
}

struct GameSession {
    id: String,
    trajectory: Arc<Trajectory>,
    score: Option<GameScore>,
}

impl GameSession {
    fn view(&self) -> GameView {
        let t = &self.trajectory;
        GameView {
            id: self.id.clone(),
            trajectory: t.meta.id.clone(),
            script: t.meta.script,
            shown: (0..=GAME_CONTEXT).filter_map(|i| t.observation(i).cloned()).collect(),
            actions: t.records[..GAME_CONTEXT].iter().map(|r| r.action).collect(),
            guesses_needed: GAME_GUESSES,
            score: self.score.clone(),
        }
    }
}

enum Session {
    Play(Box<PlaySession>),
    Game(GameSession),
}

/// All live sessions plus the stored trajectories games are drawn from.
pub struct SessionManager {
    engine: Arc<Rote>,
    world_gen: WorldGenConfig,
    stored: BTreeMap<String, Arc<Trajectory>>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
    scores: Mutex<Vec<(Option<ScriptId>, f64)>>,
    next: AtomicU64,
}

/// Parses an action name, rejecting anything else with a message.
pub fn parse_action(text: &str) -> Result<Action, SessionError> {
    text.parse().map_err(SessionError::BadAction)
}

impl SessionManager {
    pub fn new(engine: Rote, stored: Vec<Trajectory>) -> Self {
        SessionManager {
            engine: Arc::new(engine),
            world_gen: WorldGenConfig::default(),
            stored: stored.into_iter().map(|t| (t.meta.id.clone(), Arc::new(t))).collect(),
            sessions: Mutex::new(BTreeMap::new()),
            scores: Mutex::new(Vec::new()),
            next: AtomicU64::new(1),
        }
    }

    pub fn engine(&self) -> &Rote {
        &self.engine
    }

    /// Ids of trajectories long enough to play a prediction game on.
    pub fn stored_ids(&self) -> Vec<String> {
        self.stored
            .values()
            .filter(|t| t.len() >= GAME_CONTEXT + GAME_GUESSES)
            .map(|t| t.meta.id.clone())
            .collect()
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{:06}", self.next.fetch_add(1, Ordering::Relaxed))
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        let map = self.sessions.lock().expect("session map");
        map.get(id).cloned().ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    fn insert(&self, id: &str, s: Session) {
        self.sessions.lock().expect("session map").insert(id.to_string(), Arc::new(Mutex::new(s)));
    }

    pub fn create_play(&self, req: &CreatePlay) -> PlayView {
        let id = self.fresh_id("p");
        // Free play gets a world with every color on the floor.
        let layout = req.script.unwrap_or(ScriptId::BlockCycle);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(req.seed, &[0x5e55]));
        let world = random_world(layout, &self.world_gen, &mut rng);
        let meta = TrajectoryMeta {
            id: id.clone(),
            source: Source::Session,
            script: req.script,
            seed: Some(req.seed),
            participant: req.participant.clone(),
        };
        let s = PlaySession { meta, world, records: Vec::new(), set: None, prediction: None, prediction_error: None };
        let view = s.view();
        self.insert(&id, Session::Play(Box::new(s)));
        view
    }

    /// Steps the world with `action`, refits, and predicts the next action.
    pub fn act(&self, id: &str, action: Action) -> Result<PlayView, SessionError> {
        let cell = self.get(id)?;
        let mut guard = cell.lock().expect("session");
        let Session::Play(s) = &mut *guard else {
            return Err(SessionError::WrongKind(id.to_string(), "game"));
        };
        let observation = s.world.observe();
        s.world = s.world.step(action);
        s.records.push(Record { observation, action });

        let history = s.history();
        let salt = derive_seed(s.meta.seed.unwrap_or(0), &[history.len() as u64]);
        match self.engine.predict_action(&history, s.set.as_ref(), salt) {
            Ok((p, inference)) => {
                s.prediction = Some(PredictionView::new(history.len(), &p, &inference.set, inference.report.calls));
                s.prediction_error = None;
                s.set = Some(inference.set);
            }
            Err(e) => {
                log::warn!("session {id}: refit failed: {e}");
                s.prediction = None;
                s.prediction_error = Some(e.to_string());
            }
        }
        Ok(s.view())
    }

    pub fn play_view(&self, id: &str) -> Result<PlayView, SessionError> {
        match &*self.get(id)?.lock().expect("session") {
            Session::Play(s) => Ok(s.view()),
            Session::Game(_) => Err(SessionError::WrongKind(id.to_string(), "game")),
        }
    }

    /// The session so far as a canonical trajectory.
    pub fn export(&self, id: &str) -> Result<Trajectory, SessionError> {
        match &*self.get(id)?.lock().expect("session") {
            Session::Play(s) => Ok(s.trajectory()),
            Session::Game(_) => Err(SessionError::WrongKind(id.to_string(), "game")),
        }
    }

    pub fn create_game(&self, trajectory: &str) -> Result<GameView, SessionError> {
        let t = self.stored.get(trajectory).ok_or_else(|| SessionError::UnknownTrajectory(trajectory.to_string()))?;
        if t.len() < GAME_CONTEXT + GAME_GUESSES {
            return Err(SessionError::TooShort(trajectory.to_string(), GAME_CONTEXT + GAME_GUESSES));
        }
        let g = GameSession { id: self.fresh_id("g"), trajectory: t.clone(), score: None };
        let view = g.view();
        self.insert(&g.id.clone(), Session::Game(g));
        Ok(view)
    }

    pub fn game_view(&self, id: &str) -> Result<GameView, SessionError> {
        match &*self.get(id)?.lock().expect("session") {
            Session::Game(g) => Ok(g.view()),
            Session::Play(_) => Err(SessionError::WrongKind(id.to_string(), "play")),
        }
    }

    /// Scores five guesses for `a_20..a_24` and adds them to the aggregate.
    pub fn guess(&self, id: &str, guesses: &[Action]) -> Result<GameScore, SessionError> {
        let cell = self.get(id)?;
        let mut guard = cell.lock().expect("session");
        let Session::Game(g) = &mut *guard else {
            return Err(SessionError::WrongKind(id.to_string(), "play"));
        };
        if g.score.is_some() {
            return Err(SessionError::AlreadyScored(id.to_string()));
        }
        if guesses.len() != GAME_GUESSES {
            return Err(SessionError::GuessCount { expected: GAME_GUESSES, got: guesses.len() });
        }
        let truth: Vec<Action> =
            g.trajectory.records[GAME_CONTEXT..GAME_CONTEXT + GAME_GUESSES].iter().map(|r| r.action).collect();
        let score = score_guesses(guesses, &truth);
        self.scores.lock().expect("scores").push((g.trajectory.meta.script, score.accuracy));
        g.score = Some(score.clone());
        Ok(score)
    }

    pub fn aggregate(&self) -> GameAggregate {
        let scores = self.scores.lock().expect("scores");
        let all: Vec<f64> = scores.iter().map(|s| s.1).collect();
        let (mean, se) = mean_se(&all);
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (script, acc) in scores.iter() {
            let key = script.map_or("unknown", |s| s.name()).to_string();
            groups.entry(key).or_default().push(*acc);
        }
        let by_script = groups
            .into_iter()
            .map(|(k, v)| {
                let (mean, se) = mean_se(&v);
                (k, ScriptAggregate { n: v.len(), mean, se })
            })
            .collect();
        GameAggregate { n: all.len(), mean, se, by_script }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }
}
