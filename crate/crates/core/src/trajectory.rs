//! State-action histories and the canonical trajectory file.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::ScriptId;
use crate::codec::{from_canonical, to_canonical, CodecError};
use crate::grid::{Action, GridWorld, Observation, Pos};

/// Ordered `(observation, action)` pairs, optionally followed by the
/// observation whose action is to be predicted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    pairs: Vec<(Observation, Action)>,
    current: Option<Observation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("step index jumps from {prev} to {next} at position {at}")]
    StepGap { at: usize, prev: u64, next: u64 },
    #[error("observation {at} does not follow from the previous one under action {action}")]
    Dynamics { at: usize, action: Action },
}

impl History {
    pub fn new() -> Self {
        History::default()
    }

    pub fn from_pairs(pairs: Vec<(Observation, Action)>, current: Option<Observation>) -> Self {
        History { pairs, current }
    }

    pub fn push(&mut self, obs: Observation, action: Action) {
        self.pairs.push((obs, action));
        self.current = None;
    }

    pub fn set_current(&mut self, obs: Observation) {
        self.current = Some(obs);
    }

    pub fn pairs(&self) -> &[(Observation, Action)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn first_observation(&self) -> Option<&Observation> {
        self.pairs.first().map(|(o, _)| o).or(self.current.as_ref())
    }

    pub fn current(&self) -> Option<&Observation> {
        self.current.as_ref()
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.pairs.iter().map(|&(_, a)| a)
    }

    fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.pairs.iter().map(|(o, _)| o).chain(self.current.iter())
    }

    /// Step indices must increase by exactly one.
    pub fn check_indices(&self) -> Result<(), HistoryError> {
        let obs: Vec<&Observation> = self.observations().collect();
        for (at, w) in obs.windows(2).enumerate() {
            let (prev, next) = (w[0].step_index(), w[1].step_index());
            if next != prev + 1 {
                return Err(HistoryError::StepGap { at: at + 1, prev, next });
            }
        }
        Ok(())
    }

    /// Every observation must equal the previous one stepped by its action.
    pub fn check_dynamics(&self) -> Result<(), HistoryError> {
        self.check_indices()?;
        let obs: Vec<&Observation> = self.observations().collect();
        for (i, (o, a)) in self.pairs.iter().enumerate() {
            if let Some(next) = obs.get(i + 1) {
                if o.step(*a) != *next.world() {
                    return Err(HistoryError::Dynamics { at: i + 1, action: *a });
                }
            }
        }
        Ok(())
    }
}

/// Where a trajectory came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Scripted,
    Human,
    Session,
    Simulated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub id: String,
    pub source: Source,
    /// The behavior that produced (or that a human was asked to perform)
    /// this trajectory.
    pub script: Option<ScriptId>,
    pub seed: Option<u64>,
    pub participant: Option<String>,
}

/// Static layout shared by every observation in a trajectory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub width: i32,
    pub height: i32,
    pub walls: BTreeSet<Pos>,
}

impl Environment {
    pub fn of(world: &GridWorld) -> Self {
        Environment { width: world.width(), height: world.height(), walls: world.walls().clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub observation: Observation,
    pub action: Action,
}

/// The on-disk trajectory document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub environment: Environment,
    pub records: Vec<Record>,
    pub final_observation: Option<Observation>,
}

/// A problem found while replaying a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayIssue {
    #[error("record {0}: observation breaks a world invariant: {1}")]
    Invariant(usize, String),
    #[error("record {0}: layout differs from the trajectory environment")]
    Layout(usize),
    #[error("record {at}: {source}")]
    History { at: usize, source: HistoryError },
}

impl Trajectory {
    /// Runs `policy` from `world` for `steps` steps.
    pub fn simulate(
        meta: TrajectoryMeta,
        world: GridWorld,
        steps: usize,
        mut policy: impl FnMut(&Observation) -> Action,
    ) -> Trajectory {
        let environment = Environment::of(&world);
        let mut world = world;
        let mut records = Vec::with_capacity(steps);
        for _ in 0..steps {
            let observation = world.observe();
            let action = policy(&observation);
            world = world.step(action);
            records.push(Record { observation, action });
        }
        Trajectory { meta, environment, records, final_observation: Some(world.observe()) }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.records.iter().map(|r| r.action).collect()
    }

    /// Observation at step `t`; `t == len()` is the final observation.
    pub fn observation(&self, t: usize) -> Option<&Observation> {
        self.records.get(t).map(|r| &r.observation).or(if t == self.records.len() {
            self.final_observation.as_ref()
        } else {
            None
        })
    }

    /// `h_{0:t-1}` with `o_t` as the current observation.
    pub fn history(&self, t: usize) -> History {
        let t = t.min(self.records.len());
        let pairs = self.records[..t].iter().map(|r| (r.observation.clone(), r.action)).collect();
        History::from_pairs(pairs, self.observation(t).cloned())
    }

    /// All problems found on replay. Empty means the file is consistent.
    pub fn replay_issues(&self) -> Vec<ReplayIssue> {
        let mut issues = Vec::new();
        let all = self.records.iter().map(|r| &r.observation).chain(self.final_observation.iter());
        for (i, o) in all.enumerate() {
            if let Err(e) = o.validate() {
                issues.push(ReplayIssue::Invariant(i, e.to_string()));
            }
            if Environment::of(o) != self.environment {
                issues.push(ReplayIssue::Layout(i));
            }
        }
        let h = self.history(self.records.len());
        if let Err(e) = h.check_dynamics() {
            let at = match e {
                HistoryError::StepGap { at, .. } | HistoryError::Dynamics { at, .. } => at,
            };
            issues.push(ReplayIssue::History { at, source: e });
        }
        issues
    }

    /// Re-simulates the action sequence from the first observation.
    pub fn replayed(&self) -> Option<Trajectory> {
        let start = self.observation(0)?.to_world();
        let mut actions = self.actions().into_iter();
        Some(Trajectory::simulate(self.meta.clone(), start, self.records.len(), |_| {
            actions.next().expect("one action per record")
        }))
    }

    pub fn to_text(&self) -> Result<String, CodecError> {
        to_canonical(self).map(|mut s| {
            s.push('\n');
            s
        })
    }

    pub fn from_text(text: &str) -> Result<Trajectory, CodecError> {
        from_canonical(text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = self.to_text().map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> std::io::Result<Trajectory> {
        let text = std::fs::read_to_string(path)?;
        Trajectory::from_text(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
