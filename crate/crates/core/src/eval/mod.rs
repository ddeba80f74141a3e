//! Evaluation protocols, scoring, and result files.

pub mod human;
mod predictor;
pub mod timing;

pub use predictor::{FrequencyPredictor, Forecast, NllmPredictor, Predictor, PredictorKind, RotePredictor};

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::dataset::TransferPair;
use crate::codec::to_canonical;
use crate::grid::Action;
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    /// Predict `a_t` from `h_{0:t-1}` with `t = |H| - 2`.
    SingleStep,
    /// Observe `context` steps, then roll out `horizon`.
    MultiStep { context: usize, horizon: usize },
    /// Observe `context` steps in one world, predict `horizon` in another.
    Generalization { context: usize, horizon: usize },
    /// Observe 20 steps of a human trajectory, predict 5.
    HumanReplay { context: usize, horizon: usize },
}

impl Protocol {
    pub fn multi_step() -> Self {
        Protocol::MultiStep { context: 20, horizon: 10 }
    }

    pub fn generalization() -> Self {
        Protocol::Generalization { context: 20, horizon: 10 }
    }

    pub fn human_replay() -> Self {
        Protocol::HumanReplay { context: 20, horizon: 5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::SingleStep => "single_step",
            Protocol::MultiStep { .. } => "multi_step",
            Protocol::Generalization { .. } => "generalization",
            Protocol::HumanReplay { .. } => "human_replay",
        }
    }

    /// Context length and number of scored actions for a trajectory of
    /// `len` steps.
    fn window(&self, len: usize) -> Option<(usize, usize)> {
        match *self {
            Protocol::SingleStep => (len >= 2).then(|| (len - 2, 1)),
            Protocol::MultiStep { context, horizon }
            | Protocol::HumanReplay { context, horizon }
            | Protocol::Generalization { context, horizon } => {
                (horizon >= 1 && context >= 1 && context + horizon <= len).then_some((context, horizon))
            }
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single_step" => Ok(Protocol::SingleStep),
            "multi_step" => Ok(Protocol::multi_step()),
            "generalization" => Ok(Protocol::generalization()),
            "human_replay" => Ok(Protocol::human_replay()),
            _ => Err(format!("unknown protocol `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub id: String,
    pub task: String,
    pub predicted: Vec<Action>,
    pub truth: Vec<Action>,
    pub accuracy: f64,
    pub calls: u64,
    pub rollout_calls: u64,
    /// Highest-posterior program and its size, for predictors that fit one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

/// Deterministic part of an evaluation run. Wall-clock times are kept
/// apart in [`EvalTimings`] so result files are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub protocol: Protocol,
    pub predictor: PredictorKind,
    pub config: serde_json::Value,
    pub trajectories: Vec<TrajectoryScore>,
    pub tasks: Vec<TaskSummary>,
    pub overall: TaskSummary,
    pub total_calls: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTimings {
    pub total_seconds: f64,
    /// Per trajectory, in result order.
    pub seconds: Vec<f64>,
}

/// Mean and standard error (n - 1 denominator; 0 for a single value).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn summary(task: &str, xs: &[f64]) -> TaskSummary {
    let (mean, se) = mean_se(xs);
    TaskSummary { task: task.to_string(), n: xs.len(), mean, se }
}

fn task_of(t: &Trajectory) -> String {
    t.meta.script.map_or_else(|| "unknown".to_string(), |s| s.name().to_string())
}

fn score(id: &str, task: String, truth: Vec<Action>, outcome: Result<Forecast, String>) -> TrajectoryScore {
    match outcome {
        Ok(f) => {
            let hits = f.actions.iter().zip(&truth).filter(|(a, b)| a == b).count();
            let best = f.set.as_ref().and_then(|s| s.best());
            TrajectoryScore {
                id: id.to_string(),
                task,
                accuracy: hits as f64 / truth.len() as f64,
                predicted: f.actions,
                truth,
                calls: f.calls,
                rollout_calls: f.rollout_calls,
                map_program: best.map(|h| h.label()),
                map_size: best.map(|h| h.program.size()),
                error: None,
            }
        }
        Err(e) => TrajectoryScore {
            id: id.to_string(),
            task,
            predicted: Vec::new(),
            truth,
            accuracy: 0.0,
            calls: 0,
            rollout_calls: 0,
            map_program: None,
            map_size: None,
            error: Some(e),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("protocol {0} does not fit trajectory `{1}` ({2} steps)")]
    TooShort(&'static str, String, usize),
    #[error("use run_generalization for the generalization protocol")]
    WrongProtocol,
}

fn assemble(
    protocol: Protocol,
    predictor: PredictorKind,
    config: serde_json::Value,
    scored: Vec<(TrajectoryScore, f64)>,
    total_seconds: f64,
) -> (EvalResult, EvalTimings) {
    let (trajectories, seconds): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    let mut by_task: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for t in &trajectories {
        by_task.entry(t.task.as_str()).or_default().push(t.accuracy);
    }
    let tasks = by_task.iter().map(|(k, v)| summary(k, v)).collect();
    let all: Vec<f64> = trajectories.iter().map(|t| t.accuracy).collect();
    let total_calls = trajectories.iter().map(|t| t.calls).sum();
    let result = EvalResult {
        protocol,
        predictor,
        config,
        overall: summary("all", &all),
        tasks,
        trajectories,
        total_calls,
    };
    (result, EvalTimings { total_seconds, seconds })
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

/// Runs an in-environment protocol over `dataset`. Trajectories are
/// evaluated in parallel; each one's salt is its index.
pub fn run_eval(
    protocol: Protocol,
    dataset: &[&Trajectory],
    predictor: &dyn Predictor,
    config: serde_json::Value,
) -> Result<(EvalResult, EvalTimings), EvalError> {
    if matches!(protocol, Protocol::Generalization { .. }) {
        return Err(EvalError::WrongProtocol);
    }
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut jobs = Vec::with_capacity(dataset.len());
    for t in dataset {
        let (t0, h) =
            protocol.window(t.len()).ok_or_else(|| EvalError::TooShort(protocol.name(), t.meta.id.clone(), t.len()))?;
        jobs.push((*t, t0, h));
    }
    let (scored, total) = timed(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(i, &(t, t0, h))| {
                let truth = t.actions()[t0..t0 + h].to_vec();
                let (outcome, secs) = timed(|| predictor.forecast(&t.history(t0), h, i as u64));
                (score(&t.meta.id, task_of(t), truth, outcome), secs)
            })
            .collect()
    });
    Ok(assemble(protocol, predictor.kind(), config, scored, total))
}

/// Fits on each pair's source, transfers to the target's first
/// observation, and scores the rollout against the target.
pub fn run_generalization(
    protocol: Protocol,
    pairs: &[TransferPair],
    predictor: &dyn Predictor,
    config: serde_json::Value,
) -> Result<(EvalResult, EvalTimings), EvalError> {
    let Protocol::Generalization { context, horizon } = protocol else {
        return Err(EvalError::WrongProtocol);
    };
    if pairs.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    for p in pairs {
        if p.source.len() < context || p.target.len() < horizon {
            return Err(EvalError::TooShort(protocol.name(), p.source.meta.id.clone(), p.source.len()));
        }
    }
    let (scored, total) = timed(|| {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let truth = p.target.actions()[..horizon].to_vec();
                let world = p.target.observation(0).expect("target has a first observation").to_world();
                let (outcome, secs) =
                    timed(|| predictor.forecast_transfer(&p.source.history(context), &world, horizon, i as u64));
                (score(&p.target.meta.id, task_of(&p.source), truth, outcome), secs)
            })
            .collect()
    });
    Ok(assemble(protocol, predictor.kind(), config, scored, total))
}

impl EvalResult {
    pub fn to_json(&self) -> String {
        to_canonical(self).expect("results serialize") + "\n"
    }

    /// `task,n,mean,se` with tasks sorted and the overall row last.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "n", "mean", "se"]).expect("in-memory write");
        for t in self.tasks.iter().chain(std::iter::once(&self.overall)) {
            w.write_record([t.task.clone(), t.n.to_string(), format!("{:.6}", t.mean), format!("{:.6}", t.se)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Accuracy at each prediction offset per task: `task,step,n,mean,se`.
    pub fn series_csv(&self) -> String {
        let mut by: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
        for t in self.trajectories.iter().filter(|t| t.error.is_none()) {
            for (k, (p, a)) in t.predicted.iter().zip(&t.truth).enumerate() {
                by.entry((t.task.as_str(), k)).or_default().push(f64::from(u8::from(p == a)));
                by.entry(("all", k)).or_default().push(f64::from(u8::from(p == a)));
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "step", "n", "mean", "se"]).expect("in-memory write");
        for ((task, k), xs) in by {
            let (m, se) = mean_se(&xs);
            w.write_record([task.to_string(), k.to_string(), xs.len().to_string(), format!("{m:.6}"), format!("{se:.6}")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Size of the highest-posterior program against accuracy, one row
    /// per trajectory: `id,task,map_program,map_size,accuracy`.
    pub fn sizes_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "task", "map_program", "map_size", "accuracy"]).expect("in-memory write");
        for t in self.trajectories.iter().filter(|t| t.map_size.is_some()) {
            w.write_record([
                t.id.clone(),
                t.task.clone(),
                t.map_program.clone().unwrap_or_default(),
                t.map_size.map(|s| s.to_string()).unwrap_or_default(),
                format!("{:.6}", t.accuracy),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Writes `result.json`, `results.csv`, `series.csv` and `sizes.csv`
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("result.json"), self.to_json())?;
        std::fs::write(dir.join("results.csv"), self.to_csv())?;
        std::fs::write(dir.join("series.csv"), self.series_csv())?;
        std::fs::write(dir.join("sizes.csv"), self.sizes_csv())
    }
}

impl EvalTimings {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(self).expect("serialize") + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_values() {
        assert_eq!(mean_se(&[]), (0.0, 0.0));
        assert_eq!(mean_se(&[0.5]), (0.5, 0.0));
        let (m, se) = mean_se(&[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(m, 0.5);
        // sample sd sqrt(1/3), divided by sqrt(4)
        assert!((se - (1.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn protocol_windows() {
        assert_eq!(Protocol::SingleStep.window(50), Some((48, 1)));
        assert_eq!(Protocol::multi_step().window(50), Some((20, 10)));
        assert_eq!(Protocol::human_replay().window(25), Some((20, 5)));
        assert_eq!(Protocol::multi_step().window(29), None);
        assert_eq!(Protocol::MultiStep { context: 20, horizon: 0 }.window(50), None);
    }

    #[test]
    fn rote_runs_report_the_map_program_size() {
        use crate::agents::dataset::{generate_one, DatasetSpec};
        use crate::agents::ScriptId;
        use crate::dsl::library;
        use crate::infer::{InferenceConfig, Rote};
        use crate::synth::MockSynthesizer;
        use std::sync::Arc;

        let ts: Vec<_> = [ScriptId::UpDownPatrol, ScriptId::SnakePatrol]
            .iter()
            .map(|&s| generate_one(&DatasetSpec::new(4), s, 0))
            .collect();
        let refs: Vec<&Trajectory> = ts.iter().collect();
        let engine = Rote::new(Arc::new(MockSynthesizer::new(library::golden_all(), 0)), InferenceConfig::default());
        let (r, _) = run_eval(Protocol::multi_step(), &refs, &RotePredictor::new(engine), serde_json::Value::Null).unwrap();
        let sizes = r.sizes_csv();
        let rows: Vec<&str> = sizes.lines().collect();
        assert_eq!(rows[0], "id,task,map_program,map_size,accuracy");
        let snake = library::golden(ScriptId::SnakePatrol).size();
        assert!(rows.iter().any(|l| l.contains(&format!("snake_patrol,{snake},1.000000"))), "{sizes}");

        let (f, _) = run_eval(Protocol::multi_step(), &refs, &FrequencyPredictor, serde_json::Value::Null).unwrap();
        assert_eq!(f.sizes_csv().lines().count(), 1);
    }
}
