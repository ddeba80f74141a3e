//! Wall-clock and backend-call cost of multi-step prediction as the
//! horizon grows.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{mean_se, Predictor, PredictorKind};
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub predictor: PredictorKind,
    pub horizon: usize,
    pub n: usize,
    pub mean_seconds: f64,
    pub se_seconds: f64,
    pub mean_calls: f64,
    pub mean_rollout_calls: f64,
}

/// Times `predictor` at every horizon on every trajectory, one prediction
/// at a time, observing `context` steps first.
pub fn run_timing(
    predictor: &dyn Predictor,
    horizons: &[usize],
    sample: &[&Trajectory],
    context: usize,
) -> Vec<TimingRow> {
    let mut rows = Vec::new();
    for &horizon in horizons {
        let mut secs = Vec::new();
        let mut calls = Vec::new();
        let mut rollout = Vec::new();
        for (i, t) in sample.iter().enumerate() {
            let h = t.history(context.min(t.len()));
            let start = Instant::now();
            let outcome = predictor.forecast(&h, horizon, i as u64);
            secs.push(start.elapsed().as_secs_f64());
            match outcome {
                Ok(f) => {
                    calls.push(f.calls as f64);
                    rollout.push(f.rollout_calls as f64);
                }
                Err(e) => log::warn!("timing run on {} failed: {e}", t.meta.id),
            }
        }
        let (mean_seconds, se_seconds) = mean_se(&secs);
        rows.push(TimingRow {
            predictor: predictor.kind(),
            horizon,
            n: secs.len(),
            mean_seconds,
            se_seconds,
            mean_calls: mean_se(&calls).0,
            mean_rollout_calls: mean_se(&rollout).0,
        });
    }
    rows
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["predictor", "horizon", "n", "mean_seconds", "se_seconds", "mean_calls", "mean_rollout_calls"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.predictor.name().to_string(),
            r.horizon.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.mean_seconds),
            format!("{:.6}", r.se_seconds),
            format!("{:.3}", r.mean_calls),
            format!("{:.3}", r.mean_rollout_calls),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
