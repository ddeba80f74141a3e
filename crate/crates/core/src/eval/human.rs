//! Importing human gameplay.
//!
//! Two inputs are accepted: canonical trajectory files (as exported by the
//! session service) and compact gameplay records holding a start world
//! and an action list, which are expanded by simulation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::ScriptId;
use crate::codec::from_canonical;
use crate::grid::{Action, GridWorld};
use crate::trajectory::{ReplayIssue, Source, Trajectory, TrajectoryMeta};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameplayRecord {
    pub participant: String,
    /// The behavior the participant was asked to perform.
    pub script: Option<ScriptId>,
    pub world: GridWorld,
    pub actions: Vec<Action>,
}

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("{0}: not a trajectory or gameplay record: {1}")]
    Format(String, String),
    #[error("{0}: {1}")]
    Invalid(String, ReplayIssue),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct Imported {
    pub trajectory: Trajectory,
    /// Dynamics inconsistencies, tolerated for human data.
    pub warnings: Vec<ReplayIssue>,
}

pub fn from_record(rec: &GameplayRecord, id: &str) -> Trajectory {
    let meta = TrajectoryMeta {
        id: id.to_string(),
        source: Source::Human,
        script: rec.script,
        seed: None,
        participant: Some(rec.participant.clone()),
    };
    let mut actions = rec.actions.iter();
    Trajectory::simulate(meta, rec.world.clone(), rec.actions.len(), |_| *actions.next().expect("one per step"))
}

/// Parses and validates one file. World-invariant violations are errors;
/// dynamics mismatches become warnings.
pub fn import_text(text: &str, id: &str) -> Result<Imported, ImportError> {
    let trajectory = match from_canonical::<Trajectory>(text) {
        Ok(mut t) => {
            t.meta.source = Source::Human;
            t
        }
        Err(e1) => match serde_json::from_str::<GameplayRecord>(text) {
            Ok(rec) => {
                rec.world.validate().map_err(|e| ImportError::Format(id.to_string(), e.to_string()))?;
                from_record(&rec, id)
            }
            Err(e2) => return Err(ImportError::Format(id.to_string(), format!("{e1}; {e2}"))),
        },
    };
    let mut warnings = Vec::new();
    for issue in trajectory.replay_issues() {
        match issue {
            ReplayIssue::Invariant(..) => return Err(ImportError::Invalid(id.to_string(), issue)),
            other => warnings.push(other),
        }
    }
    Ok(Imported { trajectory, warnings })
}

pub fn import_file(path: &Path) -> Result<Imported, ImportError> {
    let id = path.file_stem().map_or_else(|| "human".to_string(), |s| s.to_string_lossy().into_owned());
    import_text(&std::fs::read_to_string(path)?, &id)
}

/// Imports every `.json` file under `dir`, sorted by path.
pub fn import_dir(dir: &Path) -> Result<Vec<Imported>, ImportError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| import_file(p)).collect()
}
