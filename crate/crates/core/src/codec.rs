//! Canonical text encoding.
//!
//! Everything persisted by this crate is JSON with object keys in sorted
//! order and cell lists in cell order, so equal values always encode to the
//! same bytes.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::grid::{AgentPose, Color, GridWorld, Observation, Pos, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("syntax error at offset {offset} (line {line}, column {column}): {message}")]
    Syntax { offset: usize, line: usize, column: usize, message: String },
    #[error("invalid document at offset {offset} (line {line}, column {column}): {message}")]
    Invalid { offset: usize, line: usize, column: usize, message: String },
    #[error("encoding failed: {0}")]
    Encode(String),
}

impl CodecError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            CodecError::Syntax { offset, .. } | CodecError::Invalid { offset, .. } => Some(*offset),
            CodecError::Encode(_) => None,
        }
    }
}

/// Encodes any serializable value canonically (sorted keys, compact).
pub fn to_canonical<T: Serialize>(value: &T) -> Result<String, CodecError> {
    // Routing through `Value` sorts object keys.
    let v = serde_json::to_value(value).map_err(|e| CodecError::Encode(e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| CodecError::Encode(e.to_string()))
}

/// Decodes a canonical (or any equivalent JSON) document.
pub fn from_canonical<T: DeserializeOwned>(text: &str) -> Result<T, CodecError> {
    serde_json::from_str(text).map_err(|e| locate(text, e))
}

fn locate(text: &str, e: serde_json::Error) -> CodecError {
    let (line, column) = (e.line(), e.column());
    let offset = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + column;
    let message = e.to_string();
    match e.classify() {
        serde_json::error::Category::Data => CodecError::Invalid { offset, line, column, message },
        _ => CodecError::Syntax { offset, line, column, message },
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBlock {
    color: Color,
    position: Pos,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireWorld {
    width: i32,
    height: i32,
    walls: Vec<Pos>,
    blocks: Vec<WireBlock>,
    agent: AgentPose,
    step_index: u64,
}

impl From<&GridWorld> for WireWorld {
    fn from(w: &GridWorld) -> Self {
        WireWorld {
            width: w.width(),
            height: w.height(),
            walls: w.walls().iter().copied().collect(),
            blocks: w
                .floor_blocks()
                .iter()
                .map(|(&position, &color)| WireBlock { color, position })
                .collect(),
            agent: *w.agent(),
            step_index: w.step_index(),
        }
    }
}

impl TryFrom<WireWorld> for GridWorld {
    type Error = WorldError;

    fn try_from(w: WireWorld) -> Result<Self, WorldError> {
        GridWorld::from_parts(
            w.width,
            w.height,
            w.walls,
            w.blocks.into_iter().map(|b| (b.position, b.color)),
            w.agent,
            w.step_index,
        )
    }
}

impl Serialize for GridWorld {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WireWorld::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridWorld {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = WireWorld::deserialize(d)?;
        let blocks = wire.blocks.len();
        let world = GridWorld::try_from(wire).map_err(serde::de::Error::custom)?;
        if world.floor_blocks().len() != blocks {
            return Err(serde::de::Error::custom("two blocks share a cell"));
        }
        Ok(world)
    }
}

impl Serialize for Observation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.world().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Observation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        GridWorld::deserialize(d).map(Observation::from)
    }
}
