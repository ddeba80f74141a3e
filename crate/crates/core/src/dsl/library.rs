//! Bundled programs: one faithful encoding of each scripted agent, plus
//! plausible but wrong decoys for offline synthesis.

use super::BehaviorProgram;
use crate::agents::ScriptId;

macro_rules! programs {
    ($dir:literal: $($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../programs/", $dir, "/", $name, ".rote")))),*]
    };
}

const GOLDEN: &[(&str, &str)] = programs!("golden":
    "block_cycle",
    "clockwise_patrol",
    "counter_clockwise_patrol",
    "left_right_patrol",
    "pair_blue_blocks",
    "patrol_a_star",
    "l_shaped_patrol",
    "transport_green",
    "snake_patrol",
    "up_down_patrol",
);

const DECOYS: &[(&str, &str)] = programs!("decoys":
    "always_up",
    "always_left",
    "idle",
    "right_left_patrol",
    "down_up_patrol",
    "mirrored_l_patrol",
    "seek_bottom_right",
    "reverse_block_cycle",
    "transport_blue",
    "collect_purple",
    "pair_green_blocks",
    "zigzag",
    "wall_hugger",
    "vertical_snake",
    "box_patrol",
    "up_down_keep_block",
    "pink_fiddler",
    "corner_hopper",
    "counter_loop",
    "center_seeker",
);

/// A program with a stable name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedProgram {
    pub name: String,
    pub program: BehaviorProgram,
}

fn load(table: &[(&str, &str)]) -> Vec<NamedProgram> {
    table
        .iter()
        .map(|&(name, src)| NamedProgram {
            name: name.to_string(),
            program: BehaviorProgram::parse(src).unwrap_or_else(|e| panic!("bundled program {name}: {e}")),
        })
        .collect()
}

/// Source text of the encoding of `script`.
pub fn golden_source(script: ScriptId) -> &'static str {
    GOLDEN.iter().find(|(n, _)| *n == script.name()).map(|(_, s)| *s).expect("every script has a program")
}

pub fn golden(script: ScriptId) -> BehaviorProgram {
    BehaviorProgram::parse(golden_source(script)).expect("bundled program parses")
}

/// All ten encodings, in [`ScriptId::ALL`] order.
pub fn golden_all() -> Vec<NamedProgram> {
    let mut v = load(GOLDEN);
    v.sort_by_key(|p| ScriptId::ALL.iter().position(|s| s.name() == p.name));
    v
}

pub fn decoys() -> Vec<NamedProgram> {
    load(DECOYS)
}

/// Golden programs followed by decoys: thirty programs.
pub fn standard() -> Vec<NamedProgram> {
    let mut v = golden_all();
    v.extend(decoys());
    v
}

/// The standard library without the encoding of `script`.
pub fn without(script: ScriptId) -> Vec<NamedProgram> {
    standard().into_iter().filter(|p| p.name != script.name()).collect()
}
