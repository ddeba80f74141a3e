//! Prompt construction. Every function here is pure.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::gateway::{CallKind, Message};
use crate::grid::{Action, Observation};
use crate::trajectory::History;

/// How much state-machine structure the prompt imposes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Only states the assumption that the agent is a state machine.
    #[default]
    Light,
    /// Spells out what states, rules and transitions are.
    Moderate,
    /// Asks for a plain-language machine first, then converts it to code.
    Severe,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Light, Condition::Moderate, Condition::Severe];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Light => "light",
            Condition::Moderate => "moderate",
            Condition::Severe => "severe",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown condition `{s}`"))
    }
}

/// Grammar and semantics of the program language, as shown to the model.
pub const DSL_REFERENCE: &str = r#"Programs are finite state machines written in this grammar (EBNF):

program  = { register } state { state } ;
register = "reg" NAME "=" expr ;
state    = "state" NAME ":" rule { rule } ;
rule     = guard "->" effect { "," effect } ;
effect   = "goto" "(" NAME ")" | "set" "(" NAME "," expr ")" | action ;
action   = "Up" | "Down" | "Left" | "Right" | "Interact" | "Noop"
         | "greedy_toward" "(" target ")"
         | "astar_toward" "(" target [ "," "avoid" "=" "[" [ color { "," color } ] "]" ] ")" ;
target   = "nearest_block" "(" color [ "," filter ] ")" | "corner" "(" corner ")"
         | "empty_corner" "(" ")" | "beside" "(" target ")" | expr ;
guard    = conj { "or" conj } ;
conj     = unary { "and" unary } ;
unary    = "not" unary | atom ;
atom     = "true" | "false" | "holding" "(" [ color ] ")" | "on_block" "(" [ color ] ")"
         | "wall_adjacent" "(" dir ")" | "at" "(" target ")"
         | "nearest_block_exists" "(" color [ "," filter ] ")"
         | expr cmp expr | "(" guard ")" ;
cmp      = "==" | "!=" | "<" | "<=" | ">" | ">=" ;
expr     = term { ( "+" | "-" ) term } ;
term     = "-" term | base [ "." ( "x" | "y" ) ] ;
base     = INT | "agent_x" | "agent_y" | "agent_pos" | "width" | "height" | NAME
         | "(" expr ")" | "(" expr "," expr ")" ;
color    = "green" | "blue" | "purple" | "pink" ;
dir      = "up" | "down" | "left" | "right" ;
corner   = "top_left" | "top_right" | "bottom_right" | "bottom_left" ;
filter   = "lonely" | "off_corner" ;

Semantics:
- The first state is the start state. Registers are evaluated once, on the first observation.
- Each step, the rules of the current state are tried top to bottom; the first rule whose guard holds fires.
- Effects run left to right. An action must be the last effect and ends the step.
- A rule without an action re-runs the (possibly new) current state on the same observation.
- If no rule fires the agent does Noop.
- greedy_toward takes the move that most reduces Manhattan distance; astar_toward follows a shortest path,
  paying extra to cross blocks of the avoided colors. Both give Noop at the target or if it does not exist.
- wall_adjacent(d) is true when the next cell in direction d is a wall or outside the grid.
- Pairs are (x, y) cells and only support == and !=. `#` starts a comment.

Example:
reg home = agent_pos
state out:
  holding() -> Interact
  wall_adjacent(right) -> goto(back)
  true -> Right
state back:
  at(home) -> goto(out)
  true -> greedy_toward(home)
"#;

const DYNAMICS: &str = "The world is a grid. x grows to the right and y grows downward; (0, 0) is the top-left cell. \
Cells outside the grid count as walls. Each step the agent takes one action: Up, Down, Left or Right moves one \
cell unless a wall is in the way (then nothing happens); Interact picks up the block on the agent's cell when \
its hands are empty, or drops the held block when the cell is free; Noop does nothing. Blocks do not block \
movement.";

const SCAFFOLD_LIGHT: &str = "Assume the agent is a finite state machine: it acts deterministically, \
and its choice depends only on what it sees and on a small internal state.";

const SCAFFOLD_MODERATE: &str = "Assume the agent is a finite state machine. Concretely:\n\
- A state is a mode of behavior, such as `moving_left` or `carrying`. Use one `state` block per mode.\n\
- Within a state, ordered rules map conditions on the observation to an action.\n\
- A transition (`goto`) happens when a condition shows that the current mode is over, \
for example a wall ahead or a block picked up.\n\
- Registers hold anything the agent must remember, such as where it started.\n\
Identify the states first, then the rule that ends each one, and only then write the program.";

const SCAFFOLD_SEVERE: &str = "Assume the agent is a finite state machine. \
It has been described in plain language as follows:\n\n{{fsm_description}}\n\n\
Translate this description into a program, one `state` block per described state.";

/// Placeholder in the second severe-condition stage for the stage-one text.
pub const FSM_PLACEHOLDER: &str = "{{fsm_description}}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptStage {
    pub kind: CallKind,
    pub messages: Vec<Message>,
}

/// The calls needed to produce one program: one stage, or two for the
/// severe condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptPlan {
    pub stages: Vec<PromptStage>,
}

impl PromptPlan {
    /// Fills the second severe stage with the first stage's answer.
    pub fn second_stage(&self, fsm_description: &str) -> Vec<Message> {
        self.stages[1]
            .messages
            .iter()
            .map(|m| Message { role: m.role.clone(), content: m.content.replace(FSM_PLACEHOLDER, fsm_description) })
            .collect()
    }
}

fn system_message() -> Message {
    Message::system(
        "You model other agents by writing short programs that reproduce their behavior. \
Prefer the shortest program that explains every observed action.",
    )
}

/// One line per observation: agent cell, inventory, blocks on the floor.
pub fn describe_observation(o: &Observation) -> String {
    let p = o.agent_pos();
    let held = o.held().map_or("nothing", |c| c.name());
    let blocks: Vec<String> = o.floor_blocks().iter().map(|(q, c)| format!("{} ({}, {})", c.name(), q.x, q.y)).collect();
    let blocks = if blocks.is_empty() { "none".to_string() } else { blocks.join(", ") };
    format!("agent at ({}, {}), holding {held}, blocks: {blocks}", p.x, p.y)
}

/// Grid size and interior walls.
pub fn describe_environment(o: &Observation) -> String {
    let mut s = format!("The grid is {} wide and {} tall.", o.width(), o.height());
    if o.walls().is_empty() {
        s.push_str(" There are no interior walls.");
    } else {
        let walls: Vec<String> = o.walls().iter().map(|w| format!("({}, {})", w.x, w.y)).collect();
        let _ = write!(s, " Interior walls: {}.", walls.join(", "));
    }
    s
}

/// Step-by-step listing of a history.
pub fn describe_history(h: &History) -> String {
    let mut out = String::new();
    for (o, a) in h.pairs() {
        let _ = writeln!(out, "t={}: {} -> {}", o.step_index(), describe_observation(o), a.name());
    }
    out
}

fn context_sections(h: &History, summary: Option<&str>) -> String {
    let first = h.first_observation().expect("non-empty history");
    let mut s = String::new();
    let _ = writeln!(s, "## Environment\n{DYNAMICS}\n{}\n", describe_environment(first));
    match summary {
        Some(text) => {
            let _ = writeln!(s, "## What the agent did\n{}\n", text.trim());
        }
        None => {
            let _ = writeln!(s, "## Observed steps\n{}", describe_history(h));
        }
    }
    if let Some(cur) = h.current() {
        let _ = writeln!(s, "## Current observation\nt={}: {}\n", cur.step_index(), describe_observation(cur));
    }
    s
}

fn program_task() -> &'static str {
    "## Task\nWrite one program that would have chosen every observed action and will keep acting like this \
agent. Keep it concise and efficient. Reply with the program only, inside a ```rote code block."
}

/// Builds the program-generation prompt(s). `summary` replaces the raw
/// step listing when two-stage parsing produced one.
pub fn build_prompt(history: &History, condition: Condition, summary: Option<&str>) -> Option<PromptPlan> {
    if history.is_empty() {
        return None;
    }
    let context = context_sections(history, summary);
    let program_stage = |scaffold: &str| PromptStage {
        kind: CallKind::Program,
        messages: vec![
            system_message(),
            Message::user(format!(
                "{context}## Language\n{DSL_REFERENCE}\n## Assumptions\n{scaffold}\n\n{}",
                program_task()
            )),
        ],
    };
    let stages = match condition {
        Condition::Light => vec![program_stage(SCAFFOLD_LIGHT)],
        Condition::Moderate => vec![program_stage(SCAFFOLD_MODERATE)],
        Condition::Severe => vec![
            PromptStage {
                kind: CallKind::FsmDescription,
                messages: vec![
                    system_message(),
                    Message::user(format!(
                        "{context}## Task\nDescribe, in plain language, a finite state machine that explains this \
agent. List its states, what it does in each state, and what makes it switch states. Do not write code."
                    )),
                ],
            },
            program_stage(SCAFFOLD_SEVERE),
        ],
    };
    Some(PromptPlan { stages })
}

/// First stage of two-stage parsing: ask for a prose account of the
/// trajectory.
pub fn summary_prompt(history: &History) -> Option<Vec<Message>> {
    if history.is_empty() {
        return None;
    }
    let first = history.first_observation().expect("non-empty history");
    Some(vec![
        system_message(),
        Message::user(format!(
            "## Environment\n{DYNAMICS}\n{}\n\n## Observed steps\n{}\n## Task\nSummarize this trajectory at a high \
level: where the agent goes, what it does with blocks, and any repeating pattern. Do not list coordinates.",
            describe_environment(first),
            describe_history(history)
        )),
    ])
}

/// Direct next-action prompt used by the naive baseline.
pub fn action_prompt(history: &History) -> Vec<Message> {
    let mut s = String::new();
    if let Some(first) = history.first_observation() {
        let _ = writeln!(s, "## Environment\n{DYNAMICS}\n{}\n", describe_environment(first));
    }
    let _ = writeln!(s, "## Observed steps\n{}", describe_history(history));
    if let Some(cur) = history.current() {
        let _ = writeln!(s, "## Current observation\nt={}: {}\n", cur.step_index(), describe_observation(cur));
    }
    let names: Vec<&str> = Action::ALL.iter().map(|a| a.name()).collect();
    let _ = write!(s, "## Task\nPredict the agent's next action. Answer with one word from: {}.", names.join(", "));
    vec![Message::system("You predict what an agent will do next."), Message::user(s)]
}

/// First action word in a reply, if any.
pub fn parse_action(text: &str) -> Option<Action> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| w.len() > 1)
        .find_map(|w| Action::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(w)))
}

/// Program text from a reply: the first fenced block, else the whole reply.
pub fn extract_program(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text.trim();
    };
    let body_start = text[open..].find('\n').map_or(text.len(), |i| open + i + 1);
    let body = &text[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridWorld, Pos};
    use crate::trajectory::{Source, Trajectory, TrajectoryMeta};

    fn history() -> History {
        let meta = TrajectoryMeta { id: "x".into(), source: Source::Simulated, script: None, seed: None, participant: None };
        let w = GridWorld::new(6, 4, Pos::new(2, 2)).unwrap();
        Trajectory::simulate(meta, w, 4, |_| Action::Left).history(3)
    }

    #[test]
    fn prompt_is_deterministic() {
        let h = history();
        assert_eq!(build_prompt(&h, Condition::Light, None), build_prompt(&h, Condition::Light, None));
    }

    #[test]
    fn empty_history_rejected() {
        assert!(build_prompt(&History::new(), Condition::Light, None).is_none());
        assert!(summary_prompt(&History::new()).is_none());
    }

    #[test]
    fn light_and_moderate_differ_in_one_region() {
        let h = history();
        let a = &build_prompt(&h, Condition::Light, None).unwrap().stages[0].messages[1].content;
        let b = &build_prompt(&h, Condition::Moderate, None).unwrap().stages[0].messages[1].content;
        assert_ne!(a, b);
        assert_eq!(a.matches(SCAFFOLD_LIGHT).count(), 1);
        assert_eq!(&a.replace(SCAFFOLD_LIGHT, SCAFFOLD_MODERATE), b);
    }

    #[test]
    fn severe_has_two_stages() {
        let plan = build_prompt(&history(), Condition::Severe, None).unwrap();
        assert_eq!(plan.stages.len(), 2);
        assert_eq!(plan.stages[0].kind, CallKind::FsmDescription);
        let filled = plan.second_stage("walks left forever");
        assert!(filled[1].content.contains("walks left forever"));
        assert!(!filled[1].content.contains(FSM_PLACEHOLDER));
    }

    #[test]
    fn summary_replaces_coordinates() {
        let plan = build_prompt(&history(), Condition::Light, Some("It walks left.")).unwrap();
        let text = &plan.stages[0].messages[1].content;
        assert!(text.contains("It walks left."));
        assert!(!text.contains("t=0:"));
    }

    #[test]
    fn extraction() {
        assert_eq!(extract_program("hi\n```rote\nstate a: true -> Up\n```\nbye"), "state a: true -> Up\n");
        assert_eq!(extract_program("state a: true -> Up"), "state a: true -> Up");
        assert_eq!(parse_action("I think: **Left**."), Some(Action::Left));
        assert_eq!(parse_action("no idea"), None);
    }
}
