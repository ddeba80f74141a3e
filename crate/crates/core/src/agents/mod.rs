//! The ten hand-designed finite-state-machine agents used as ground truth,
//! plus the dataset generator that runs them.

pub mod dataset;
pub mod planner;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grid::{Action, BlockFilter, Color, Corner, Dir, Observation, Pos};
use planner::{plan_step, PlannerQuery};

pub use planner::{PlanMode, BLOCK_PENALTY};

/// Identifies one of the scripted behaviors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptId {
    BlockCycle,
    ClockwisePatrol,
    CounterClockwisePatrol,
    LeftRightPatrol,
    PairBlueBlocks,
    PatrolAStar,
    LShapedPatrol,
    TransportGreen,
    SnakePatrol,
    UpDownPatrol,
}

impl ScriptId {
    pub const ALL: [ScriptId; 10] = [
        ScriptId::BlockCycle,
        ScriptId::ClockwisePatrol,
        ScriptId::CounterClockwisePatrol,
        ScriptId::LeftRightPatrol,
        ScriptId::PairBlueBlocks,
        ScriptId::PatrolAStar,
        ScriptId::LShapedPatrol,
        ScriptId::TransportGreen,
        ScriptId::SnakePatrol,
        ScriptId::UpDownPatrol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScriptId::BlockCycle => "block_cycle",
            ScriptId::ClockwisePatrol => "clockwise_patrol",
            ScriptId::CounterClockwisePatrol => "counter_clockwise_patrol",
            ScriptId::LeftRightPatrol => "left_right_patrol",
            ScriptId::PairBlueBlocks => "pair_blue_blocks",
            ScriptId::PatrolAStar => "patrol_a_star",
            ScriptId::LShapedPatrol => "l_shaped_patrol",
            ScriptId::TransportGreen => "transport_green",
            ScriptId::SnakePatrol => "snake_patrol",
            ScriptId::UpDownPatrol => "up_down_patrol",
        }
    }

    /// Scripts that drop a held block before doing anything else.
    pub fn drops_held_blocks(self) -> bool {
        !matches!(self, ScriptId::PairBlueBlocks | ScriptId::TransportGreen | ScriptId::SnakePatrol)
    }

    /// Labels of the declared FSM states (the L-shaped patrol additionally
    /// carries its home cell, which is fixed for a run).
    pub fn state_labels(self) -> &'static [&'static str] {
        match self {
            ScriptId::BlockCycle => &["green", "blue", "purple"],
            ScriptId::ClockwisePatrol | ScriptId::CounterClockwisePatrol => &[
                "approach_left",
                "approach_up",
                "follow_up",
                "follow_down",
                "follow_left",
                "follow_right",
            ],
            ScriptId::LeftRightPatrol => &["left", "right"],
            ScriptId::UpDownPatrol => &["up", "down"],
            ScriptId::PairBlueBlocks | ScriptId::TransportGreen => &["seek", "carry"],
            ScriptId::PatrolAStar => &["top_left", "top_right", "bottom_right", "bottom_left"],
            ScriptId::LShapedPatrol => &["down", "right", "back_left", "back_up"],
            ScriptId::SnakePatrol => &["down_right", "down_left", "up_right", "up_left"],
        }
    }
}

impl fmt::Display for ScriptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScriptId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScriptId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown script `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    Down,
    Right,
    BackLeft,
    BackUp,
}

/// Internal decision state of a scripted agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    /// Heading for the next block of this color.
    Cycle(Color),
    /// Off the border, alternating Left and Up; `next` is the next move.
    Approach { next: Dir },
    /// On the border, walking along it.
    Follow { heading: Dir },
    /// Back-and-forth along one axis.
    Sweep { heading: Dir },
    Seek,
    Carry,
    Corner(Corner),
    LPatrol { leg: Leg, home: Pos },
    Snake { vertical: Dir, horizontal: Dir },
}

impl FsmState {
    pub fn label(&self) -> String {
        match *self {
            FsmState::Cycle(c) => c.name().to_string(),
            FsmState::Approach { next } => format!("approach_{}", next.name()),
            FsmState::Follow { heading } => format!("follow_{}", heading.name()),
            FsmState::Sweep { heading } => heading.name().to_string(),
            FsmState::Seek => "seek".into(),
            FsmState::Carry => "carry".into(),
            FsmState::Corner(c) => c.name().to_string(),
            FsmState::LPatrol { leg, .. } => match leg {
                Leg::Down => "down",
                Leg::Right => "right",
                Leg::BackLeft => "back_left",
                Leg::BackUp => "back_up",
            }
            .to_string(),
            FsmState::Snake { vertical, horizontal } => format!("{}_{}", vertical.name(), horizontal.name()),
        }
    }
}

/// Upper bound on state changes within one step, matching the DSL
/// interpreter's budget. Exceeding it yields `Noop`.
const TRANSITION_BUDGET: usize = 64;

/// A ground-truth agent: a script plus its current FSM state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScriptedAgent {
    pub script: ScriptId,
    pub state: FsmState,
}

enum Outcome {
    Emit(Action),
    Goto(FsmState),
    EmitAndGoto(Action, FsmState),
}

impl ScriptedAgent {
    /// Creates the agent in its entry state for the world seen in `obs`.
    pub fn new(script: ScriptId, obs: &Observation) -> Self {
        let state = match script {
            ScriptId::BlockCycle => FsmState::Cycle(Color::Green),
            ScriptId::ClockwisePatrol | ScriptId::CounterClockwisePatrol => FsmState::Approach { next: Dir::Left },
            ScriptId::LeftRightPatrol => FsmState::Sweep { heading: Dir::Left },
            ScriptId::UpDownPatrol => FsmState::Sweep { heading: Dir::Up },
            ScriptId::PairBlueBlocks | ScriptId::TransportGreen => FsmState::Seek,
            ScriptId::PatrolAStar => FsmState::Corner(Corner::TopLeft),
            ScriptId::LShapedPatrol => FsmState::LPatrol { leg: Leg::Down, home: obs.agent_pos() },
            ScriptId::SnakePatrol => FsmState::Snake { vertical: Dir::Down, horizontal: Dir::Right },
        };
        ScriptedAgent { script, state }
    }

    /// Chooses the next action and returns the agent in its successor state.
    pub fn act(&self, obs: &Observation) -> (Action, ScriptedAgent) {
        if self.script.drops_held_blocks() && obs.held().is_some() {
            return (Action::Interact, *self);
        }
        let mut state = self.state;
        for _ in 0..TRANSITION_BUDGET {
            match self.decide(state, obs) {
                Outcome::Emit(a) => return (a, ScriptedAgent { state, ..*self }),
                Outcome::EmitAndGoto(a, next) => return (a, ScriptedAgent { state: next, ..*self }),
                Outcome::Goto(next) => state = next,
            }
        }
        (Action::Noop, *self)
    }

    fn decide(&self, state: FsmState, obs: &Observation) -> Outcome {
        use Outcome::*;
        let me = obs.agent_pos();
        let wall = |d: Dir| obs.wall_toward(d);
        match state {
            FsmState::Cycle(color) => {
                if obs.block_at(me) == Some(color) {
                    let next = match color {
                        Color::Green => Color::Blue,
                        Color::Blue => Color::Purple,
                        _ => Color::Green,
                    };
                    return Goto(FsmState::Cycle(next));
                }
                match obs.nearest_block(color, BlockFilter::Any) {
                    Some(goal) => Emit(plan_step(&PlannerQuery::greedy(me, goal), obs)),
                    None => Emit(Action::Noop),
                }
            }
            FsmState::Approach { next } => {
                if Dir::ALL.iter().any(|&d| wall(d)) {
                    let clockwise = self.script == ScriptId::ClockwisePatrol;
                    return Goto(FsmState::Follow { heading: border_entry(obs, clockwise) });
                }
                let after = if next == Dir::Left { Dir::Up } else { Dir::Left };
                EmitAndGoto(next.action(), FsmState::Approach { next: after })
            }
            FsmState::Follow { heading } => {
                if wall(heading) {
                    let turned = if self.script == ScriptId::ClockwisePatrol {
                        heading.clockwise()
                    } else {
                        heading.counter_clockwise()
                    };
                    Goto(FsmState::Follow { heading: turned })
                } else {
                    Emit(heading.action())
                }
            }
            FsmState::Sweep { heading } => {
                if wall(heading) {
                    let back = heading.opposite();
                    EmitAndGoto(back.action(), FsmState::Sweep { heading: back })
                } else {
                    Emit(heading.action())
                }
            }
            FsmState::Seek => {
                if obs.held().is_some() {
                    return Goto(FsmState::Carry);
                }
                let (color, filter) = match self.script {
                    ScriptId::PairBlueBlocks => (Color::Blue, BlockFilter::Lonely),
                    _ => (Color::Green, BlockFilter::OffCorner),
                };
                match obs.nearest_block(color, filter) {
                    None => Emit(Action::Noop),
                    Some(t) if t == me => EmitAndGoto(Action::Interact, FsmState::Carry),
                    Some(t) => Emit(plan_step(&PlannerQuery::astar(me, t), obs)),
                }
            }
            FsmState::Carry => {
                if obs.held().is_none() {
                    return Goto(FsmState::Seek);
                }
                let site = match self.script {
                    ScriptId::PairBlueBlocks => {
                        obs.nearest_block(Color::Blue, BlockFilter::Any).and_then(|b| obs.beside(b))
                    }
                    _ => obs.empty_corner(),
                };
                match site {
                    None => Emit(Action::Noop),
                    Some(s) if s == me => EmitAndGoto(Action::Interact, FsmState::Seek),
                    Some(s) => Emit(plan_step(&PlannerQuery::astar(me, s), obs)),
                }
            }
            FsmState::Corner(corner) => {
                let goal = obs.corner(corner);
                if me == goal {
                    let next = match corner {
                        Corner::TopLeft => Corner::TopRight,
                        Corner::TopRight => Corner::BottomRight,
                        Corner::BottomRight => Corner::BottomLeft,
                        Corner::BottomLeft => Corner::TopLeft,
                    };
                    return Goto(FsmState::Corner(next));
                }
                let q = PlannerQuery::astar(me, goal).avoiding(obs.floor_blocks().keys().copied());
                Emit(plan_step(&q, obs))
            }
            FsmState::LPatrol { leg, home } => {
                let go = |leg| Goto(FsmState::LPatrol { leg, home });
                match leg {
                    Leg::Down if wall(Dir::Down) => go(Leg::Right),
                    Leg::Down => Emit(Action::Down),
                    Leg::Right if wall(Dir::Right) => go(Leg::BackLeft),
                    Leg::Right => Emit(Action::Right),
                    Leg::BackLeft if me.x <= home.x => go(Leg::BackUp),
                    Leg::BackLeft => Emit(Action::Left),
                    Leg::BackUp if me.y <= home.y => go(Leg::Down),
                    Leg::BackUp => Emit(Action::Up),
                }
            }
            FsmState::Snake { vertical, horizontal } => {
                if !wall(horizontal) {
                    Emit(horizontal.action())
                } else if !wall(vertical) {
                    EmitAndGoto(
                        vertical.action(),
                        FsmState::Snake { vertical, horizontal: horizontal.opposite() },
                    )
                } else {
                    Goto(FsmState::Snake { vertical: vertical.opposite(), horizontal })
                }
            }
        }
    }
}

/// Heading taken when a border patrol first reaches a wall.
fn border_entry(obs: &Observation, clockwise: bool) -> Dir {
    let wall = |d: Dir| obs.wall_toward(d);
    // Walk so that the wall stays on the agent's outer side.
    let turns: [(Dir, Dir); 3] = if clockwise {
        [(Dir::Up, Dir::Right), (Dir::Right, Dir::Down), (Dir::Down, Dir::Left)]
    } else {
        [(Dir::Up, Dir::Left), (Dir::Left, Dir::Down), (Dir::Down, Dir::Right)]
    };
    turns
        .into_iter()
        .find(|&(side, go)| wall(side) && !wall(go))
        .map_or(Dir::Up, |(_, go)| go)
}

/// Free-function form of [`ScriptedAgent::act`].
pub fn act(agent: &ScriptedAgent, obs: &Observation) -> (Action, ScriptedAgent) {
    agent.act(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridWorld;

    fn run(script: ScriptId, world: GridWorld, n: usize) -> (Vec<Action>, GridWorld, Vec<FsmState>) {
        let mut agent = ScriptedAgent::new(script, &world.observe());
        let mut world = world;
        let mut actions = Vec::new();
        let mut states = Vec::new();
        for _ in 0..n {
            let (a, next) = agent.act(&world.observe());
            actions.push(a);
            states.push(next.state);
            world = world.step(a);
            agent = next;
        }
        (actions, world, states)
    }

    fn at(x: i32, y: i32) -> GridWorld {
        GridWorld::new(10, 10, Pos::new(x, y)).unwrap()
    }

    #[test]
    fn left_right_turns_without_wasted_move() {
        use Action::{Left as L, Right as R};
        let (actions, _, _) = run(ScriptId::LeftRightPatrol, at(5, 5), 8);
        assert_eq!(actions, vec![L, L, L, L, L, R, R, R]);
    }

    #[test]
    fn up_down_drops_first() {
        let w = at(4, 4).with_inventory(Some(Color::Pink));
        let (actions, world, _) = run(ScriptId::UpDownPatrol, w, 2);
        assert_eq!(actions, vec![Action::Interact, Action::Up]);
        assert_eq!(world.block_at(Pos::new(4, 4)), Some(Color::Pink));
    }

    #[test]
    fn snake_steps_down_at_right_wall() {
        let obs = at(9, 3).observe();
        let agent = ScriptedAgent::new(ScriptId::SnakePatrol, &obs);
        let (a, next) = agent.act(&obs);
        assert_eq!(a, Action::Down);
        assert_eq!(next.state, FsmState::Snake { vertical: Dir::Down, horizontal: Dir::Left });
    }

    #[test]
    fn snake_turns_upward_at_bottom_right() {
        let obs = at(9, 9).observe();
        let agent = ScriptedAgent::new(ScriptId::SnakePatrol, &obs);
        let (a, next) = agent.act(&obs);
        assert_eq!(a, Action::Up);
        assert_eq!(next.state, FsmState::Snake { vertical: Dir::Up, horizontal: Dir::Left });
    }

    #[test]
    fn clockwise_stays_on_border() {
        let (_, _, _) = run(ScriptId::ClockwisePatrol, at(6, 3), 1);
        let mut world = at(6, 3);
        let mut agent = ScriptedAgent::new(ScriptId::ClockwisePatrol, &world.observe());
        let on_border = |p: Pos| p.x == 0 || p.y == 0 || p.x == 9 || p.y == 9;
        let mut reached = false;
        for _ in 0..120 {
            let (a, next) = agent.act(&world.observe());
            world = world.step(a);
            agent = next;
            if reached {
                assert!(on_border(world.agent_pos()), "left border at {}", world.agent_pos());
            }
            reached |= on_border(world.agent_pos());
        }
        assert!(reached);
    }

    #[test]
    fn clockwise_and_counter_clockwise_diverge_on_top_edge() {
        let (cw, _, _) = run(ScriptId::ClockwisePatrol, at(3, 0), 1);
        let (ccw, _, _) = run(ScriptId::CounterClockwisePatrol, at(3, 0), 1);
        assert_eq!(cw, vec![Action::Right]);
        assert_eq!(ccw, vec![Action::Left]);
    }

    #[test]
    fn approach_alternates_starting_left() {
        let (actions, _, _) = run(ScriptId::ClockwisePatrol, at(5, 5), 4);
        assert_eq!(actions, vec![Action::Left, Action::Up, Action::Left, Action::Up]);
    }

    #[test]
    fn block_cycle_visits_in_order() {
        let w = at(0, 0)
            .with_block(Pos::new(2, 0), Color::Green)
            .unwrap()
            .with_block(Pos::new(2, 3), Color::Blue)
            .unwrap()
            .with_block(Pos::new(6, 3), Color::Purple)
            .unwrap();
        let mut world = w;
        let mut agent = ScriptedAgent::new(ScriptId::BlockCycle, &world.observe());
        let mut visits = Vec::new();
        for _ in 0..60 {
            let (a, next) = agent.act(&world.observe());
            world = world.step(a);
            agent = next;
            if let Some(c) = world.block_at(world.agent_pos()) {
                if visits.last() != Some(&c) {
                    visits.push(c);
                }
            }
        }
        let expected: Vec<Color> =
            [Color::Green, Color::Blue, Color::Purple].iter().cycle().take(visits.len()).copied().collect();
        assert!(visits.len() >= 6, "{visits:?}");
        assert_eq!(visits, expected);
    }

    #[test]
    fn l_shape_returns_home() {
        let (_, world, states) = run(ScriptId::LShapedPatrol, at(4, 7), 14);
        // 2 down, 5 right, 5 left, 2 up.
        assert_eq!(world.agent_pos(), Pos::new(4, 7));
        assert!(states.iter().all(|s| matches!(s, FsmState::LPatrol { home, .. } if *home == Pos::new(4, 7))));
    }

    #[test]
    fn transport_green_delivers_to_empty_corner() {
        let w = at(5, 5).with_block(Pos::new(5, 7), Color::Green).unwrap();
        let (_, world, _) = run(ScriptId::TransportGreen, w, 30);
        assert_eq!(world.block_at(Pos::new(0, 0)), Some(Color::Green));
        assert_eq!(world.held(), None);
    }

    #[test]
    fn pair_blue_brings_blocks_together() {
        let w = at(0, 0)
            .with_block(Pos::new(1, 1), Color::Blue)
            .unwrap()
            .with_block(Pos::new(7, 6), Color::Blue)
            .unwrap();
        let (_, world, _) = run(ScriptId::PairBlueBlocks, w, 40);
        assert_eq!(world.held(), None);
        let blues: Vec<Pos> = world.floor_blocks().iter().filter(|(_, &c)| c == Color::Blue).map(|(&p, _)| p).collect();
        assert_eq!(blues.len(), 2);
        assert_eq!(blues[0].manhattan(blues[1]), 1);
    }

    #[test]
    fn patrol_astar_routes_around_blocks() {
        let w = at(3, 0).with_block(Pos::new(1, 0), Color::Pink).unwrap();
        let (actions, _, _) = run(ScriptId::PatrolAStar, w, 3);
        // Straight left would cost 1 + 5 + 1; going down a row costs 4.
        assert_eq!(actions[0], Action::Down);
    }

    #[test]
    fn states_stay_within_declared_labels() {
        let w = at(3, 6)
            .with_block(Pos::new(1, 1), Color::Blue)
            .unwrap()
            .with_block(Pos::new(8, 2), Color::Green)
            .unwrap()
            .with_block(Pos::new(5, 8), Color::Purple)
            .unwrap()
            .with_block(Pos::new(2, 5), Color::Blue)
            .unwrap();
        for script in ScriptId::ALL {
            let (_, _, states) = run(script, w.clone(), 80);
            for s in states {
                assert!(script.state_labels().contains(&s.label().as_str()), "{script}: {}", s.label());
            }
        }
    }
}
