//! The *Construction* gridworld: a fully observable, deterministic 2D grid in
//! which a single agent walks around walls and carries colored blocks.
//!
//! Coordinates are `(x, y)` with `x` growing to the right and `y` growing
//! downward; the origin is the top-left cell. Every cell outside
//! `[0, width) x [0, height)` behaves as wall, so the outer border is always
//! closed. The `walls` set holds only interior walls.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A cell coordinate. Ordered lexicographically by `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn offset(self, dir: Dir) -> Pos {
        let (dx, dy) = dir.delta();
        Pos::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Pos) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

impl From<[i32; 2]> for Pos {
    fn from([x, y]: [i32; 2]) -> Self {
        Pos { x, y }
    }
}

impl From<Pos> for [i32; 2] {
    fn from(p: Pos) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// A movement direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dir {
    Up,
    Down,
    Left,
    Right,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::Up, Dir::Down, Dir::Left, Dir::Right];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::Up => (0, -1),
            Dir::Down => (0, 1),
            Dir::Left => (-1, 0),
            Dir::Right => (1, 0),
        }
    }

    pub fn opposite(self) -> Dir {
        match self {
            Dir::Up => Dir::Down,
            Dir::Down => Dir::Up,
            Dir::Left => Dir::Right,
            Dir::Right => Dir::Left,
        }
    }

    /// Next heading when turning clockwise (right, down, left, up, right...).
    pub fn clockwise(self) -> Dir {
        match self {
            Dir::Right => Dir::Down,
            Dir::Down => Dir::Left,
            Dir::Left => Dir::Up,
            Dir::Up => Dir::Right,
        }
    }

    pub fn counter_clockwise(self) -> Dir {
        match self {
            Dir::Left => Dir::Down,
            Dir::Down => Dir::Right,
            Dir::Right => Dir::Up,
            Dir::Up => Dir::Left,
        }
    }

    pub fn action(self) -> Action {
        match self {
            Dir::Up => Action::Up,
            Dir::Down => Action::Down,
            Dir::Left => Action::Left,
            Dir::Right => Action::Right,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dir::Up => "up",
            Dir::Down => "down",
            Dir::Left => "left",
            Dir::Right => "right",
        }
    }
}

/// Block colors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Green,
    Blue,
    Purple,
    Pink,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Green, Color::Blue, Color::Purple, Color::Pink];

    pub fn name(self) -> &'static str {
        match self {
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Purple => "purple",
            Color::Pink => "pink",
        }
    }
}

impl FromStr for Color {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Color::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown color `{s}`"))
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The six discrete actions. The declaration order is the tie-break order
/// used everywhere an argmax or a planner has to choose between equals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Interact,
    Noop,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; Action::COUNT] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Interact,
        Action::Noop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn dir(self) -> Option<Dir> {
        match self {
            Action::Up => Some(Dir::Up),
            Action::Down => Some(Dir::Down),
            Action::Left => Some(Dir::Left),
            Action::Right => Some(Dir::Right),
            Action::Interact | Action::Noop => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "Up",
            Action::Down => "Down",
            Action::Left => "Left",
            Action::Right => "Right",
            Action::Interact => "Interact",
            Action::Noop => "Noop",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    /// Case-insensitive; also accepts the short forms `U D L R I N`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let found = Action::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(t));
        if let Some(a) = found {
            return Ok(a);
        }
        match t {
            "U" | "u" => Ok(Action::Up),
            "D" | "d" => Ok(Action::Down),
            "L" | "l" => Ok(Action::Left),
            "R" | "r" => Ok(Action::Right),
            "I" | "i" => Ok(Action::Interact),
            "N" | "n" => Ok(Action::Noop),
            _ => Err(format!("unknown action `{t}`")),
        }
    }
}

/// Where a block currently is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockPos {
    Cell(Pos),
    Held,
}

/// A colored block, either on the floor or in the agent's inventory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub color: Color,
    pub position: BlockPos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub position: Pos,
    /// Color of the held block, if any. A held block is not on the floor.
    pub inventory: Option<Color>,
}

/// The named extreme cells of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomRight,
    BottomLeft,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::TopLeft, Corner::TopRight, Corner::BottomRight, Corner::BottomLeft];

    pub fn name(self) -> &'static str {
        match self {
            Corner::TopLeft => "top_left",
            Corner::TopRight => "top_right",
            Corner::BottomRight => "bottom_right",
            Corner::BottomLeft => "bottom_left",
        }
    }
}

/// Extra constraints for block queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockFilter {
    Any,
    /// No orthogonal neighbor holds a block of the same color.
    Lonely,
    /// Not sitting on one of the four corner cells.
    OffCorner,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("grid dimensions must be positive, got {width}x{height}")]
    BadDimensions { width: i32, height: i32 },
    #[error("{what} at {pos} is outside the {width}x{height} grid")]
    OutOfBounds { what: &'static str, pos: Pos, width: i32, height: i32 },
    #[error("agent at {0} stands on a wall")]
    AgentOnWall(Pos),
    #[error("block at {0} sits on a wall")]
    BlockOnWall(Pos),
}

/// Full gridworld state. Value type: `step` returns a new world.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridWorld {
    width: i32,
    height: i32,
    walls: BTreeSet<Pos>,
    blocks: BTreeMap<Pos, Color>,
    agent: AgentPose,
    step_index: u64,
}

impl GridWorld {
    pub const DEFAULT_SIZE: i32 = 10;

    /// An empty `width x height` world with the agent at `agent`.
    pub fn new(width: i32, height: i32, agent: Pos) -> Result<Self, WorldError> {
        let w = GridWorld {
            width,
            height,
            walls: BTreeSet::new(),
            blocks: BTreeMap::new(),
            agent: AgentPose { position: agent, inventory: None },
            step_index: 0,
        };
        w.validate()?;
        Ok(w)
    }

    /// Assemble a world from parts, checking every invariant.
    pub fn from_parts(
        width: i32,
        height: i32,
        walls: impl IntoIterator<Item = Pos>,
        blocks: impl IntoIterator<Item = (Pos, Color)>,
        agent: AgentPose,
        step_index: u64,
    ) -> Result<Self, WorldError> {
        let w = GridWorld {
            width,
            height,
            walls: walls.into_iter().collect(),
            blocks: blocks.into_iter().collect(),
            agent,
            step_index,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_wall(mut self, pos: Pos) -> Result<Self, WorldError> {
        self.walls.insert(pos);
        self.validate()?;
        Ok(self)
    }

    /// Places (or recolors) a floor block.
    pub fn with_block(mut self, pos: Pos, color: Color) -> Result<Self, WorldError> {
        self.blocks.insert(pos, color);
        self.validate()?;
        Ok(self)
    }

    pub fn with_inventory(mut self, held: Option<Color>) -> Self {
        self.agent.inventory = held;
        self
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.width <= 0 || self.height <= 0 {
            return Err(WorldError::BadDimensions { width: self.width, height: self.height });
        }
        let oob = |what, pos| WorldError::OutOfBounds { what, pos, width: self.width, height: self.height };
        for &p in &self.walls {
            if !self.in_bounds(p) {
                return Err(oob("wall", p));
            }
        }
        for &p in self.blocks.keys() {
            if !self.in_bounds(p) {
                return Err(oob("block", p));
            }
            if self.walls.contains(&p) {
                return Err(WorldError::BlockOnWall(p));
            }
        }
        let a = self.agent.position;
        if !self.in_bounds(a) {
            return Err(oob("agent", a));
        }
        if self.walls.contains(&a) {
            return Err(WorldError::AgentOnWall(a));
        }
        Ok(())
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn walls(&self) -> &BTreeSet<Pos> {
        &self.walls
    }

    pub fn floor_blocks(&self) -> &BTreeMap<Pos, Color> {
        &self.blocks
    }

    /// All blocks, floor blocks in cell order followed by the held block.
    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        self.blocks
            .iter()
            .map(|(&p, &color)| Block { color, position: BlockPos::Cell(p) })
            .chain(self.agent.inventory.map(|color| Block { color, position: BlockPos::Held }))
    }

    pub fn agent(&self) -> &AgentPose {
        &self.agent
    }

    pub fn agent_pos(&self) -> Pos {
        self.agent.position
    }

    pub fn held(&self) -> Option<Color> {
        self.agent.inventory
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    /// True for interior walls and for every cell outside the grid.
    pub fn is_wall(&self, p: Pos) -> bool {
        !self.in_bounds(p) || self.walls.contains(&p)
    }

    /// Whether the neighbor of the agent in `dir` is a wall.
    pub fn wall_toward(&self, dir: Dir) -> bool {
        self.is_wall(self.agent.position.offset(dir))
    }

    pub fn block_at(&self, p: Pos) -> Option<Color> {
        self.blocks.get(&p).copied()
    }

    /// The four corner cells, in [`Corner::ALL`] order.
    pub fn corner(&self, c: Corner) -> Pos {
        let (r, b) = (self.width - 1, self.height - 1);
        match c {
            Corner::TopLeft => Pos::new(0, 0),
            Corner::TopRight => Pos::new(r, 0),
            Corner::BottomRight => Pos::new(r, b),
            Corner::BottomLeft => Pos::new(0, b),
        }
    }

    pub fn is_corner(&self, p: Pos) -> bool {
        Corner::ALL.iter().any(|&c| self.corner(c) == p)
    }

    /// Lexicographically first corner cell that is neither wall nor block.
    pub fn empty_corner(&self) -> Option<Pos> {
        let mut corners: Vec<Pos> = Corner::ALL.iter().map(|&c| self.corner(c)).collect();
        corners.sort();
        corners.into_iter().find(|&p| !self.is_wall(p) && !self.blocks.contains_key(&p))
    }

    fn passes(&self, p: Pos, color: Color, filter: BlockFilter) -> bool {
        match filter {
            BlockFilter::Any => true,
            BlockFilter::Lonely => Dir::ALL.iter().all(|&d| self.block_at(p.offset(d)) != Some(color)),
            BlockFilter::OffCorner => !self.is_corner(p),
        }
    }

    /// Closest floor block of `color` to the agent by Manhattan distance,
    /// ties broken by cell order.
    pub fn nearest_block(&self, color: Color, filter: BlockFilter) -> Option<Pos> {
        let me = self.agent.position;
        self.blocks
            .iter()
            .filter(|&(&p, &c)| c == color && self.passes(p, c, filter))
            .map(|(&p, _)| p)
            .min_by_key(|&p| (p.manhattan(me), p))
    }

    /// First neighbor of `p` (in Up, Down, Left, Right order) that is free
    /// floor: in bounds, no wall, no block.
    pub fn beside(&self, p: Pos) -> Option<Pos> {
        Dir::ALL
            .iter()
            .map(|&d| p.offset(d))
            .find(|&q| !self.is_wall(q) && !self.blocks.contains_key(&q))
    }

    /// Applies one action. Blocked moves and impossible interactions leave
    /// everything but `step_index` unchanged.
    pub fn step(&self, action: Action) -> GridWorld {
        let mut next = self.clone();
        let here = self.agent.position;
        match action {
            Action::Up | Action::Down | Action::Left | Action::Right => {
                let dir = action.dir().expect("movement action");
                let target = here.offset(dir);
                if !self.is_wall(target) {
                    next.agent.position = target;
                }
            }
            Action::Interact => match (self.agent.inventory, self.blocks.get(&here)) {
                (None, Some(&color)) => {
                    next.blocks.remove(&here);
                    next.agent.inventory = Some(color);
                }
                (Some(color), None) => {
                    next.blocks.insert(here, color);
                    next.agent.inventory = None;
                }
                _ => {}
            },
            Action::Noop => {}
        }
        next.step_index += 1;
        next
    }

    /// Multiset of block colors, held block included.
    pub fn color_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for b in self.blocks() {
            counts[b.color as usize] += 1;
        }
        counts
    }

    pub fn observe(&self) -> Observation {
        Observation(Arc::new(self.clone()))
    }
}

/// Free-function form of [`GridWorld::step`].
pub fn step(world: &GridWorld, action: Action) -> GridWorld {
    world.step(action)
}

/// Free-function form of [`GridWorld::observe`].
pub fn observe(world: &GridWorld) -> Observation {
    world.observe()
}

/// An immutable, cheaply clonable snapshot of the world.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Observation(Arc<GridWorld>);

impl Observation {
    pub fn world(&self) -> &GridWorld {
        &self.0
    }

    pub fn to_world(&self) -> GridWorld {
        (*self.0).clone()
    }
}

impl Deref for Observation {
    type Target = GridWorld;

    fn deref(&self) -> &GridWorld {
        &self.0
    }
}

impl From<GridWorld> for Observation {
    fn from(w: GridWorld) -> Self {
        Observation(Arc::new(w))
    }
}

impl fmt::Display for GridWorld {
    /// ASCII rendering: `#` wall, `.` floor, `G B P K` blocks, `@` agent.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.height {
            for x in 0..self.width {
                let p = Pos::new(x, y);
                let ch = if p == self.agent.position {
                    '@'
                } else if self.walls.contains(&p) {
                    '#'
                } else {
                    match self.blocks.get(&p) {
                        Some(Color::Green) => 'G',
                        Some(Color::Blue) => 'B',
                        Some(Color::Purple) => 'P',
                        Some(Color::Pink) => 'K',
                        None => '.',
                    }
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        if let Some(c) = self.agent.inventory {
            writeln!(f, "holding {c}")?;
        }
        Ok(())
    }
}
