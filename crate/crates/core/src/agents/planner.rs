//! One-step planners shared by the scripted agents and the DSL builtins.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use crate::grid::{Action, Dir, GridWorld, Pos};

/// Extra cost for stepping onto a forbidden cell. Large enough that short
/// detours win, small enough that very long detours lose.
pub const BLOCK_PENALTY: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PlanMode {
    Astar,
    ManhattanGreedy,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannerQuery {
    pub start: Pos,
    pub goal: Pos,
    /// Cells that cost [`BLOCK_PENALTY`] extra to enter (A* mode only).
    pub forbidden: BTreeSet<Pos>,
    pub mode: PlanMode,
}

impl PlannerQuery {
    pub fn astar(start: Pos, goal: Pos) -> Self {
        PlannerQuery { start, goal, forbidden: BTreeSet::new(), mode: PlanMode::Astar }
    }

    pub fn greedy(start: Pos, goal: Pos) -> Self {
        PlannerQuery { start, goal, forbidden: BTreeSet::new(), mode: PlanMode::ManhattanGreedy }
    }

    pub fn avoiding(mut self, cells: impl IntoIterator<Item = Pos>) -> Self {
        self.forbidden.extend(cells);
        self
    }
}

/// First action toward `query.goal`.
///
/// A* mode returns the first move of a minimal-cost path; greedy mode the
/// legal move with the smallest Manhattan distance to the goal. Ties go to
/// the earlier action in [`Action`] order. At the goal, or when the goal
/// cannot be reached, the answer is `Noop`.
pub fn plan_step(query: &PlannerQuery, world: &GridWorld) -> Action {
    let PlannerQuery { start, goal, .. } = *query;
    if start == goal || world.is_wall(goal) {
        return Action::Noop;
    }
    let legal = Dir::ALL.into_iter().filter(|&d| !world.is_wall(start.offset(d)));
    let best = match query.mode {
        PlanMode::ManhattanGreedy => legal
            .map(|d| (start.offset(d).manhattan(goal) as u32, d))
            .min_by_key(|&(cost, d)| (cost, d)),
        PlanMode::Astar => legal
            .filter_map(|d| {
                let next = start.offset(d);
                let rest = path_cost(world, next, goal, &query.forbidden)?;
                Some((enter_cost(next, &query.forbidden) + rest, d))
            })
            .min_by_key(|&(cost, d)| (cost, d)),
    };
    best.map_or(Action::Noop, |(_, d)| d.action())
}

fn enter_cost(p: Pos, forbidden: &BTreeSet<Pos>) -> u32 {
    if forbidden.contains(&p) {
        1 + BLOCK_PENALTY
    } else {
        1
    }
}

/// Minimal cost from `from` to `to` with A* (Manhattan heuristic, which is
/// admissible because every step costs at least 1).
pub fn path_cost(world: &GridWorld, from: Pos, to: Pos, forbidden: &BTreeSet<Pos>) -> Option<u32> {
    if world.is_wall(from) || world.is_wall(to) {
        return None;
    }
    let h = |p: Pos| p.manhattan(to) as u32;
    let mut best: HashMap<Pos, u32> = HashMap::new();
    let mut open = BinaryHeap::new();
    best.insert(from, 0);
    open.push(Reverse((h(from), 0u32, from)));
    while let Some(Reverse((_, g, p))) = open.pop() {
        if p == to {
            return Some(g);
        }
        if best.get(&p).is_some_and(|&b| b < g) {
            continue;
        }
        for d in Dir::ALL {
            let q = p.offset(d);
            if world.is_wall(q) {
                continue;
            }
            let ng = g + enter_cost(q, forbidden);
            if best.get(&q).is_none_or(|&b| ng < b) {
                best.insert(q, ng);
                open.push(Reverse((ng + h(q), ng, q)));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Color;

    fn world() -> GridWorld {
        GridWorld::new(10, 10, Pos::new(0, 0)).unwrap()
    }

    /// Bellman-Ford relaxation over every cell; independent of the A* path.
    fn oracle_costs(world: &GridWorld, goal: Pos, forbidden: &BTreeSet<Pos>) -> HashMap<Pos, u32> {
        let mut dist = HashMap::new();
        dist.insert(goal, 0u32);
        let cells: Vec<Pos> = (0..world.width())
            .flat_map(|x| (0..world.height()).map(move |y| Pos::new(x, y)))
            .filter(|&p| !world.is_wall(p))
            .collect();
        loop {
            let mut changed = false;
            for &p in &cells {
                for d in Dir::ALL {
                    let q = p.offset(d);
                    if let Some(&dq) = dist.get(&q) {
                        let c = dq + if forbidden.contains(&q) { 1 + BLOCK_PENALTY } else { 1 };
                        if dist.get(&p).is_none_or(|&dp| c < dp) {
                            dist.insert(p, c);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return dist;
            }
        }
    }

    fn oracle_first_action(world: &GridWorld, start: Pos, goal: Pos, forbidden: &BTreeSet<Pos>) -> Action {
        if start == goal {
            return Action::Noop;
        }
        let dist = oracle_costs(world, goal, forbidden);
        Dir::ALL
            .into_iter()
            .filter(|&d| !world.is_wall(start.offset(d)))
            .filter_map(|d| {
                let q = start.offset(d);
                let c = dist.get(&q)? + if forbidden.contains(&q) { 1 + BLOCK_PENALTY } else { 1 };
                Some((c, d))
            })
            .min()
            .map_or(Action::Noop, |(_, d)| d.action())
    }

    #[test]
    fn at_goal_is_noop() {
        let q = PlannerQuery::astar(Pos::new(2, 2), Pos::new(2, 2));
        assert_eq!(plan_step(&q, &world()), Action::Noop);
    }

    #[test]
    fn straight_line() {
        let q = PlannerQuery::astar(Pos::new(2, 2), Pos::new(5, 2));
        assert_eq!(plan_step(&q, &world()), Action::Right);
        let q = PlannerQuery::greedy(Pos::new(2, 2), Pos::new(5, 2));
        assert_eq!(plan_step(&q, &world()), Action::Right);
    }

    #[test]
    fn penalised_block_forces_detour() {
        let w = world().with_block(Pos::new(2, 1), Color::Green).unwrap();
        let forbidden: BTreeSet<Pos> = [Pos::new(2, 1)].into();
        let q = PlannerQuery::astar(Pos::new(1, 1), Pos::new(3, 1)).avoiding(forbidden.clone());
        let got = plan_step(&q, &w);
        // Straight costs 2 + 5; the detour via row 0 or row 2 costs 4.
        assert_eq!(got, Action::Up);
        assert_eq!(got, oracle_first_action(&w, Pos::new(1, 1), Pos::new(3, 1), &forbidden));
    }

    #[test]
    fn long_detour_loses_to_penalty() {
        // A wall column with a single gap that holds a block: crossing the
        // block is cheaper than any way around.
        let mut w = world();
        for y in 0..10 {
            if y != 5 {
                w = w.with_wall(Pos::new(4, y)).unwrap();
            }
        }
        let w = w.with_block(Pos::new(4, 5), Color::Blue).unwrap();
        let q = PlannerQuery::astar(Pos::new(3, 5), Pos::new(5, 5)).avoiding([Pos::new(4, 5)]);
        assert_eq!(plan_step(&q, &w), Action::Right);
    }

    #[test]
    fn unreachable_goal_is_noop() {
        let mut w = world();
        for y in 0..10 {
            w = w.with_wall(Pos::new(4, y)).unwrap();
        }
        let q = PlannerQuery::astar(Pos::new(1, 1), Pos::new(8, 8));
        assert_eq!(plan_step(&q, &w), Action::Noop);
        let q = PlannerQuery::astar(Pos::new(1, 1), Pos::new(20, 8));
        assert_eq!(plan_step(&q, &w), Action::Noop);
    }

    #[test]
    fn greedy_breaks_ties_by_action_order() {
        // Goal up-left: Up and Left both reduce distance; Up comes first.
        let q = PlannerQuery::greedy(Pos::new(5, 5), Pos::new(2, 2));
        assert_eq!(plan_step(&q, &world()), Action::Up);
    }

    #[test]
    fn astar_matches_bruteforce_on_random_layouts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut w = world();
            let mut forbidden = BTreeSet::new();
            for _ in 0..rng.random_range(0..15) {
                let p = Pos::new(rng.random_range(0..10), rng.random_range(0..10));
                if p != Pos::new(0, 0) {
                    w = w.with_wall(p).unwrap();
                }
            }
            for _ in 0..rng.random_range(0..10) {
                let p = Pos::new(rng.random_range(0..10), rng.random_range(0..10));
                if !w.is_wall(p) {
                    forbidden.insert(p);
                }
            }
            let start = Pos::new(rng.random_range(0..10), rng.random_range(0..10));
            let goal = Pos::new(rng.random_range(0..10), rng.random_range(0..10));
            if w.is_wall(start) {
                continue;
            }
            let q = PlannerQuery::astar(start, goal).avoiding(forbidden.iter().copied());
            let want = if w.is_wall(goal) {
                Action::Noop
            } else {
                oracle_first_action(&w, start, goal, &forbidden)
            };
            assert_eq!(plan_step(&q, &w), want, "start {start} goal {goal}\n{w}");
        }
    }
}
