use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rote::agents::dataset::{random_world, WorldGenConfig};
use rote::agents::ScriptId;
use rote::codec::{from_canonical, to_canonical};
use rote::grid::{Action, AgentPose, Color, GridWorld, Observation, Pos};

fn color() -> impl Strategy<Value = Color> {
    prop::sample::select(Color::ALL.to_vec())
}

fn action() -> impl Strategy<Value = Action> {
    prop::sample::select(Action::ALL.to_vec())
}

/// Arbitrary valid worlds: any size from 1x1, interior walls, blocks, and
/// possibly a held block.
fn world() -> impl Strategy<Value = GridWorld> {
    (1i32..=12, 1i32..=12)
        .prop_flat_map(|(w, h)| {
            let cell = (0..w, 0..h).prop_map(|(x, y)| Pos::new(x, y));
            (
                Just((w, h)),
                prop::collection::btree_set(cell.clone(), 0..8),
                prop::collection::btree_map(cell.clone(), color(), 0..8),
                cell,
                prop::option::of(color()),
                0u64..1000,
            )
        })
        .prop_filter_map("agent on a wall or held block over a floor block", |((w, h), walls, blocks, agent, held, t)| {
            let blocks: Vec<_> = blocks.into_iter().filter(|(p, _)| !walls.contains(p)).collect();
            GridWorld::from_parts(w, h, walls, blocks, AgentPose { position: agent, inventory: held }, t).ok()
        })
}

fn run(world: &GridWorld, actions: &[Action]) -> GridWorld {
    actions.iter().fold(world.clone(), |w, &a| w.step(a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn replay_is_deterministic(w in world(), actions in prop::collection::vec(action(), 0..60)) {
        let a = to_canonical(&run(&w, &actions).observe()).unwrap();
        let b = to_canonical(&run(&w, &actions).observe()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn blocks_are_conserved(w in world(), actions in prop::collection::vec(action(), 0..60)) {
        let start = w.color_counts();
        let mut cur = w;
        for a in actions {
            cur = cur.step(a);
            prop_assert_eq!(cur.color_counts(), start);
        }
    }

    #[test]
    fn invariants_hold_after_every_step(w in world(), actions in prop::collection::vec(action(), 0..60)) {
        let mut cur = w;
        for a in actions {
            cur = cur.step(a);
            prop_assert!(cur.validate().is_ok());
            prop_assert!(!cur.is_wall(cur.agent_pos()));
        }
    }

    #[test]
    fn moves_onto_open_cells_reverse(w in world(), a in prop::sample::select(vec![Action::Up, Action::Down, Action::Left, Action::Right])) {
        let dir = a.dir().unwrap();
        prop_assume!(!w.is_wall(w.agent_pos().offset(dir)));
        let back = w.step(a).step(dir.opposite().action());
        prop_assert_eq!(back.agent_pos(), w.agent_pos());
    }

    #[test]
    fn blocked_moves_only_tick_the_clock(w in world(), a in prop::sample::select(vec![Action::Up, Action::Down, Action::Left, Action::Right])) {
        prop_assume!(w.is_wall(w.agent_pos().offset(a.dir().unwrap())));
        let next = w.step(a);
        prop_assert_eq!(next.agent(), w.agent());
        prop_assert_eq!(next.floor_blocks(), w.floor_blocks());
        prop_assert_eq!(next.step_index(), w.step_index() + 1);
    }

    #[test]
    fn step_index_counts_steps(w in world(), actions in prop::collection::vec(action(), 0..60)) {
        prop_assert_eq!(run(&w, &actions).step_index(), w.step_index() + actions.len() as u64);
    }

    #[test]
    fn canonical_round_trip(w in world()) {
        let text = to_canonical(&w).unwrap();
        let back: GridWorld = from_canonical(&text).unwrap();
        prop_assert_eq!(&back, &w);
        prop_assert_eq!(to_canonical(&back).unwrap(), text);
        let obs: Observation = from_canonical(&to_canonical(&w.observe()).unwrap()).unwrap();
        prop_assert_eq!(obs.world(), &w);
    }

    #[test]
    fn equal_worlds_serialize_identically(w in world()) {
        // Rebuild with walls and blocks inserted in reverse order.
        let walls: Vec<Pos> = w.walls().iter().rev().copied().collect();
        let blocks: Vec<(Pos, Color)> = w.floor_blocks().iter().rev().map(|(&p, &c)| (p, c)).collect();
        let again = GridWorld::from_parts(w.width(), w.height(), walls, blocks, *w.agent(), w.step_index()).unwrap();
        prop_assert_eq!(to_canonical(&again.observe()).unwrap(), to_canonical(&w.observe()).unwrap());
    }
}

#[test]
fn seeded_worlds_round_trip_through_observation() {
    let cfg = WorldGenConfig::default();
    for seed in 0..1000u64 {
        let script = ScriptId::ALL[seed as usize % ScriptId::ALL.len()];
        let w = random_world(script, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let direct = to_canonical(&w.observe()).unwrap();
        let back: GridWorld = from_canonical(&to_canonical(&w).unwrap()).unwrap();
        assert_eq!(to_canonical(&back.observe()).unwrap(), direct, "seed {seed}");
    }
}
