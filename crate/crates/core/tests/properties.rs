use decmarl::gridworld::{
    Cell, Difficulty, GoalScenario, GridWorld, Layout, MaskLabel, WorldConfig,
};
use decmarl::mental_state::{CellRecord, MentalState};
use decmarl::neural::ReplayBuffer;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const W: usize = 6;
const H: usize = 5;

fn label() -> impl Strategy<Value = MaskLabel> {
    prop_oneof![
        Just(MaskLabel::Empty),
        Just(MaskLabel::Obstacle),
        Just(MaskLabel::Object),
        Just(MaskLabel::Agent),
    ]
}

fn records() -> impl Strategy<Value = Vec<CellRecord>> {
    proptest::collection::btree_map((0..W, 0..H), (label(), 0u8..8), 0..W * H).prop_map(|m| {
        m.into_iter()
            .map(|((x, y), (mask, d))| CellRecord {
                cell: Cell::new(x, y),
                mask,
                duration: f64::from(d) * 0.1,
            })
            .collect()
    })
}

fn state(rs: &[CellRecord]) -> MentalState {
    let mut ms = MentalState::new(W, H, Cell::new(0, 0)).unwrap();
    ms.merge([rs]);
    ms
}

proptest! {
    #[test]
    fn merge_keeps_the_freshest_known_record(own in records(), a in records(), b in records()) {
        let mut ms = state(&own);
        let before = ms.known_count();
        ms.merge([&a[..], &b[..]]);
        prop_assert!(ms.known_count() >= before);
        for y in 0..H {
            for x in 0..W {
                let c = Cell::new(x, y);
                let candidates: Vec<f64> = own.iter().chain(&a).chain(&b)
                    .filter(|r| r.cell == c)
                    .map(|r| r.duration)
                    .collect();
                let e = ms.entry(c);
                match candidates.iter().cloned().reduce(f64::min) {
                    Some(best) => prop_assert_eq!(e.duration, best),
                    None => prop_assert_eq!(e.mask, MaskLabel::Unknown),
                }
            }
        }
    }

    #[test]
    fn merge_is_idempotent(own in records(), shared in records()) {
        let mut ms = state(&own);
        ms.merge([&shared[..]]);
        let once = ms.clone();
        prop_assert_eq!(ms.merge([&shared[..]]), 0);
        prop_assert_eq!(ms, once);
    }

    #[test]
    fn jaccard_is_a_fraction(own in records(), shared in records()) {
        let j = state(&own).jaccard(&shared);
        prop_assert!((0.0..=1.0).contains(&j));
        let back = state(&shared).jaccard(&own);
        prop_assert!((j - back).abs() < 1e-15);
        if !own.is_empty() {
            prop_assert_eq!(state(&own).jaccard(&own), 1.0);
        }
    }

    #[test]
    fn absorbed_cells_are_fresh(own in records(), x in 0..W, y in 0..H, r in 1usize..3) {
        let layout = Layout::empty(W, H);
        let mut layout = layout;
        layout.objects = vec![Cell::new(W - 1, 0), Cell::new(W - 1, 1), Cell::new(W - 1, 2)];
        layout.starts = vec![Cell::new(x, y)];
        let world = GridWorld::build(&WorldConfig {
            layout, difficulty: Difficulty::Easy, scenario: GoalScenario::SharedGoal, n_agents: 1, p_toggle: 0.0,
        }, 0).unwrap();
        let obs = world.observe(0, r);
        let mut ms = state(&own);
        ms.absorb_observation(&obs);
        for (c, mask) in &obs.records {
            prop_assert!(c.chebyshev(Cell::new(x, y)) <= r);
            prop_assert_eq!(ms.entry(*c).duration, 0.0);
            prop_assert_eq!(ms.mask(*c), *mask);
        }
        let expected = (x.saturating_sub(r)..=(x + r).min(W - 1)).count()
            * (y.saturating_sub(r)..=(y + r).min(H - 1)).count();
        prop_assert_eq!(obs.records.len(), expected);
    }

    #[test]
    fn ring_buffer_never_exceeds_capacity(cap in 1usize..20, pushes in 0usize..60) {
        let mut buf = ReplayBuffer::new(cap);
        for i in 0..pushes {
            buf.push(i);
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        let mut kept: Vec<usize> = buf.iter().copied().collect();
        kept.sort_unstable();
        let want: Vec<usize> = (pushes.saturating_sub(cap)..pushes).collect();
        prop_assert_eq!(kept, want);
    }
}

fn world(difficulty: Difficulty, seed: u64, p_toggle: f64) -> GridWorld {
    let cfg = WorldConfig {
        layout: Layout::base(),
        difficulty,
        scenario: GoalScenario::SharedGoal,
        n_agents: 3,
        p_toggle,
    };
    GridWorld::build(&cfg, seed).unwrap()
}

#[test]
fn easy_obstacles_never_move() {
    let mut w = world(Difficulty::Easy, 1, 0.5);
    let before = w.active_obstacles();
    for _ in 0..500 {
        w.step_dynamics();
        assert_eq!(w.active_obstacles(), before);
    }
}

#[test]
fn hard_toggles_avoid_agents_and_objects() {
    use decmarl::gridworld::Action;
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut w = world(Difficulty::Hard, 2, 0.3);
    let mut seen_change = false;
    let initial = w.active_obstacles();
    for _ in 0..2000 {
        w.step_dynamics();
        for i in 0..3 {
            let a = Action::ALL[rng.gen_range(0..5)];
            w.apply_action(i, a);
        }
        for c in w.active_obstacles() {
            assert!(!w.positions().contains(&c), "obstacle on agent at {c}");
            assert!(!w.objects().contains(&c), "obstacle on object at {c}");
        }
        seen_change |= w.active_obstacles() != initial;
    }
    assert!(seen_change);
}

#[test]
fn hard_worlds_are_reproducible() {
    let mut a = world(Difficulty::Hard, 5, 0.1);
    let mut b = world(Difficulty::Hard, 5, 0.1);
    for _ in 0..300 {
        a.step_dynamics();
        b.step_dynamics();
        assert_eq!(a.active_obstacles(), b.active_obstacles());
    }
}
