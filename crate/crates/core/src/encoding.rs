//! Frozen categorical embeddings and the pooled mental-state vector.
//!
//! All agents of a run build their tables from the same seed, so a given
//! `(state, goal, mental state)` maps to the same network input for everyone.
//! That keeps parameter averaging between agents meaningful.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gridworld::{Action, Cell, MaskLabel, Observation};
use crate::mental_state::MentalState;

pub const STATE_DIM: usize = 64;
pub const GOAL_DIM: usize = 16;
pub const OBS_DIM: usize = 64;
pub const MASK_DIM: usize = 16;
pub const ACTION_DIM: usize = 16;
/// `e_s ⊕ e_m` per cell, averaged over the map.
pub const POOLED_DIM: usize = STATE_DIM + MASK_DIM;
pub const ACTOR_INPUT_DIM: usize = STATE_DIM + GOAL_DIM + POOLED_DIM;
pub const CRITIC_INPUT_DIM: usize = ACTOR_INPUT_DIM + ACTION_DIM;

/// Row-major lookup table: `rows` vectors of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    dim: usize,
    data: Vec<f64>,
}

impl Table {
    fn random(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Table {
        let data = (0..rows * dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Table { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    width: usize,
    height: usize,
    seed: u64,
    pub state: Table,
    pub goal: Table,
    pub obs: Table,
    pub mask: Table,
    pub action: Table,
}

impl EmbeddingTables {
    /// Entries are i.i.d. uniform in `[-1, 1]` from a generator seeded with `seed`.
    pub fn build(seed: u64, width: usize, height: usize) -> Result<EmbeddingTables> {
        if width == 0 || height == 0 {
            return Err(crate::Error::config(
                "embedding tables need positive grid dimensions",
            ));
        }
        let cells = width * height;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(EmbeddingTables {
            width,
            height,
            seed,
            state: Table::random(cells, STATE_DIM, &mut rng),
            goal: Table::random(cells, GOAL_DIM, &mut rng),
            obs: Table::random(cells, OBS_DIM, &mut rng),
            mask: Table::random(MaskLabel::ALL.len(), MASK_DIM, &mut rng),
            action: Table::random(Action::ALL.len(), ACTION_DIM, &mut rng),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn cell_row(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    pub fn state_embedding(&self, c: Cell) -> &[f64] {
        self.state.row(self.cell_row(c))
    }

    pub fn goal_embedding(&self, c: Cell) -> &[f64] {
        self.goal.row(self.cell_row(c))
    }

    pub fn mask_embedding(&self, m: MaskLabel) -> &[f64] {
        self.mask.row(m.index())
    }

    pub fn action_embedding(&self, a: Action) -> &[f64] {
        self.action.row(a.index())
    }

    /// Mean observation-table row over the observed cells. Not fed to the
    /// networks; available as a compact fingerprint of an observation.
    pub fn observation_embedding(&self, obs: &Observation) -> Vec<f64> {
        let mut out = vec![0.0; OBS_DIM];
        if obs.records.is_empty() {
            return out;
        }
        for (c, _) in &obs.records {
            for (o, v) in out.iter_mut().zip(self.obs.row(self.cell_row(*c))) {
                *o += v;
            }
        }
        let n = obs.records.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Average of `u · (e_s ⊕ e_m)` over every cell of the map, where `u` is
    /// the cell's time novelty when `time_aware` is set and the cell is
    /// known, else 1.
    pub fn pool_mental_state(&self, ms: &MentalState, time_aware: bool) -> Vec<f64> {
        debug_assert_eq!((ms.width(), ms.height()), (self.width, self.height));
        let mut pooled = vec![0.0; POOLED_DIM];
        let (state_part, mask_part) = pooled.split_at_mut(STATE_DIM);
        // Unscaled mask contributions are accumulated per label and expanded once.
        let mut mask_weight = [0.0; 5];
        for (cell, e) in ms.iter() {
            let u = if time_aware && e.mask.is_known() {
                (0.5 * e.duration).exp()
            } else {
                1.0
            };
            for (p, v) in state_part.iter_mut().zip(self.state_embedding(cell)) {
                *p += u * v;
            }
            mask_weight[e.mask.index()] += u;
        }
        for m in MaskLabel::ALL {
            let w = mask_weight[m.index()];
            if w != 0.0 {
                for (p, v) in mask_part.iter_mut().zip(self.mask_embedding(m)) {
                    *p += w * v;
                }
            }
        }
        let n = ms.len() as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
        pooled
    }

    /// `e_s ⊕ e_g ⊕ pooled`.
    pub fn actor_input_from_pooled(&self, s: Cell, g: Cell, pooled: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(ACTOR_INPUT_DIM);
        x.extend_from_slice(self.state_embedding(s));
        x.extend_from_slice(self.goal_embedding(g));
        x.extend_from_slice(pooled);
        x
    }

    pub fn actor_input(&self, s: Cell, g: Cell, ms: &MentalState, time_aware: bool) -> Vec<f64> {
        let pooled = self.pool_mental_state(ms, time_aware);
        self.actor_input_from_pooled(s, g, &pooled)
    }

    /// `actor_input ⊕ e_a`.
    pub fn critic_input(
        &self,
        s: Cell,
        g: Cell,
        ms: &MentalState,
        a: Action,
        time_aware: bool,
    ) -> Vec<f64> {
        let mut x = self.actor_input(s, g, ms, time_aware);
        x.extend_from_slice(self.action_embedding(a));
        x
    }

    /// Write every table as `table,row,col,value` CSV lines.
    pub fn dump_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["table", "row", "col", "value"])?;
        for (name, t) in [
            ("state", &self.state),
            ("goal", &self.goal),
            ("obs", &self.obs),
            ("mask", &self.mask),
            ("action", &self.action),
        ] {
            for r in 0..t.rows() {
                for (c, v) in t.row(r).iter().enumerate() {
                    w.write_record([
                        name.to_string(),
                        r.to_string(),
                        c.to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mental_state::CellRecord;

    fn concat_vec(t: &EmbeddingTables, c: Cell, m: MaskLabel) -> Vec<f64> {
        let mut v = t.state_embedding(c).to_vec();
        v.extend_from_slice(t.mask_embedding(m));
        v
    }

    #[test]
    fn tables_are_deterministic_and_shaped() {
        let a = EmbeddingTables::build(3, 10, 10).unwrap();
        let b = EmbeddingTables::build(3, 10, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.state.rows(), 100);
        assert_eq!(a.state.dim(), 64);
        assert_eq!(a.goal.dim(), 16);
        assert_eq!(a.obs.dim(), 64);
        assert_eq!(a.mask.rows(), 5);
        assert_eq!(a.action.rows(), 5);
        assert!(a.state.data.iter().all(|v| (-1.0..=1.0).contains(v)));
        let c = EmbeddingTables::build(4, 10, 10).unwrap();
        assert_ne!(a.state.data, c.state.data);
    }

    #[test]
    fn single_cell_pool_is_its_concat() {
        let t = EmbeddingTables::build(1, 1, 1).unwrap();
        let ms = MentalState::new(1, 1, Cell::new(0, 0)).unwrap();
        let pooled = t.pool_mental_state(&ms, false);
        assert_eq!(pooled, concat_vec(&t, Cell::new(0, 0), MaskLabel::Unknown));
    }

    #[test]
    fn two_cell_time_aware_pool() {
        let t = EmbeddingTables::build(9, 2, 1).unwrap();
        let mut ms = MentalState::new(2, 1, Cell::new(0, 0)).unwrap();
        ms.merge([&[
            CellRecord {
                cell: Cell::new(0, 0),
                mask: MaskLabel::Empty,
                duration: 0.0,
            },
            CellRecord {
                cell: Cell::new(1, 0),
                mask: MaskLabel::Obstacle,
                duration: 1.0,
            },
        ][..]]);
        let v1 = concat_vec(&t, Cell::new(0, 0), MaskLabel::Empty);
        let v2 = concat_vec(&t, Cell::new(1, 0), MaskLabel::Obstacle);
        let u = 0.5f64.exp();
        let expected: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| (a + u * b) / 2.0).collect();
        let got = t.pool_mental_state(&ms, true);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_durations_make_time_awareness_irrelevant() {
        let t = EmbeddingTables::build(2, 5, 5).unwrap();
        let mut ms = MentalState::new(5, 5, Cell::new(0, 0)).unwrap();
        ms.absorb_observation(&Observation {
            center: Cell::new(1, 1),
            records: vec![
                (Cell::new(1, 1), MaskLabel::Agent),
                (Cell::new(2, 1), MaskLabel::Empty),
            ],
        });
        assert_eq!(
            t.pool_mental_state(&ms, true),
            t.pool_mental_state(&ms, false)
        );
    }

    #[test]
    fn input_layouts() {
        let t = EmbeddingTables::build(5, 10, 10).unwrap();
        let ms = MentalState::new(10, 10, Cell::new(9, 9)).unwrap();
        let s = Cell::new(2, 3);
        let g = Cell::new(9, 9);
        let x = t.actor_input(s, g, &ms, true);
        assert_eq!(x.len(), ACTOR_INPUT_DIM);
        assert_eq!(x.len(), 160);
        let left = t.critic_input(s, g, &ms, Action::Left, true);
        let stay = t.critic_input(s, g, &ms, Action::Stay, true);
        assert_eq!(left.len(), CRITIC_INPUT_DIM);
        assert_eq!(left[..160], stay[..160]);
        assert_ne!(left[160..], stay[160..]);

        let mut known = ms.clone();
        known.absorb_observation(&Observation {
            center: s,
            records: vec![(s, MaskLabel::Agent)],
        });
        assert_ne!(t.actor_input(s, g, &known, true), x);
    }

    #[test]
    fn dump_has_every_entry() {
        let t = EmbeddingTables::build(5, 2, 2).unwrap();
        let mut buf = Vec::new();
        t.dump_csv(&mut buf).unwrap();
        let lines = String::from_utf8(buf).unwrap().lines().count();
        assert_eq!(lines, 1 + 4 * 64 + 4 * 16 + 4 * 64 + 5 * 16 + 5 * 16);
    }
}
