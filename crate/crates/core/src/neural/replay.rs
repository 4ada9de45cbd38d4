use rand::Rng;

use crate::error::{Error, Result};

/// One stored step of experience. States are actor inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T = Transition> {
    capacity: usize,
    items: Vec<T>,
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_ready(&self, batch: usize) -> bool {
        self.items.len() >= batch
    }

    /// Insert, evicting the oldest item once full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// `None` while fewer than `batch` items are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&T>> {
        if !self.is_ready(batch) || batch == 0 {
            return None;
        }
        Some(
            (0..batch)
                .map(|_| &self.items[rng.gen_range(0..self.items.len())])
                .collect(),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.cursor = 0;
    }
}

/// Transitions of one fixed state width, stored row-wise in large chunks.
/// Ring eviction and sampling match [`ReplayBuffer`] draw for draw.
#[derive(Debug, Clone)]
pub struct TransitionStore {
    dim: usize,
    capacity: usize,
    chunk_rows: usize,
    len: usize,
    cursor: usize,
    /// Each row holds `state` then `next_state`.
    chunks: Vec<Vec<f64>>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    done: Vec<bool>,
}

impl TransitionStore {
    const CHUNK_ROWS: usize = 1024;

    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            dim,
            capacity,
            chunk_rows: capacity.min(Self::CHUNK_ROWS),
            len: 0,
            cursor: 0,
            chunks: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            done: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_ready(&self, batch: usize) -> bool {
        self.len >= batch
    }

    /// Insert, evicting the oldest row once full.
    pub fn push(&mut self, t: &Transition) -> Result<()> {
        for v in [&t.state, &t.next_state] {
            if v.len() != self.dim {
                return Err(Error::Shape {
                    expected: self.dim,
                    actual: v.len(),
                });
            }
        }
        let row = self.cursor;
        if row == self.len {
            if row.is_multiple_of(self.chunk_rows) {
                self.chunks.push(vec![0.0; self.chunk_rows * 2 * self.dim]);
            }
            self.actions.push(t.action);
            self.rewards.push(t.reward);
            self.done.push(t.done);
            self.len += 1;
        } else {
            self.actions[row] = t.action;
            self.rewards[row] = t.reward;
            self.done[row] = t.done;
        }
        let slot = self.row_mut(row);
        let (state, next) = slot.split_at_mut(t.state.len());
        state.copy_from_slice(&t.state);
        next.copy_from_slice(&t.next_state);
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// `batch` uniform row indices (with replacement); `None` while fewer
    /// than `batch` rows are stored.
    pub fn sample_rows<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<usize>> {
        if !self.is_ready(batch) || batch == 0 {
            return None;
        }
        Some((0..batch).map(|_| rng.gen_range(0..self.len)).collect())
    }

    pub fn state(&self, row: usize) -> &[f64] {
        &self.row(row)[..self.dim]
    }

    pub fn next_state(&self, row: usize) -> &[f64] {
        &self.row(row)[self.dim..]
    }

    pub fn action(&self, row: usize) -> usize {
        self.actions[row]
    }

    pub fn reward(&self, row: usize) -> f64 {
        self.rewards[row]
    }

    pub fn done(&self, row: usize) -> bool {
        self.done[row]
    }

    pub fn get(&self, row: usize) -> Transition {
        Transition {
            state: self.state(row).to_vec(),
            action: self.action(row),
            reward: self.reward(row),
            next_state: self.next_state(row).to_vec(),
            done: self.done(row),
        }
    }

    pub fn clear(&mut self) {
        self.chunks.clear();
        self.actions.clear();
        self.rewards.clear();
        self.done.clear();
        self.len = 0;
        self.cursor = 0;
    }

    fn row(&self, row: usize) -> &[f64] {
        assert!(row < self.len, "row {row} out of range");
        let width = 2 * self.dim;
        let start = (row % self.chunk_rows) * width;
        &self.chunks[row / self.chunk_rows][start..start + width]
    }

    fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let width = 2 * self.dim;
        let start = (row % self.chunk_rows) * width;
        &mut self.chunks[row / self.chunk_rows][start..start + width]
    }
}
