//! Per-agent knowledge over every cell of the bounded map.
//!
//! Each cell carries the last label the agent believes in and how long ago
//! that belief was refreshed. Durations drive the time novelty
//! `u(d) = exp(d / 2)`, the pooled embedding and the freshness-wins merge
//! used when agents exchange knowledge.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gridworld::{Cell, MaskLabel, Observation};

/// Default duration added per tick.
pub const DEFAULT_TIME_INCREMENT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub mask: MaskLabel,
    pub duration: f64,
    pub visit_count: u32,
}

impl Entry {
    const UNKNOWN: Entry = Entry {
        mask: MaskLabel::Unknown,
        duration: 0.0,
        visit_count: 0,
    };
}

/// A shareable `(cell, mask, duration)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub cell: Cell,
    pub mask: MaskLabel,
    pub duration: f64,
}

/// `exp(d / 2)`: novelty of a piece of knowledge last refreshed `d` ago.
pub fn time_novelty(duration: f64) -> Result<f64> {
    if duration.is_nan() || duration < 0.0 {
        return Err(Error::Domain(format!(
            "duration must be >= 0, got {duration}"
        )));
    }
    Ok((0.5 * duration).exp())
}

/// `1 / N`: count-based novelty baseline.
pub fn count_novelty(visit_count: u32) -> Result<f64> {
    if visit_count == 0 {
        return Err(Error::Domain(
            "count novelty is undefined for unvisited cells".into(),
        ));
    }
    Ok(1.0 / f64::from(visit_count))
}

/// Which novelty the intrinsic reward averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoveltyMode {
    #[default]
    Time,
    Count,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MentalState {
    width: usize,
    height: usize,
    entries: Vec<Entry>,
    owner_goal: Cell,
    time_increment: f64,
    duration_cap: Option<f64>,
}

impl MentalState {
    pub fn new(width: usize, height: usize, goal: Cell) -> Result<MentalState> {
        if width == 0 || height == 0 {
            return Err(Error::config(format!(
                "mental state needs positive dimensions, got {width}x{height}"
            )));
        }
        Ok(MentalState {
            width,
            height,
            entries: vec![Entry::UNKNOWN; width * height],
            owner_goal: goal,
            time_increment: DEFAULT_TIME_INCREMENT,
            duration_cap: None,
        })
    }

    pub fn with_time_increment(mut self, increment: f64) -> Self {
        self.time_increment = increment;
        self
    }

    /// Saturate durations at `cap`; `None` leaves them unbounded.
    pub fn with_duration_cap(mut self, cap: Option<f64>) -> Self {
        self.duration_cap = cap;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn owner_goal(&self) -> Cell {
        self.owner_goal
    }

    pub fn time_increment(&self) -> f64 {
        self.time_increment
    }

    fn index(&self, c: Cell) -> usize {
        debug_assert!(c.x < self.width && c.y < self.height);
        c.y * self.width + c.x
    }

    fn cell_at(&self, i: usize) -> Cell {
        Cell::new(i % self.width, i / self.width)
    }

    pub fn entry(&self, c: Cell) -> Entry {
        self.entries[self.index(c)]
    }

    pub fn mask(&self, c: Cell) -> MaskLabel {
        self.entry(c).mask
    }

    pub fn is_known(&self, c: Cell) -> bool {
        self.mask(c).is_known()
    }

    /// All cells with their entries, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (Cell, &Entry)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (self.cell_at(i), e))
    }

    pub fn known_count(&self) -> usize {
        self.entries.iter().filter(|e| e.mask.is_known()).count()
    }

    /// Known cells as shareable records, row-major.
    pub fn records(&self) -> Vec<CellRecord> {
        self.iter()
            .filter(|(_, e)| e.mask.is_known())
            .map(|(cell, e)| CellRecord {
                cell,
                mask: e.mask,
                duration: e.duration,
            })
            .collect()
    }

    pub fn record(&self, c: Cell) -> CellRecord {
        let e = self.entry(c);
        CellRecord {
            cell: c,
            mask: e.mask,
            duration: e.duration,
        }
    }

    /// Forget everything.
    pub fn reset(&mut self) {
        self.entries.fill(Entry::UNKNOWN);
    }

    pub fn absorb_observation(&mut self, obs: &Observation) {
        for &(cell, mask) in &obs.records {
            let i = self.index(cell);
            let e = &mut self.entries[i];
            e.mask = mask;
            e.duration = 0.0;
            e.visit_count += 1;
        }
    }

    /// Age every known entry by one time increment.
    pub fn tick(&mut self) {
        let inc = self.time_increment;
        let cap = self.duration_cap;
        for e in self.entries.iter_mut().filter(|e| e.mask.is_known()) {
            e.duration += inc;
            if let Some(cap) = cap {
                e.duration = e.duration.min(cap);
            }
        }
    }

    /// Mean time novelty over the whole map; unknown cells add 0 to the sum
    /// but count in the denominator.
    pub fn mean_novelty(&self) -> f64 {
        let sum: f64 = self
            .entries
            .iter()
            .filter(|e| e.mask.is_known())
            .map(|e| (0.5 * e.duration).exp())
            .sum();
        sum / self.entries.len() as f64
    }

    /// Count-based counterpart of [`mean_novelty`](Self::mean_novelty). Known
    /// cells learned only from others (no own visit) contribute 0.
    pub fn mean_count_novelty(&self) -> f64 {
        let sum: f64 = self
            .entries
            .iter()
            .filter(|e| e.mask.is_known() && e.visit_count > 0)
            .map(|e| 1.0 / f64::from(e.visit_count))
            .sum();
        sum / self.entries.len() as f64
    }

    pub fn mean_novelty_in(&self, mode: NoveltyMode) -> f64 {
        match mode {
            NoveltyMode::Time => self.mean_novelty(),
            NoveltyMode::Count => self.mean_count_novelty(),
        }
    }

    /// Fold shared record sets into this state, fresher record wins.
    ///
    /// For each cell the candidate with the strictly smallest duration wins;
    /// a cell the owner has never seen adopts any known record. Ties keep the
    /// current holder (the owner first, then earlier sources). Returns the
    /// number of cells whose entry changed.
    pub fn merge<'a, I>(&mut self, sources: I) -> usize
    where
        I: IntoIterator<Item = &'a [CellRecord]>,
    {
        let mut changed = vec![false; self.entries.len()];
        for records in sources {
            for r in records {
                if !r.mask.is_known() {
                    continue;
                }
                let i = self.index(r.cell);
                let e = &mut self.entries[i];
                if !e.mask.is_known() || r.duration < e.duration {
                    if e.mask != r.mask || e.duration != r.duration {
                        changed[i] = true;
                    }
                    e.mask = r.mask;
                    e.duration = r.duration;
                }
            }
        }
        changed.into_iter().filter(|c| *c).count()
    }

    /// Jaccard similarity between this state's known `(cell, mask)` pairs
    /// and a shared record set. Zero when neither side knows anything.
    pub fn jaccard(&self, other: &[CellRecord]) -> f64 {
        // one bit per mask label for each cell the other side reports
        let mut theirs = vec![0u8; self.entries.len()];
        for r in other.iter().filter(|r| r.mask.is_known()) {
            theirs[self.index(r.cell)] |= 1 << r.mask.index();
        }
        let n_theirs: usize = theirs.iter().map(|b| b.count_ones() as usize).sum();
        let (mut n_mine, mut shared) = (0usize, 0usize);
        for (e, bits) in self.entries.iter().zip(&theirs) {
            if e.mask.is_known() {
                n_mine += 1;
                if bits & (1 << e.mask.index()) != 0 {
                    shared += 1;
                }
            }
        }
        let union = n_mine + n_theirs - shared;
        if union == 0 {
            return 0.0;
        }
        shared as f64 / union as f64
    }

    /// One `x,y,mask,duration` line per known cell.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.cell.x,
                r.cell.y,
                r.mask.as_str(),
                r.duration
            );
        }
        out
    }

    /// Parse a snapshot produced by [`to_snapshot`](Self::to_snapshot).
    pub fn parse_snapshot(text: &str) -> Result<Vec<CellRecord>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, line)| {
                let bad = |msg: String| Error::Parse { line: n + 1, msg };
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                let [x, y, mask, d] = fields[..] else {
                    return Err(bad(format!("expected 4 fields, got {}", fields.len())));
                };
                let x = x.parse().map_err(|e| bad(format!("x: {e}")))?;
                let y = y.parse().map_err(|e| bad(format!("y: {e}")))?;
                let mask = mask.parse().map_err(|e: Error| bad(e.to_string()))?;
                let duration: f64 = d.parse().map_err(|e| bad(format!("duration: {e}")))?;
                if duration < 0.0 {
                    return Err(bad("negative duration".into()));
                }
                Ok(CellRecord {
                    cell: Cell::new(x, y),
                    mask,
                    duration,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(cells: &[(usize, usize, MaskLabel)]) -> Observation {
        Observation {
            center: Cell::new(cells[0].0, cells[0].1),
            records: cells
                .iter()
                .map(|&(x, y, m)| (Cell::new(x, y), m))
                .collect(),
        }
    }

    fn rec(x: usize, y: usize, mask: MaskLabel, duration: f64) -> CellRecord {
        CellRecord {
            cell: Cell::new(x, y),
            mask,
            duration,
        }
    }

    fn state_with(records: &[CellRecord]) -> MentalState {
        let mut ms = MentalState::new(4, 4, Cell::new(3, 3)).unwrap();
        let empty: &[CellRecord] = records;
        ms.merge([empty]);
        ms
    }

    #[test]
    fn init_is_all_unknown() {
        let ms = MentalState::new(10, 10, Cell::new(0, 0)).unwrap();
        assert_eq!(ms.len(), 100);
        assert!(ms.iter().all(|(_, e)| *e == Entry::UNKNOWN));
        assert_eq!(
            MentalState::new(20, 20, Cell::new(0, 0)).unwrap().len(),
            400
        );
        assert!(matches!(
            MentalState::new(0, 0, Cell::new(0, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn absorb_sets_known_cells() {
        let mut ms = MentalState::new(10, 10, Cell::new(0, 0)).unwrap();
        ms.absorb_observation(&obs(&[
            (0, 0, MaskLabel::Agent),
            (1, 0, MaskLabel::Empty),
            (0, 1, MaskLabel::Empty),
            (1, 1, MaskLabel::Obstacle),
        ]));
        assert_eq!(ms.known_count(), 4);
        assert_eq!(ms.entry(Cell::new(1, 1)).visit_count, 1);
        assert_eq!(ms.mask(Cell::new(5, 5)), MaskLabel::Unknown);
    }

    #[test]
    fn reobserving_resets_duration_and_overwrites_label() {
        let mut ms = MentalState::new(4, 4, Cell::new(0, 0)).unwrap();
        ms.absorb_observation(&obs(&[(2, 2, MaskLabel::Empty)]));
        for _ in 0..37 {
            ms.tick();
        }
        assert!((ms.entry(Cell::new(2, 2)).duration - 0.37).abs() < 1e-12);
        ms.absorb_observation(&obs(&[(2, 2, MaskLabel::Obstacle)]));
        let e = ms.entry(Cell::new(2, 2));
        assert_eq!(e.duration, 0.0);
        assert_eq!(e.mask, MaskLabel::Obstacle);
        assert_eq!(e.visit_count, 2);
    }

    #[test]
    fn tick_ages_known_cells_only() {
        let mut ms = MentalState::new(4, 4, Cell::new(0, 0)).unwrap();
        ms.absorb_observation(&obs(&[(0, 0, MaskLabel::Empty)]));
        ms.tick();
        assert_eq!(ms.entry(Cell::new(0, 0)).duration, 0.01);
        for _ in 0..99 {
            ms.tick();
        }
        assert!((ms.entry(Cell::new(0, 0)).duration - 1.0).abs() < 1e-12);
        assert_eq!(ms.entry(Cell::new(3, 3)).duration, 0.0);
    }

    #[test]
    fn duration_cap_saturates() {
        let mut ms = MentalState::new(2, 2, Cell::new(0, 0))
            .unwrap()
            .with_duration_cap(Some(0.05));
        ms.absorb_observation(&obs(&[(0, 0, MaskLabel::Empty)]));
        for _ in 0..10 {
            ms.tick();
        }
        assert_eq!(ms.entry(Cell::new(0, 0)).duration, 0.05);
    }

    #[test]
    fn novelty_functions() {
        assert_eq!(time_novelty(0.0).unwrap(), 1.0);
        assert!((time_novelty(1.0).unwrap() - 1.648_721_270_700_128_1).abs() < 1e-12);
        assert!((time_novelty(0.5).unwrap() - 1.284_025_416_687_741_4).abs() < 1e-12);
        assert!(time_novelty(-0.1).is_err());

        assert_eq!(count_novelty(1).unwrap(), 1.0);
        assert_eq!(count_novelty(4).unwrap(), 0.25);
        assert!(count_novelty(0).is_err());
    }

    #[test]
    fn mean_novelty_examples() {
        let ms = MentalState::new(10, 10, Cell::new(0, 0)).unwrap();
        assert_eq!(ms.mean_novelty(), 0.0);

        let mut ms = MentalState::new(10, 10, Cell::new(0, 0)).unwrap();
        let cells: Vec<_> = (0..10).map(|x| (x, 0, MaskLabel::Empty)).collect();
        ms.absorb_observation(&obs(&cells));
        assert!((ms.mean_novelty() - 0.1).abs() < 1e-15);

        let mut ms = MentalState::new(10, 10, Cell::new(0, 0)).unwrap();
        ms.absorb_observation(&obs(&[(4, 4, MaskLabel::Empty)]));
        for _ in 0..100 {
            ms.tick();
        }
        assert!((ms.mean_novelty() - 1.648_721_270_700_128 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn merge_examples() {
        let mut own = state_with(&[rec(1, 1, MaskLabel::Obstacle, 0.30)]);
        own.merge([&[rec(1, 1, MaskLabel::Empty, 0.05)][..]]);
        assert_eq!(
            own.record(Cell::new(1, 1)),
            rec(1, 1, MaskLabel::Empty, 0.05)
        );

        let mut own = state_with(&[]);
        own.merge([&[rec(1, 1, MaskLabel::Empty, 0.40)][..]]);
        assert_eq!(
            own.record(Cell::new(1, 1)),
            rec(1, 1, MaskLabel::Empty, 0.40)
        );

        let mut own = state_with(&[rec(1, 1, MaskLabel::Empty, 0.10)]);
        let changed = own.merge([&[rec(1, 1, MaskLabel::Obstacle, 0.10)][..]]);
        assert_eq!(changed, 0);
        assert_eq!(
            own.record(Cell::new(1, 1)),
            rec(1, 1, MaskLabel::Empty, 0.10)
        );
    }

    #[test]
    fn merge_takes_overall_minimum_across_sources() {
        let mut own = state_with(&[rec(0, 0, MaskLabel::Empty, 0.5)]);
        let a = [rec(0, 0, MaskLabel::Obstacle, 0.2)];
        let b = [rec(0, 0, MaskLabel::Agent, 0.1)];
        let c = [rec(0, 0, MaskLabel::Object, 0.3)];
        own.merge([&a[..], &b[..], &c[..]]);
        assert_eq!(
            own.record(Cell::new(0, 0)),
            rec(0, 0, MaskLabel::Agent, 0.1)
        );
    }

    #[test]
    fn merge_ignores_unknown_records() {
        let mut own = state_with(&[rec(0, 0, MaskLabel::Empty, 0.5)]);
        let changed = own.merge([&[
            rec(0, 0, MaskLabel::Unknown, 0.0),
            rec(1, 0, MaskLabel::Unknown, 0.0),
        ][..]]);
        assert_eq!(changed, 0);
        assert_eq!(own.known_count(), 1);
    }

    #[test]
    fn jaccard_examples() {
        let a = state_with(&[
            rec(0, 0, MaskLabel::Empty, 0.0),
            rec(1, 0, MaskLabel::Obstacle, 0.0),
        ]);
        let b = [
            rec(1, 0, MaskLabel::Obstacle, 0.4),
            rec(2, 0, MaskLabel::Empty, 0.1),
        ];
        assert!((a.jaccard(&b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.jaccard(&a.records()), 1.0);
        assert_eq!(a.jaccard(&[rec(3, 3, MaskLabel::Empty, 0.0)]), 0.0);
        assert_eq!(state_with(&[]).jaccard(&[]), 0.0);
        // same cell, different label: not shared
        assert_eq!(a.jaccard(&[rec(0, 0, MaskLabel::Obstacle, 0.0)]), 0.0);
    }

    #[test]
    fn snapshot_roundtrip() {
        let a = state_with(&[
            rec(0, 0, MaskLabel::Empty, 0.25),
            rec(3, 2, MaskLabel::Object, 1.5),
        ]);
        let text = a.to_snapshot();
        assert_eq!(text, "0,0,empty,0.25\n3,2,object,1.5\n");
        let parsed = MentalState::parse_snapshot(&text).unwrap();
        assert_eq!(parsed, a.records());
        assert!(MentalState::parse_snapshot("1,2,empty").is_err());
        assert!(MentalState::parse_snapshot("1,2,wall,0").is_err());
        assert!(MentalState::parse_snapshot("1,2,empty,-1").is_err());
    }
}
