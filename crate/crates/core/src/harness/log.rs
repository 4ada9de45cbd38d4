//! Append-only protocol log. Id lists live in shared buffers so a long run
//! makes no per-row allocations.

use std::ops::Range;

use crate::protocol::SessionOutcome;

/// One logged session, borrowing its id lists from the log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionRow<'a> {
    pub episode: usize,
    pub step: usize,
    pub agent: usize,
    pub contacts: &'a [usize],
    pub peers: &'a [usize],
    pub advisors: &'a [usize],
    pub jaccard: &'a [(usize, f64)],
    pub merged_cells: usize,
    pub aggregation_applied: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    episode: usize,
    step: usize,
    agent: usize,
    contacts: Range<usize>,
    peers: Range<usize>,
    advisors: Range<usize>,
    jaccard: Range<usize>,
    merged_cells: usize,
    aggregation_applied: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    entries: Vec<Entry>,
    ids: Vec<usize>,
    jaccard: Vec<(usize, f64)>,
}

fn append<T: Copy>(buf: &mut Vec<T>, items: &[T]) -> Range<usize> {
    let start = buf.len();
    buf.extend_from_slice(items);
    start..buf.len()
}

impl SessionLog {
    pub fn new() -> SessionLog {
        SessionLog::default()
    }

    pub fn push(&mut self, episode: usize, step: usize, agent: usize, outcome: &SessionOutcome) {
        let contacts = append(&mut self.ids, &outcome.contacts);
        let peers = append(&mut self.ids, &outcome.peers);
        let advisors = append(&mut self.ids, &outcome.advisors);
        let jaccard = append(&mut self.jaccard, &outcome.jaccard);
        self.entries.push(Entry {
            episode,
            step,
            agent,
            contacts,
            peers,
            advisors,
            jaccard,
            merged_cells: outcome.merged_cells,
            aggregation_applied: outcome.aggregation_applied,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<SessionRow<'_>> {
        self.entries.get(i).map(|e| self.row(e))
    }

    pub fn iter(&self) -> impl Iterator<Item = SessionRow<'_>> {
        self.entries.iter().map(|e| self.row(e))
    }

    fn row<'a>(&'a self, e: &Entry) -> SessionRow<'a> {
        SessionRow {
            episode: e.episode,
            step: e.step,
            agent: e.agent,
            contacts: &self.ids[e.contacts.clone()],
            peers: &self.ids[e.peers.clone()],
            advisors: &self.ids[e.advisors.clone()],
            jaccard: &self.jaccard[e.jaccard.clone()],
            merged_cells: e.merged_cells,
            aggregation_applied: e.aggregation_applied,
        }
    }
}
