//! Share, Reason, Aggregate: the peer-to-peer knowledge session.
//!
//! An agent that meets others in range broadcasts its goal. Same-goal agents
//! are peers and send their known map plus a parameter snapshot. Agents with
//! a different goal that know the requester's goal cell are advisors and send
//! a path planned over their own known-traversable cells. The requester then
//! gates peers by Jaccard overlap (measured before merging), merges every
//! packet's records by freshness, and blends in the selected peers' parameters.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gridworld::{shortest_path, Cell};
use crate::learner::AgentBrain;
use crate::mental_state::{CellRecord, MentalState};
use crate::neural::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Peer,
    Advisor,
}

/// Frozen copy of an agent's online actor and critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    pub actor: Mlp,
    pub critic: Mlp,
}

impl ParamSnapshot {
    pub fn of(brain: &AgentBrain) -> ParamSnapshot {
        ParamSnapshot {
            actor: brain.actor.clone(),
            critic: brain.critic.clone(),
        }
    }

    /// Overwrite with the brain's current parameters, reusing storage.
    pub fn refresh(&mut self, brain: &AgentBrain) {
        copy_params(&mut self.actor, &brain.actor);
        copy_params(&mut self.critic, &brain.critic);
    }
}

fn copy_params(dst: &mut Mlp, src: &Mlp) {
    let same_shape = dst.layers().len() == src.layers().len()
        && dst
            .layers()
            .iter()
            .zip(src.layers())
            .all(|(d, s)| d.weights.dim() == s.weights.dim() && d.bias.len() == s.bias.len());
    if !same_shape {
        *dst = src.clone();
        return;
    }
    for (d, s) in dst.layers_mut().iter_mut().zip(src.layers()) {
        d.weights.assign(&s.weights);
        d.bias.assign(&s.bias);
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgePacket {
    sender: usize,
    sender_goal: Cell,
    role: Role,
    records: Vec<CellRecord>,
    params: Option<Arc<ParamSnapshot>>,
}

impl KnowledgePacket {
    pub fn peer(
        sender: usize,
        sender_goal: Cell,
        records: Vec<CellRecord>,
        params: Option<Arc<ParamSnapshot>>,
    ) -> Self {
        KnowledgePacket {
            sender,
            sender_goal,
            role: Role::Peer,
            records,
            params,
        }
    }

    /// Advisor packets carry records only.
    pub fn advisor(sender: usize, sender_goal: Cell, records: Vec<CellRecord>) -> Self {
        KnowledgePacket {
            sender,
            sender_goal,
            role: Role::Advisor,
            records,
            params: None,
        }
    }

    pub fn sender(&self) -> usize {
        self.sender
    }

    pub fn sender_goal(&self) -> Cell {
        self.sender_goal
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn records(&self) -> &[CellRecord] {
        &self.records
    }

    pub fn params(&self) -> Option<&Arc<ParamSnapshot>> {
        self.params.as_ref()
    }
}

/// What a requester can see of a contact: its goal, a snapshot of its
/// mental state and, when available, its parameters.
#[derive(Debug, Clone, Copy)]
pub struct ContactView<'a> {
    pub id: usize,
    pub goal: Cell,
    pub mental_state: &'a MentalState,
    pub params: Option<&'a Arc<ParamSnapshot>>,
}

/// What peers put in their packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeerSharing {
    /// Every known cell.
    #[default]
    FullMap,
    /// Only the cells on the peer's known-traversable path to the goal.
    GoalFiltered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub beta: f64,
    pub j_threshold: f64,
    /// Without goal awareness every contact acts as an advisor sharing its
    /// full map, and no parameters move.
    pub goal_aware: bool,
    pub peer_sharing: PeerSharing,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            beta: 0.1,
            j_threshold: 0.5,
            goal_aware: true,
            peer_sharing: PeerSharing::FullMap,
        }
    }
}

/// Running totals across sessions, for diagnostics and behavioral checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProtocolCounters {
    pub sessions: u64,
    pub packets: u64,
    pub advisor_packets: u64,
    pub merged_cells: u64,
    pub aggregations: u64,
    /// Sessions where parameters changed although nothing was aggregated.
    pub unexpected_param_changes: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionOutcome {
    pub contacts: Vec<usize>,
    pub peers: Vec<usize>,
    pub advisors: Vec<usize>,
    /// `(peer id, J)` for every peer packet, in contact order.
    pub jaccard: Vec<(usize, f64)>,
    pub merged_cells: usize,
    pub selected_peers: Vec<usize>,
    pub aggregation_applied: bool,
}

/// Split contacts into peers (same goal) and advisors (different goal, but
/// the requester's goal cell is known to them). Others are dropped.
pub fn classify_contacts<'a>(
    self_goal: Cell,
    contacts: &[ContactView<'a>],
) -> (Vec<ContactView<'a>>, Vec<ContactView<'a>>) {
    let mut peers = Vec::new();
    let mut advisors = Vec::new();
    for c in contacts {
        if c.goal == self_goal {
            peers.push(*c);
        } else if c.mental_state.is_known(self_goal) {
            advisors.push(*c);
        }
    }
    (peers, advisors)
}

/// Shortest path from `from` to `goal` through cells the advisor knows to be
/// traversable, returned as the advisor's records along the path. Empty when
/// no such path exists.
pub fn advisor_plan(advisor_ms: &MentalState, from: Cell, goal: Cell) -> Vec<CellRecord> {
    shortest_path(advisor_ms.width(), advisor_ms.height(), from, goal, |c| {
        advisor_ms.mask(c).is_traversable()
    })
    .map(|path| path.into_iter().map(|c| advisor_ms.record(c)).collect())
    .unwrap_or_default()
}

/// Build the packets a requester at `position` with `goal` receives.
pub fn share(
    position: Cell,
    goal: Cell,
    peers: &[ContactView<'_>],
    advisors: &[ContactView<'_>],
    peer_sharing: PeerSharing,
) -> Vec<KnowledgePacket> {
    let mut packets = Vec::with_capacity(peers.len() + advisors.len());
    for p in peers {
        let records = match peer_sharing {
            PeerSharing::FullMap => p.mental_state.records(),
            PeerSharing::GoalFiltered => advisor_plan(p.mental_state, position, goal),
        };
        packets.push(KnowledgePacket::peer(
            p.id,
            p.goal,
            records,
            p.params.cloned(),
        ));
    }
    for a in advisors {
        let plan = advisor_plan(a.mental_state, position, goal);
        if !plan.is_empty() {
            packets.push(KnowledgePacket::advisor(a.id, a.goal, plan));
        }
    }
    packets
}

#[derive(Debug, Clone, Default)]
pub struct Reasoning {
    pub jaccard: Vec<(usize, f64)>,
    pub selected: Vec<(usize, Arc<ParamSnapshot>)>,
    pub merged_cells: usize,
}

/// Gate each peer on pre-merge Jaccard overlap (`J <= threshold` selects
/// its parameters), then merge every packet's records.
pub fn reason(
    self_ms: &mut MentalState,
    packets: &[KnowledgePacket],
    j_threshold: f64,
) -> Reasoning {
    let mut out = Reasoning::default();
    for p in packets.iter().filter(|p| p.role == Role::Peer) {
        let j = self_ms.jaccard(&p.records);
        out.jaccard.push((p.sender, j));
        if j <= j_threshold {
            if let Some(params) = &p.params {
                out.selected.push((p.sender, Arc::clone(params)));
            }
        }
    }
    out.merged_cells = self_ms.merge(packets.iter().map(|p| p.records()));
    out
}

/// `θ ← (1 − β)·θ + β·mean(selected)` for actor and critic. Targets are
/// re-synced and optimizer moments cleared when anything was applied.
pub fn aggregate(brain: &mut AgentBrain, selected: &[&ParamSnapshot], beta: f64) -> Result<bool> {
    if selected.is_empty() {
        return Ok(false);
    }
    let actors: Vec<&Mlp> = selected.iter().map(|s| &s.actor).collect();
    let critics: Vec<&Mlp> = selected.iter().map(|s| &s.critic).collect();
    brain.actor.blend_toward_mean(&actors, beta)?;
    brain.critic.blend_toward_mean(&critics, beta)?;
    brain.sync_after_aggregation();
    Ok(true)
}

/// The requester's side of a session.
pub struct Requester<'a> {
    pub id: usize,
    pub position: Cell,
    pub goal: Cell,
    pub mental_state: &'a mut MentalState,
    pub brain: &'a mut AgentBrain,
}

/// Classify, share, reason and aggregate for one requester. `contacts`
/// must already be restricted to agents in range, in index order.
pub fn run_session(
    me: Requester<'_>,
    contacts: &[ContactView<'_>],
    config: &SessionConfig,
    counters: &mut ProtocolCounters,
    instrument: bool,
) -> Result<SessionOutcome> {
    let mut outcome = SessionOutcome {
        contacts: contacts.iter().map(|c| c.id).collect(),
        ..SessionOutcome::default()
    };
    if contacts.is_empty() {
        return Ok(outcome);
    }
    counters.sessions += 1;

    let packets = if config.goal_aware {
        let (peers, advisors) = classify_contacts(me.goal, contacts);
        outcome.peers = peers.iter().map(|c| c.id).collect();
        outcome.advisors = advisors.iter().map(|c| c.id).collect();
        share(me.position, me.goal, &peers, &advisors, config.peer_sharing)
    } else {
        outcome.advisors = outcome.contacts.clone();
        contacts
            .iter()
            .map(|c| KnowledgePacket::advisor(c.id, c.goal, c.mental_state.records()))
            .filter(|p| !p.records.is_empty())
            .collect()
    };
    counters.packets += packets.len() as u64;
    counters.advisor_packets += packets.iter().filter(|p| p.role == Role::Advisor).count() as u64;

    let fingerprint = |b: &AgentBrain| (b.actor.fingerprint(), b.critic.fingerprint());
    let before = instrument.then(|| fingerprint(me.brain));

    let reasoning = reason(me.mental_state, &packets, config.j_threshold);
    outcome.jaccard = reasoning.jaccard;
    outcome.merged_cells = reasoning.merged_cells;
    counters.merged_cells += reasoning.merged_cells as u64;

    if config.goal_aware {
        let selected: Vec<&ParamSnapshot> =
            reasoning.selected.iter().map(|(_, s)| s.as_ref()).collect();
        outcome.aggregation_applied = aggregate(me.brain, &selected, config.beta)?;
        outcome.selected_peers = reasoning.selected.iter().map(|(id, _)| *id).collect();
        if outcome.aggregation_applied {
            counters.aggregations += 1;
        }
    }
    if let Some(before) = before {
        if !outcome.aggregation_applied && fingerprint(me.brain) != before {
            counters.unexpected_param_changes += 1;
        }
    }
    Ok(outcome)
}
