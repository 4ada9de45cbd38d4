//! Step rewards: goal-distance extrinsic signal, novelty blend, and the
//! four-way outcome table.

use serde::{Deserialize, Serialize};

use crate::gridworld::{shortest_path, Cell, GridWorld, MaskLabel, MoveOutcome};
use crate::mental_state::MentalState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    /// Weight of the intrinsic (novelty) term.
    pub alpha: f64,
    /// Penalty magnitude for staying off-goal.
    pub lambda_stay: f64,
    /// Distance normalizer, `width + height` of the map.
    pub delta_max: f64,
}

impl RewardParams {
    pub fn for_world(world: &GridWorld, alpha: f64, lambda_stay: f64) -> RewardParams {
        RewardParams {
            alpha,
            lambda_stay,
            delta_max: (world.width() + world.height()) as f64,
        }
    }
}

/// Where the goal distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceSource {
    /// Shortest path on the ground-truth map.
    #[default]
    TrueMap,
    /// Shortest path through the agent's beliefs; unknown cells count as passable.
    KnownMap,
}

/// `1 − Δ/Δ_max`, with an unreachable goal treated as `Δ = Δ_max`.
pub fn normalized_extrinsic(distance: Option<usize>, delta_max: f64) -> f64 {
    let d = distance.map_or(delta_max, |d| (d as f64).min(delta_max));
    1.0 - d / delta_max
}

pub fn extrinsic_reward(world: &GridWorld, agent: usize, params: &RewardParams) -> f64 {
    let d = world.true_shortest_path_len(world.position(agent), world.goal(agent));
    normalized_extrinsic(d, params.delta_max)
}

/// Goal distance through an agent's own map.
pub fn known_map_distance(ms: &MentalState, from: Cell, to: Cell) -> Option<usize> {
    shortest_path(ms.width(), ms.height(), from, to, |c| {
        c == from || ms.mask(c) != MaskLabel::Obstacle
    })
    .map(|p| p.len() - 1)
}

/// `(1 − α)·r_ext + α·novelty`, clamped to `[-1, 1]`.
pub fn combined_move_reward(r_ext: f64, mean_novelty: f64, alpha: f64) -> f64 {
    ((1.0 - alpha) * r_ext + alpha * mean_novelty).clamp(-1.0, 1.0)
}

/// Reward for one step given how the move resolved.
pub fn step_reward(outcome: MoveOutcome, at_goal: bool, r_agg: f64, lambda_stay: f64) -> f64 {
    if at_goal {
        return 1.0;
    }
    match outcome {
        MoveOutcome::DeliberateStay => -lambda_stay,
        MoveOutcome::Moved(_) => r_agg,
        MoveOutcome::Blocked => -1.0,
    }
}
