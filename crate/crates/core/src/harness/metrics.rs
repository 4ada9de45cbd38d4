//! Per-episode rewards and the overall performance measure.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentEpisode {
    pub avg_reward: f64,
    pub steps_to_goal: usize,
    pub reached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub agents: Vec<AgentEpisode>,
}

impl EpisodeMetrics {
    pub fn mean_avg_reward(&self) -> f64 {
        mean(self.agents.iter().map(|a| a.avg_reward))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean step reward over the steps an agent took. An agent that never had
/// to move (spawned on its goal) scores 1.
pub fn avg_reward(rewards: &[f64]) -> f64 {
    if rewards.is_empty() {
        1.0
    } else {
        mean(rewards.iter().copied())
    }
}

/// Mean over episodes of the per-episode agent mean, with the sample
/// standard deviation of those per-episode means (0 for a single episode).
pub fn overall_performance(episodes: &[EpisodeMetrics]) -> (f64, f64) {
    let per_episode: Vec<f64> = episodes
        .iter()
        .map(EpisodeMetrics::mean_avg_reward)
        .collect();
    let m = mean(per_episode.iter().copied());
    if per_episode.len() < 2 {
        return (m, 0.0);
    }
    let var =
        per_episode.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (per_episode.len() - 1) as f64;
    (m, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub r_overall: f64,
    pub std: f64,
    pub mean_steps_to_goal: f64,
    pub goal_reach_rate: f64,
}

impl RunSummary {
    pub fn from_episodes(episodes: &[EpisodeMetrics]) -> RunSummary {
        let (r_overall, std) = overall_performance(episodes);
        let all = || episodes.iter().flat_map(|e| e.agents.iter());
        RunSummary {
            r_overall,
            std,
            mean_steps_to_goal: mean(all().map(|a| a.steps_to_goal as f64)),
            goal_reach_rate: mean(all().map(|a| if a.reached { 1.0 } else { 0.0 })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(i: usize, rewards: &[f64]) -> EpisodeMetrics {
        EpisodeMetrics {
            episode: i,
            agents: rewards
                .iter()
                .map(|&r| AgentEpisode {
                    avg_reward: r,
                    steps_to_goal: 10,
                    reached: false,
                })
                .collect(),
        }
    }

    #[test]
    fn avg_reward_examples() {
        assert!((avg_reward(&[1.0, -0.5, 0.5]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(avg_reward(&[1.0]), 1.0);
        assert_eq!(avg_reward(&[-1.0, -1.0]), -1.0);
        assert_eq!(avg_reward(&[]), 1.0);
    }

    #[test]
    fn overall_examples() {
        let (m, s) = overall_performance(&[episode(0, &[0.2, 0.4])]);
        assert!((m - 0.3).abs() < 1e-15);
        assert_eq!(s, 0.0);

        let constant: Vec<_> = (0..7).map(|i| episode(i, &[0.25, 0.25, 0.25])).collect();
        assert_eq!(overall_performance(&constant), (0.25, 0.0));

        let (m, s) = overall_performance(&[episode(0, &[0.0]), episode(1, &[1.0])]);
        assert_eq!(m, 0.5);
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn summary_rates() {
        let mut e = episode(0, &[0.1, 0.3]);
        e.agents[0].reached = true;
        e.agents[0].steps_to_goal = 4;
        let s = RunSummary::from_episodes(&[e]);
        assert_eq!(s.goal_reach_rate, 0.5);
        assert_eq!(s.mean_steps_to_goal, 7.0);
    }
}
