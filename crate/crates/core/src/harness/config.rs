//! Scenario configuration and the A1–A5 capability ladder.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Difficulty, GoalScenario, Layout};
use crate::learner::{BrainConfig, DistanceSource, EpsilonSchedule, RewardParams};
use crate::mental_state::NoveltyMode;
use crate::protocol::{PeerSharing, SessionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvSize {
    #[default]
    Base,
    Large,
}

impl EnvSize {
    pub fn layout(self) -> Layout {
        match self {
            EnvSize::Base => Layout::base(),
            EnvSize::Large => Layout::large(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvSize::Base => "base",
            EnvSize::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentType {
    A1,
    A2,
    A3,
    A4,
    #[default]
    A5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentTypeFlags {
    pub use_mental_state: bool,
    pub use_time_awareness: bool,
    pub use_communication: bool,
    pub use_goal_awareness: bool,
}

impl AgentType {
    pub const ALL: [AgentType; 5] = [
        AgentType::A1,
        AgentType::A2,
        AgentType::A3,
        AgentType::A4,
        AgentType::A5,
    ];

    pub fn flags(self) -> AgentTypeFlags {
        let rank = match self {
            AgentType::A1 => 1,
            AgentType::A2 => 2,
            AgentType::A3 => 3,
            AgentType::A4 => 4,
            AgentType::A5 => 5,
        };
        AgentTypeFlags {
            use_mental_state: rank >= 2,
            use_time_awareness: rank >= 3,
            use_communication: rank >= 4,
            use_goal_awareness: rank >= 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentType::A1 => "a1",
            AgentType::A2 => "a2",
            AgentType::A3 => "a3",
            AgentType::A4 => "a4",
            AgentType::A5 => "a5",
        }
    }
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown agent type {s:?}")))
    }
}

/// One experiment: environment, agent type, seed and every hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub env_size: EnvSize,
    /// Custom layout file; replaces the built-in layout for `env_size`.
    pub layout_file: Option<PathBuf>,
    pub difficulty: Difficulty,
    pub scenario: GoalScenario,
    pub agent_type: AgentType,
    pub n_agents: usize,
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_stay: f64,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub obs_radius: usize,
    pub p_toggle: f64,
    pub time_increment: f64,
    /// Saturation for durations. Absent means `max_steps * time_increment`;
    /// `inf` disables the cap.
    pub duration_cap: Option<f64>,
    pub j_threshold: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the run's total ticks over which ε anneals.
    pub epsilon_anneal_fraction: f64,
    pub novelty: NoveltyMode,
    pub persist_mental_state: bool,
    pub distance_source: DistanceSource,
    pub peer_sharing: PeerSharing,
    /// Fingerprint parameters around every session and count changes that
    /// no aggregation explains.
    pub instrument: bool,
    /// Record per-step reward, loss and ε.
    pub diagnostics: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let brain = BrainConfig::default();
        ScenarioConfig {
            env_size: EnvSize::Base,
            layout_file: None,
            difficulty: Difficulty::Easy,
            scenario: GoalScenario::SharedGoal,
            agent_type: AgentType::A5,
            n_agents: 3,
            episodes: 100,
            max_steps: 300,
            seed: 0,
            alpha: 0.1,
            beta: 0.1,
            lambda_stay: 0.5,
            gamma: brain.gamma,
            tau: brain.tau,
            actor_lr: brain.actor_lr,
            critic_lr: brain.critic_lr,
            batch_size: brain.batch_size,
            replay_capacity: brain.replay_capacity,
            obs_radius: 2,
            p_toggle: 0.02,
            time_increment: 0.01,
            duration_cap: None,
            j_threshold: 0.5,
            epsilon_start: 0.9,
            epsilon_end: 0.05,
            epsilon_anneal_fraction: 0.5,
            novelty: NoveltyMode::Time,
            persist_mental_state: true,
            distance_source: DistanceSource::TrueMap,
            peer_sharing: PeerSharing::FullMap,
            instrument: true,
            diagnostics: false,
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_agents", self.n_agents),
            ("episodes", self.episodes),
            ("max_steps", self.max_steps),
            ("batch_size", self.batch_size),
            ("obs_radius", self.obs_radius),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::config("replay_capacity must be at least batch_size"));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda_stay", self.lambda_stay),
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("p_toggle", self.p_toggle),
            ("j_threshold", self.j_threshold),
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_anneal_fraction", self.epsilon_anneal_fraction),
        ] {
            unit_interval(name, v)?;
        }
        positive("actor_lr", self.actor_lr)?;
        positive("critic_lr", self.critic_lr)?;
        positive("time_increment", self.time_increment)?;
        if let Some(cap) = self.duration_cap {
            if cap.is_nan() || cap < 0.0 {
                return Err(Error::config(format!(
                    "duration_cap must be non-negative, got {cap}"
                )));
            }
        }
        self.scenario.goal_indices(self.n_agents)?;
        Ok(())
    }

    pub fn flags(&self) -> AgentTypeFlags {
        self.agent_type.flags()
    }

    pub fn layout(&self) -> Result<Layout> {
        match &self.layout_file {
            Some(path) => Layout::load(path),
            None => Ok(self.env_size.layout()),
        }
    }

    /// α as applied: A1 and A2 have no intrinsic reward.
    pub fn effective_alpha(&self) -> f64 {
        if self.flags().use_time_awareness {
            self.alpha
        } else {
            0.0
        }
    }

    pub fn effective_duration_cap(&self) -> Option<f64> {
        match self.duration_cap {
            Some(c) if c.is_infinite() => None,
            Some(c) => Some(c),
            None => Some(self.max_steps as f64 * self.time_increment),
        }
    }

    pub fn brain_config(&self) -> BrainConfig {
        BrainConfig {
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            gamma: self.gamma,
            tau: self.tau,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
        }
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        let total = (self.episodes * self.max_steps) as f64;
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            anneal_steps: (total * self.epsilon_anneal_fraction).round() as u64,
        }
    }

    pub fn reward_params(&self, width: usize, height: usize) -> RewardParams {
        RewardParams {
            alpha: self.effective_alpha(),
            lambda_stay: self.lambda_stay,
            delta_max: (width + height) as f64,
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            beta: self.beta,
            j_threshold: self.j_threshold,
            goal_aware: self.flags().use_goal_awareness,
            peer_sharing: self.peer_sharing,
        }
    }

    /// Short identifier, e.g. `base-hard-s2-a5-seed42`.
    pub fn label(&self) -> String {
        format!(
            "{}-{}-s{}-{}-seed{}",
            self.env_size.as_str(),
            difficulty_str(self.difficulty),
            scenario_str(self.scenario),
            self.agent_type,
            self.seed
        )
    }
}

pub fn difficulty_str(d: Difficulty) -> &'static str {
    match d {
        Difficulty::Easy => "easy",
        Difficulty::Hard => "hard",
    }
}

pub fn scenario_str(s: GoalScenario) -> &'static str {
    match s {
        GoalScenario::SharedGoal => "1",
        GoalScenario::SplitGoals => "2",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert_eq!((c.episodes, c.max_steps, c.batch_size), (100, 300, 64));
        assert_eq!(
            (c.alpha, c.beta, c.lambda_stay, c.j_threshold),
            (0.1, 0.1, 0.5, 0.5)
        );
        assert_eq!(c.effective_duration_cap(), Some(3.0));
    }

    #[test]
    fn flag_ladder() {
        let f: Vec<_> = AgentType::ALL
            .iter()
            .map(|t| {
                let f = t.flags();
                [
                    f.use_mental_state,
                    f.use_time_awareness,
                    f.use_communication,
                    f.use_goal_awareness,
                ]
            })
            .collect();
        assert_eq!(
            f,
            vec![
                [false, false, false, false],
                [true, false, false, false],
                [true, true, false, false],
                [true, true, true, false],
                [true, true, true, true],
            ]
        );
    }

    #[test]
    fn low_rungs_have_no_intrinsic_reward() {
        for (t, alpha) in [
            (AgentType::A1, 0.0),
            (AgentType::A2, 0.0),
            (AgentType::A3, 0.1),
        ] {
            let c = ScenarioConfig {
                agent_type: t,
                ..ScenarioConfig::default()
            };
            assert_eq!(c.effective_alpha(), alpha);
        }
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = ScenarioConfig {
            seed: 42,
            agent_type: AgentType::A3,
            ..ScenarioConfig::default()
        };
        assert_eq!(
            ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap(),
            c
        );

        let partial = ScenarioConfig::from_toml_str(
            "env_size = \"large\"\ndifficulty = \"hard\"\nscenario = \"2\"\nduration_cap = inf\n",
        )
        .unwrap();
        assert_eq!(partial.env_size, EnvSize::Large);
        assert_eq!(partial.scenario, GoalScenario::SplitGoals);
        assert_eq!(partial.effective_duration_cap(), None);
        assert_eq!(partial.episodes, 100);

        assert!(ScenarioConfig::from_toml_str("bogus = 1")
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = [
            ScenarioConfig {
                alpha: 1.5,
                ..ScenarioConfig::default()
            },
            ScenarioConfig {
                episodes: 0,
                ..ScenarioConfig::default()
            },
            ScenarioConfig {
                n_agents: 2,
                scenario: GoalScenario::SplitGoals,
                ..ScenarioConfig::default()
            },
            ScenarioConfig {
                replay_capacity: 10,
                ..ScenarioConfig::default()
            },
            ScenarioConfig {
                actor_lr: 0.0,
                ..ScenarioConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().unwrap_err().is_config());
        }
    }

    #[test]
    fn labels() {
        let c = ScenarioConfig {
            difficulty: Difficulty::Hard,
            scenario: GoalScenario::SplitGoals,
            seed: 42,
            ..ScenarioConfig::default()
        };
        assert_eq!(c.label(), "base-hard-s2-a5-seed42");
        assert_eq!("A3".parse::<AgentType>().unwrap(), AgentType::A3);
    }
}
