//! The per-tick simulation loop.
//!
//! A tick runs in three phases: the world advances its obstacles; every agent
//! observes, absorbs and ages its mental state; then, for agent types that
//! communicate, every active agent runs a session against immutable
//! snapshots of its contacts, in index order. Finally each active agent
//! (index order) completes its previous transition with the new state,
//! learns, acts and is rewarded.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::EmbeddingTables;
use crate::error::{Error, Result};
use crate::gridworld::{Action, GridWorld, Layout, MoveOutcome, WorldConfig};
use crate::learner::{
    combined_move_reward, extrinsic_reward, known_map_distance, normalized_extrinsic, step_reward,
    AgentBrain, DistanceSource, EpsilonSchedule, RewardParams,
};
use crate::mental_state::MentalState;
use crate::neural::Transition;
use crate::protocol::{
    run_session, ContactView, ParamSnapshot, ProtocolCounters, Requester, SessionConfig,
};

use super::config::{AgentTypeFlags, ScenarioConfig};
use super::log::SessionLog;
use super::metrics::{avg_reward, AgentEpisode, EpisodeMetrics, RunSummary};

/// One row of the optional per-step diagnostics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRow {
    pub episode: usize,
    pub step: usize,
    pub agent: usize,
    pub reward: f64,
    pub critic_loss: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub episodes: Vec<EpisodeMetrics>,
    pub sessions: SessionLog,
    pub diagnostics: Vec<DiagnosticRow>,
    pub counters: ProtocolCounters,
    pub updates: u64,
    pub summary: RunSummary,
}

struct Pending {
    input: Vec<f64>,
    action: Action,
    reward: f64,
}

struct AgentSlot {
    brain: AgentBrain,
    ms: MentalState,
    rng: ChaCha8Rng,
    pending: Option<Pending>,
    /// Reused between sessions so each tick copies parameters in place.
    snapshot: Option<Arc<ParamSnapshot>>,
}

/// Forces an agent's action instead of its policy (scripted fixtures).
pub type Policy<'a> = dyn FnMut(&GridWorld, usize) -> Action + 'a;

pub struct Simulation {
    config: ScenarioConfig,
    flags: AgentTypeFlags,
    world: GridWorld,
    tables: EmbeddingTables,
    agents: Vec<AgentSlot>,
    reward: RewardParams,
    session_config: SessionConfig,
    epsilon: EpsilonSchedule,
    ticks: u64,
    updates: u64,
    counters: ProtocolCounters,
    sessions: SessionLog,
    diagnostics: Vec<DiagnosticRow>,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Simulation> {
        Self::with_layout(config, config.layout()?)
    }

    pub fn with_layout(config: &ScenarioConfig, layout: Layout) -> Result<Simulation> {
        config.validate()?;
        let world_config = WorldConfig {
            layout,
            difficulty: config.difficulty,
            scenario: config.scenario,
            n_agents: config.n_agents,
            p_toggle: config.p_toggle,
        };
        let world = GridWorld::build(&world_config, config.seed)?;
        let mut table_rng = stream(config.seed, 1);
        let tables = EmbeddingTables::build(
            rand::Rng::gen(&mut table_rng),
            world.width(),
            world.height(),
        )?;
        let brain_config = config.brain_config();
        let agents = (0..config.n_agents)
            .map(|i| {
                let mut rng = stream(config.seed, 2 + i as u64);
                let brain = AgentBrain::new(brain_config, &tables, &mut rng)?;
                let ms = MentalState::new(world.width(), world.height(), world.goal(i))?
                    .with_time_increment(config.time_increment)
                    .with_duration_cap(config.effective_duration_cap());
                Ok(AgentSlot {
                    brain,
                    ms,
                    rng,
                    pending: None,
                    snapshot: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Simulation {
            flags: config.flags(),
            reward: config.reward_params(world.width(), world.height()),
            session_config: config.session_config(),
            epsilon: config.epsilon_schedule(),
            config: config.clone(),
            world,
            tables,
            agents,
            ticks: 0,
            updates: 0,
            counters: ProtocolCounters::default(),
            sessions: SessionLog::new(),
            diagnostics: Vec::new(),
        })
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut GridWorld {
        &mut self.world
    }

    pub fn mental_state(&self, agent: usize) -> &MentalState {
        &self.agents[agent].ms
    }

    pub fn brain(&self, agent: usize) -> &AgentBrain {
        &self.agents[agent].brain
    }

    pub fn counters(&self) -> ProtocolCounters {
        self.counters
    }

    pub fn sessions(&self) -> &SessionLog {
        &self.sessions
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn run_episode(&mut self, episode: usize) -> Result<EpisodeMetrics> {
        self.episode_inner(episode, None)
    }

    pub fn run_scripted_episode(
        &mut self,
        episode: usize,
        policy: &mut Policy<'_>,
    ) -> Result<EpisodeMetrics> {
        self.episode_inner(episode, Some(policy))
    }

    /// Play every configured episode and summarize.
    pub fn run(mut self) -> Result<RunResult> {
        let episodes = (0..self.config.episodes)
            .map(|e| self.run_episode(e))
            .collect::<Result<Vec<_>>>()?;
        let summary = RunSummary::from_episodes(&episodes);
        Ok(RunResult {
            config: self.config,
            episodes,
            sessions: self.sessions,
            diagnostics: self.diagnostics,
            counters: self.counters,
            updates: self.updates,
            summary,
        })
    }

    fn episode_inner(
        &mut self,
        episode: usize,
        mut policy: Option<&mut Policy<'_>>,
    ) -> Result<EpisodeMetrics> {
        let n = self.agents.len();
        self.world.reset_episode();
        for slot in &mut self.agents {
            slot.pending = None;
            if !self.config.persist_mental_state {
                slot.ms.reset();
            }
        }
        let mut rewards: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut arrival: Vec<Option<usize>> =
            (0..n).map(|i| self.world.at_goal(i).then_some(0)).collect();

        for step in 0..self.config.max_steps {
            if arrival.iter().all(Option::is_some) {
                break;
            }
            self.world.step_dynamics();
            for i in 0..n {
                self.perceive(i);
            }
            if self.flags.use_communication {
                self.communicate(episode, step, &arrival)?;
            }
            for i in 0..n {
                if arrival[i].is_some() {
                    continue;
                }
                let input = self.actor_input(i);
                self.complete_pending(i, &input, episode, step)?;

                let eps = self.epsilon.value(self.ticks);
                let slot = &mut self.agents[i];
                let action = match policy.as_deref_mut() {
                    Some(p) => p(&self.world, i),
                    None => slot.brain.select_action(&input, eps, &mut slot.rng)?,
                };
                let outcome = self.world.apply_action(i, action);
                let at_goal = self.world.at_goal(i);
                let r = self.step_reward(i, outcome, at_goal);
                rewards[i].push(r);
                if self.config.diagnostics {
                    self.diagnostics.push(DiagnosticRow {
                        episode,
                        step,
                        agent: i,
                        reward: r,
                        critic_loss: None,
                        epsilon: eps,
                    });
                }
                if at_goal {
                    arrival[i] = Some(step + 1);
                    let next = self.actor_input(i);
                    self.learn(
                        i,
                        Transition {
                            state: input,
                            action: action.index(),
                            reward: r,
                            next_state: next,
                            done: true,
                        },
                        episode,
                        step,
                    )?;
                } else {
                    self.agents[i].pending = Some(Pending {
                        input,
                        action,
                        reward: r,
                    });
                }
            }
            self.ticks += 1;
        }

        let last = self.config.max_steps;
        for i in 0..n {
            if self.agents[i].pending.is_some() {
                let input = self.actor_input(i);
                self.complete_pending(i, &input, episode, last)?;
            }
        }

        let agents = (0..n)
            .map(|i| AgentEpisode {
                avg_reward: avg_reward(&rewards[i]),
                steps_to_goal: arrival[i].unwrap_or(self.config.max_steps),
                reached: arrival[i].is_some(),
            })
            .collect();
        Ok(EpisodeMetrics { episode, agents })
    }

    fn perceive(&mut self, i: usize) {
        let obs = self.world.observe(i, self.config.obs_radius);
        let ms = &mut self.agents[i].ms;
        if self.flags.use_mental_state {
            ms.absorb_observation(&obs);
            ms.tick();
        } else {
            ms.reset();
            ms.absorb_observation(&obs);
        }
    }

    fn actor_input(&self, i: usize) -> Vec<f64> {
        self.tables.actor_input(
            self.world.position(i),
            self.world.goal(i),
            &self.agents[i].ms,
            self.flags.use_time_awareness,
        )
    }

    fn step_reward(&self, i: usize, outcome: MoveOutcome, at_goal: bool) -> f64 {
        let r_agg = if matches!(outcome, MoveOutcome::Moved(_)) && !at_goal {
            let r_ext = match self.config.distance_source {
                DistanceSource::TrueMap => extrinsic_reward(&self.world, i, &self.reward),
                DistanceSource::KnownMap => normalized_extrinsic(
                    known_map_distance(
                        &self.agents[i].ms,
                        self.world.position(i),
                        self.world.goal(i),
                    ),
                    self.reward.delta_max,
                ),
            };
            let novelty = if self.reward.alpha > 0.0 {
                self.agents[i].ms.mean_novelty_in(self.config.novelty)
            } else {
                0.0
            };
            combined_move_reward(r_ext, novelty, self.reward.alpha)
        } else {
            0.0
        };
        step_reward(outcome, at_goal, r_agg, self.reward.lambda_stay)
    }

    fn complete_pending(
        &mut self,
        i: usize,
        next: &[f64],
        episode: usize,
        step: usize,
    ) -> Result<()> {
        if let Some(p) = self.agents[i].pending.take() {
            let t = Transition {
                state: p.input,
                action: p.action.index(),
                reward: p.reward,
                next_state: next.to_vec(),
                done: false,
            };
            self.learn(i, t, episode, step)?;
        }
        Ok(())
    }

    fn learn(&mut self, i: usize, t: Transition, episode: usize, step: usize) -> Result<()> {
        let slot = &mut self.agents[i];
        slot.brain.remember(&t)?;
        let report = slot.brain.update(&mut slot.rng)?;
        if let Some(report) = report {
            self.updates += 1;
            if !report.critic_loss.is_finite() {
                return Err(Error::Domain(format!(
                    "critic loss diverged for agent {i} in episode {episode}, step {step}"
                )));
            }
            if self.config.diagnostics {
                if let Some(row) = self.diagnostics.iter_mut().rev().find(|r| r.agent == i) {
                    row.critic_loss = Some(report.critic_loss);
                }
            }
        }
        Ok(())
    }

    fn communicate(
        &mut self,
        episode: usize,
        step: usize,
        arrival: &[Option<usize>],
    ) -> Result<()> {
        let n = self.agents.len();
        let contacts: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                if arrival[i].is_some() {
                    Vec::new()
                } else {
                    self.world.contacts_in_range(i, self.config.obs_radius)
                }
            })
            .collect();
        if contacts.iter().all(Vec::is_empty) {
            return Ok(());
        }
        let mut needed = vec![false; n];
        for &j in contacts.iter().flatten() {
            needed[j] = true;
        }
        let snapshots: Vec<Option<MentalState>> = (0..n)
            .map(|j| needed[j].then(|| self.agents[j].ms.clone()))
            .collect();
        let params: Vec<Option<Arc<ParamSnapshot>>> = (0..n)
            .map(|j| {
                if !(needed[j] && self.flags.use_goal_awareness) {
                    return None;
                }
                let slot = &mut self.agents[j];
                match &mut slot.snapshot {
                    Some(snap) => Arc::make_mut(snap).refresh(&slot.brain),
                    None => slot.snapshot = Some(Arc::new(ParamSnapshot::of(&slot.brain))),
                }
                slot.snapshot.clone()
            })
            .collect();

        for (i, mine) in contacts.iter().enumerate() {
            if mine.is_empty() {
                continue;
            }
            let views: Vec<ContactView<'_>> = mine
                .iter()
                .map(|&j| ContactView {
                    id: j,
                    goal: self.world.goal(j),
                    mental_state: snapshots[j].as_ref().expect("snapshot taken"),
                    params: params[j].as_ref(),
                })
                .collect();
            let slot = &mut self.agents[i];
            let outcome = run_session(
                Requester {
                    id: i,
                    position: self.world.position(i),
                    goal: self.world.goal(i),
                    mental_state: &mut slot.ms,
                    brain: &mut slot.brain,
                },
                &views,
                &self.session_config,
                &mut self.counters,
                self.config.instrument,
            )?;
            self.sessions.push(episode, step, i, &outcome);
        }
        Ok(())
    }
}

/// Build and play one configured run.
pub fn run(config: &ScenarioConfig) -> Result<RunResult> {
    Simulation::new(config)?.run()
}
