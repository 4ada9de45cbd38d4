//! CSV outputs and the experiment matrix.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridworld::{Difficulty, GoalScenario};

use super::config::{difficulty_str, scenario_str, AgentType, EnvSize, ScenarioConfig};
use super::sim::{run, RunResult};

/// The cross product a matrix run covers.
#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub base: ScenarioConfig,
    pub envs: Vec<EnvSize>,
    pub difficulties: Vec<Difficulty>,
    pub scenarios: Vec<GoalScenario>,
    pub agent_types: Vec<AgentType>,
    pub seeds: Vec<u64>,
}

impl MatrixSpec {
    /// Every environment, scenario and agent type for the given seeds.
    pub fn full(base: ScenarioConfig, seeds: Vec<u64>) -> MatrixSpec {
        MatrixSpec {
            base,
            envs: vec![EnvSize::Base, EnvSize::Large],
            difficulties: vec![Difficulty::Easy, Difficulty::Hard],
            scenarios: vec![GoalScenario::SharedGoal, GoalScenario::SplitGoals],
            agent_types: AgentType::ALL.to_vec(),
            seeds,
        }
    }

    /// Configs in env, difficulty, scenario, agent type, seed order.
    pub fn configs(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &env_size in &self.envs {
            for &difficulty in &self.difficulties {
                for &scenario in &self.scenarios {
                    for &agent_type in &self.agent_types {
                        for &seed in &self.seeds {
                            out.push(ScenarioConfig {
                                env_size,
                                difficulty,
                                scenario,
                                agent_type,
                                seed,
                                ..self.base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Run every config, in parallel, returning results in input order.
pub fn run_configs(configs: &[ScenarioConfig]) -> Result<Vec<RunResult>> {
    for c in configs {
        c.validate().map_err(|e| Error::Run {
            label: c.label(),
            source: Box::new(e),
        })?;
    }
    configs
        .par_iter()
        .map(|c| {
            run(c).map_err(|e| Error::Run {
                label: c.label(),
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn run_matrix(spec: &MatrixSpec) -> Result<Vec<RunResult>> {
    run_configs(&spec.configs())
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    env: &'a str,
    difficulty: &'a str,
    scenario: &'a str,
    agent_type: &'a str,
    seed: u64,
    r_overall: f64,
    std: f64,
    mean_steps_to_goal: f64,
    goal_reach_rate: f64,
}

fn key(c: &ScenarioConfig) -> [String; 5] {
    [
        c.env_size.as_str().to_string(),
        difficulty_str(c.difficulty).to_string(),
        scenario_str(c.scenario).to_string(),
        c.agent_type.to_string(),
        c.seed.to_string(),
    ]
}

const KEY_HEADER: [&str; 5] = ["env", "difficulty", "scenario", "agent_type", "seed"];

fn join(ids: &[usize]) -> String {
    ids.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_metrics<W: std::io::Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        let c = &r.config;
        w.serialize(MetricsRow {
            env: c.env_size.as_str(),
            difficulty: difficulty_str(c.difficulty),
            scenario: scenario_str(c.scenario),
            agent_type: c.agent_type.as_str(),
            seed: c.seed,
            r_overall: r.summary.r_overall,
            std: r.summary.std,
            mean_steps_to_goal: r.summary.mean_steps_to_goal,
            goal_reach_rate: r.summary.goal_reach_rate,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episodes<W: std::io::Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = KEY_HEADER.to_vec();
    header.extend(["episode", "agent", "avg_reward", "steps_to_goal", "reached"]);
    w.write_record(&header)?;
    for r in results {
        let k = key(&r.config);
        for e in &r.episodes {
            for (i, a) in e.agents.iter().enumerate() {
                let mut row = k.to_vec();
                row.extend([
                    e.episode.to_string(),
                    i.to_string(),
                    a.avg_reward.to_string(),
                    a.steps_to_goal.to_string(),
                    a.reached.to_string(),
                ]);
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sessions<W: std::io::Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = KEY_HEADER.to_vec();
    header.extend([
        "episode",
        "step",
        "agent",
        "contacts",
        "peers",
        "advisors",
        "jaccard",
        "merged_cells",
        "aggregation_applied",
    ]);
    w.write_record(&header)?;
    for r in results {
        let k = key(&r.config);
        for s in r.sessions.iter() {
            let jaccard = s
                .jaccard
                .iter()
                .map(|(id, j)| format!("{id}:{j}"))
                .collect::<Vec<_>>()
                .join(";");
            let mut row = k.to_vec();
            row.extend([
                s.episode.to_string(),
                s.step.to_string(),
                s.agent.to_string(),
                join(s.contacts),
                join(s.peers),
                join(s.advisors),
                jaccard,
                s.merged_cells.to_string(),
                s.aggregation_applied.to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Episode against the agent-mean AvgR and each agent's AvgR, one column per agent.
pub fn write_learning_curve<W: std::io::Write>(out: W, results: &[RunResult]) -> Result<()> {
    let n = results.iter().map(|r| r.config.n_agents).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = KEY_HEADER.iter().map(|s| s.to_string()).collect();
    header.push("episode".into());
    header.push("mean_avg_reward".into());
    header.extend((0..n).map(|i| format!("agent_{i}")));
    w.write_record(&header)?;
    for r in results {
        let k = key(&r.config);
        for e in &r.episodes {
            let mut row = k.to_vec();
            row.push(e.episode.to_string());
            row.push(e.mean_avg_reward().to_string());
            row.extend((0..n).map(|i| {
                e.agents
                    .get(i)
                    .map(|a| a.avg_reward.to_string())
                    .unwrap_or_default()
            }));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics<W: std::io::Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = KEY_HEADER.to_vec();
    header.extend([
        "episode",
        "step",
        "agent",
        "reward",
        "critic_loss",
        "epsilon",
    ]);
    w.write_record(&header)?;
    for r in results {
        let k = key(&r.config);
        for d in &r.diagnostics {
            let mut row = k.to_vec();
            row.extend([
                d.episode.to_string(),
                d.step.to_string(),
                d.agent.to_string(),
                d.reward.to_string(),
                d.critic_loss.map(|l| l.to_string()).unwrap_or_default(),
                d.epsilon.to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Protocol counters and learning-update totals, one row per run.
pub fn write_counters<W: std::io::Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = KEY_HEADER.to_vec();
    header.extend([
        "sessions",
        "packets",
        "advisor_packets",
        "merged_cells",
        "aggregations",
        "unexpected_param_changes",
        "updates",
    ]);
    w.write_record(&header)?;
    for r in results {
        let c = &r.counters;
        let mut row = key(&r.config).to_vec();
        row.extend(
            [
                c.sessions,
                c.packets,
                c.advisor_packets,
                c.merged_cells,
                c.aggregations,
                c.unexpected_param_changes,
                r.updates,
            ]
            .map(|v| v.to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write every output file into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, results: &[RunResult]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = |name: &str| fs::File::create(dir.join(name));
    write_metrics(file("metrics.csv")?, results)?;
    write_episodes(file("episodes.csv")?, results)?;
    write_sessions(file("sessions.csv")?, results)?;
    write_learning_curve(file("learning_curve.csv")?, results)?;
    write_counters(file("counters.csv")?, results)?;
    if results.iter().any(|r| r.config.diagnostics) {
        write_diagnostics(file("diagnostics.csv")?, results)?;
    }
    Ok(())
}
