//! Experiment orchestration: configs, the simulation loop, metrics and
//! CSV outputs.

mod config;
mod log;
mod metrics;
mod output;
mod sim;

pub use config::{
    difficulty_str, scenario_str, AgentType, AgentTypeFlags, EnvSize, ScenarioConfig,
};
pub use log::{SessionLog, SessionRow};
pub use metrics::{avg_reward, overall_performance, AgentEpisode, EpisodeMetrics, RunSummary};
pub use output::{
    run_configs, run_matrix, write_counters, write_diagnostics, write_episodes,
    write_learning_curve, write_metrics, write_outputs, write_sessions, MatrixSpec,
};
pub use sim::{run, DiagnosticRow, Policy, RunResult, Simulation};
