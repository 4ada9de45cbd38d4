use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use decmarl::encoding::EmbeddingTables;
use decmarl::gridworld::{Difficulty, GoalScenario};
use decmarl::harness::{
    run_configs, write_outputs, AgentType, EnvSize, MatrixSpec, ScenarioConfig,
};
use decmarl::mental_state::NoveltyMode;

#[derive(Parser)]
#[command(
    name = "decmarl",
    version,
    about = "Decentralized multi-agent RL gridworld experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration.
    Run(RunArgs),
    /// Run the environment x scenario x agent-type grid.
    Matrix(MatrixArgs),
    /// Write the embedding tables as CSV.
    DumpTables {
        #[arg(long, value_enum, default_value_t = EnvArg::Base)]
        env: EnvArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Base,
    Large,
}

#[derive(Clone, Copy, ValueEnum)]
enum DifficultyArg {
    Easy,
    Hard,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum TypeArg {
    A1,
    A2,
    A3,
    A4,
    A5,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoveltyArg {
    Time,
    Count,
}

impl From<EnvArg> for EnvSize {
    fn from(v: EnvArg) -> Self {
        match v {
            EnvArg::Base => EnvSize::Base,
            EnvArg::Large => EnvSize::Large,
        }
    }
}

impl From<DifficultyArg> for Difficulty {
    fn from(v: DifficultyArg) -> Self {
        match v {
            DifficultyArg::Easy => Difficulty::Easy,
            DifficultyArg::Hard => Difficulty::Hard,
        }
    }
}

impl From<ScenarioArg> for GoalScenario {
    fn from(v: ScenarioArg) -> Self {
        match v {
            ScenarioArg::One => GoalScenario::SharedGoal,
            ScenarioArg::Two => GoalScenario::SplitGoals,
        }
    }
}

impl From<TypeArg> for AgentType {
    fn from(v: TypeArg) -> Self {
        match v {
            TypeArg::A1 => AgentType::A1,
            TypeArg::A2 => AgentType::A2,
            TypeArg::A3 => AgentType::A3,
            TypeArg::A4 => AgentType::A4,
            TypeArg::A5 => AgentType::A5,
        }
    }
}

impl From<NoveltyArg> for NoveltyMode {
    fn from(v: NoveltyArg) -> Self {
        match v {
            NoveltyArg::Time => NoveltyMode::Time,
            NoveltyArg::Count => NoveltyMode::Count,
        }
    }
}

/// Options shared by `run` and `matrix`. Values given here override the
/// config file, which overrides the defaults.
#[derive(Args)]
struct Common {
    /// TOML file with any subset of the scenario fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    novelty: Option<NoveltyArg>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn base_config(&self) -> anyhow::Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.episodes {
            c.episodes = v;
        }
        if let Some(v) = self.max_steps {
            c.max_steps = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.novelty {
            c.novelty = v.into();
        }
        Ok(c)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    env: Option<EnvArg>,
    #[arg(long, value_enum)]
    difficulty: Option<DifficultyArg>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    #[arg(long, value_enum)]
    agent_type: Option<TypeArg>,
    /// Repeat over this many consecutive seeds starting at the configured seed.
    #[arg(long)]
    seeds: Option<u64>,
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    common: Common,
    /// Environments to include (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    env: Vec<EnvArg>,
    #[arg(long, value_enum, value_delimiter = ',')]
    difficulty: Vec<DifficultyArg>,
    #[arg(long, value_enum, value_delimiter = ',')]
    scenario: Vec<ScenarioArg>,
    #[arg(long, value_enum, value_delimiter = ',')]
    agent_type: Vec<TypeArg>,
    /// Number of consecutive seeds starting at the configured seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
}

fn seed_range(start: u64, count: u64) -> Vec<u64> {
    (0..count.max(1)).map(|k| start + k).collect()
}

fn run_command(args: RunArgs) -> anyhow::Result<()> {
    let mut base = args.common.base_config()?;
    if let Some(v) = args.env {
        base.env_size = v.into();
    }
    if let Some(v) = args.difficulty {
        base.difficulty = v.into();
    }
    if let Some(v) = args.scenario {
        base.scenario = v.into();
    }
    if let Some(v) = args.agent_type {
        base.agent_type = v.into();
    }
    let configs: Vec<ScenarioConfig> = seed_range(base.seed, args.seeds.unwrap_or(1))
        .into_iter()
        .map(|seed| ScenarioConfig {
            seed,
            ..base.clone()
        })
        .collect();
    execute(&configs, &args.common.out)
}

fn matrix_command(args: MatrixArgs) -> anyhow::Result<()> {
    let base = args.common.base_config()?;
    let mut spec = MatrixSpec::full(base.clone(), seed_range(base.seed, args.seeds));
    if !args.env.is_empty() {
        spec.envs = args.env.into_iter().map(Into::into).collect();
    }
    if !args.difficulty.is_empty() {
        spec.difficulties = args.difficulty.into_iter().map(Into::into).collect();
    }
    if !args.scenario.is_empty() {
        spec.scenarios = args.scenario.into_iter().map(Into::into).collect();
    }
    if !args.agent_type.is_empty() {
        spec.agent_types = args.agent_type.into_iter().map(Into::into).collect();
    }
    execute(&spec.configs(), &args.common.out)
}

fn execute(configs: &[ScenarioConfig], out: &std::path::Path) -> anyhow::Result<()> {
    let results = run_configs(configs)?;
    write_outputs(out, &results)
        .with_context(|| format!("writing outputs to {}", out.display()))?;
    for r in &results {
        println!(
            "{}\tR_overall {:.3} +/- {:.3}\tsteps {:.1}\treach {:.2}",
            r.config.label(),
            r.summary.r_overall,
            r.summary.std,
            r.summary.mean_steps_to_goal,
            r.summary.goal_reach_rate
        );
    }
    Ok(())
}

fn dump_tables(env: EnvArg, seed: u64, out: Option<PathBuf>) -> anyhow::Result<()> {
    let layout = EnvSize::from(env).layout();
    let tables = EmbeddingTables::build(seed, layout.width, layout.height)?;
    match out {
        Some(path) => tables.dump_csv(std::fs::File::create(&path)?)?,
        None => tables.dump_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Matrix(args) => matrix_command(args),
        Command::DumpTables { env, seed, out } => dump_tables(env, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .downcast_ref::<decmarl::Error>()
                .is_some_and(decmarl::Error::is_config);
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}
