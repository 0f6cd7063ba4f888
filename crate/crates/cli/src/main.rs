use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tgfso::config::ExperimentSpec;
use tgfso::sim::network::Policy;

mod commands;
mod output;

/// Traffic grooming and lightpath provisioning experiments.
#[derive(Parser, Debug)]
#[command(name = "tgfso", version)]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Output directory; defaults to `out` in the config, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Restrict to these policies (repeatable).
    #[arg(long = "policy", global = true, value_parser = parse_policy)]
    policies: Vec<Policy>,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Network)]
    mode: Mode,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Network,
    Queueing,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Provision rack-to-rack lightpaths for the configured demand.
    Provision {
        /// Also write the exact model of the `[milp]` block as milp.lp.
        #[arg(long)]
        lp: bool,
    },
    /// Run the sweep in network or queueing mode.
    Simulate,
    /// Analytic delays, hop counts and blocking, next to simulated values
    /// when a queueing run already sits in the output directory.
    Analyze,
    /// Build the exact model of the `[milp]` block.
    Milp {
        /// Solve by enumeration and compare with the heuristic.
        #[arg(long)]
        brute: bool,
        /// Check a JSON map of variable name to value against the model.
        #[arg(long, value_name = "FILE")]
        check: Option<PathBuf>,
    },
    /// Run every policy on the same workload per load.
    Compare,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

/// Exit status of a finished command.
#[derive(Debug, Default)]
pub struct Status {
    pub provision_failed: bool,
    pub unstable: usize,
}

pub struct Ctx {
    pub spec: ExperimentSpec,
    pub out: PathBuf,
    pub config: PathBuf,
    pub config_sha: String,
    pub mode: Mode,
}

fn run(cli: Cli) -> Result<Status> {
    let text = std::fs::read(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
    let config_sha = output::sha256_hex(&text);
    let text = String::from_utf8(text).context("config is not UTF-8")?;
    let mut spec = ExperimentSpec::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if !cli.policies.is_empty() {
        spec.policies = cli.policies.clone();
    }
    let out = cli
        .out
        .clone()
        .or_else(|| spec.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .context("starting worker pool")?;
    let ctx = Ctx {
        spec,
        out,
        config: cli.config.clone(),
        config_sha,
        mode: cli.mode,
    };
    match cli.command {
        Command::Provision { lp } => commands::provision(&ctx, lp),
        Command::Simulate => match ctx.mode {
            Mode::Network => commands::simulate_network(&ctx),
            Mode::Queueing => commands::simulate_queueing(&ctx),
        },
        Command::Analyze => commands::analyze(&ctx),
        Command::Milp { brute, check } => commands::milp(&ctx, brute, check.as_deref()),
        Command::Compare => commands::compare(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(s) if s.provision_failed => ExitCode::from(2),
        Ok(s) if s.unstable > 0 => {
            log::warn!("{} sweep point(s) unstable", s.unstable);
            ExitCode::from(3)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
