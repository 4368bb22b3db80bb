//! Flags per subcommand. Each struct doubles as its `--config` file format;
//! flags given on the command line win over the file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mci_core::policy::PpoConfig;
use serde::{Deserialize, Serialize};

use crate::output::{load_config, CliError};

#[derive(Debug, Parser)]
#[command(name = "mci", version, about = "Mass-casualty incident simulator and assignment policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario file.
    GenScenario(GenArgs),
    /// Roll out one policy on one scenario and write its event log.
    Run(RunArgs),
    /// Train a policy with PPO.
    Train(TrainArgs),
    /// Compare policies over many seeded scenarios.
    Eval(EvalArgs),
    /// Rebuild a session from its event log and report outcomes.
    Replay(ReplayArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

/// Copies fields the command line left unset from the config file.
macro_rules! merge_from_config {
    ($ty:ty; $($field:ident),* $(,)?) => {
        impl $ty {
            pub fn merged(mut self) -> Result<Self, CliError> {
                if let Some(path) = self.config.take() {
                    let file: $ty = load_config(&path)?;
                    $(if self.$field.is_none() { self.$field = file.$field; })*
                }
                Ok(self)
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenArgs {
    /// JSON or TOML file with any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// standard, complex or desk. Presets fix every option but the seed.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub hospitals: Option<usize>,
    #[arg(long)]
    pub fleet: Option<u32>,
    #[arg(long)]
    pub horizon: Option<u32>,
    #[arg(long)]
    pub scenario_id: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
merge_from_config!(GenArgs; preset, patients, hospitals, fleet, horizon, scenario_id, seed, out);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Scenario file; alternatively --preset with --seed.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// random, greedy or learned.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub policy_file: Option<PathBuf>,
    /// argmax or sample.
    #[arg(long)]
    pub act: Option<String>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Event log, one JSON event per line.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Outcome report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}
merge_from_config!(RunArgs; scenario, preset, seed, policy, policy_file, act, rng_seed, out, report);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Scenario family to train on: desk, standard or complex.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training curve (CSV).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Full hyperparameter set; config file only.
    #[arg(skip)]
    pub ppo: Option<PpoConfig>,
}
merge_from_config!(TrainArgs; family, steps, width, seed, out, curve, ppo);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Comma-separated: random, greedy, learned.
    #[arg(long)]
    pub policies: Option<String>,
    #[arg(long)]
    pub policy_file: Option<PathBuf>,
    /// standard, complex or desk.
    #[arg(long)]
    pub family: Option<String>,
    /// Number of scenarios.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// First scenario seed; defaults to the held-out range.
    #[arg(long)]
    pub seed_base: Option<u64>,
    #[arg(long)]
    pub act: Option<String>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Summary table (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
merge_from_config!(EvalArgs; policies, policy_file, family, seeds, seed_base, act, rng_seed, out);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Event log to rebuild from.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Outcome report; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    pub format: Option<String>,
}
merge_from_config!(ReplayArgs; scenario, log, out, format);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Listen address, default 127.0.0.1:8080.
    #[arg(long)]
    pub addr: Option<String>,
    /// Ticks per second for sessions that do not choose; 0 is manual.
    #[arg(long)]
    pub pacing: Option<f64>,
    #[arg(long)]
    pub archive_dir: Option<PathBuf>,
    #[arg(long)]
    pub policy_file: Option<PathBuf>,
    /// Seed of the preloaded scenarios.
    #[arg(long)]
    pub preset_seed: Option<u64>,
}
merge_from_config!(ServeArgs; addr, pacing, archive_dir, policy_file, preset_seed);
