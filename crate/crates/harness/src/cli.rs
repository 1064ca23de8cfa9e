use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::SweepMode;

#[derive(Debug, Parser)]
#[command(name = "batsim", version, about = "Counterfactual batting-strategy simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (JSON). Missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a transition table JSON from an event-log CSV.
    BuildTransitions {
        events: PathBuf,
        /// Skip malformed rows instead of failing.
        #[arg(long)]
        lenient: bool,
        /// Overrides the config min_count.
        #[arg(long)]
        min_count: Option<u64>,
    },
    /// Write a synthetic event-log CSV.
    SynthEvents {
        #[arg(long, default_value_t = batsim_core::synth::DEFAULT_EVENT_COUNT)]
        n: usize,
    },
    /// Fit the configured lineup's slash targets and write vectors with residuals.
    FitLineup,
    /// Run expectancy of the lineup-average batter under the configured table.
    ComputeRe,
    /// Train the strategy converter and write its parameters.
    TrainConverter {
        /// Metrics JSON destination.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Convert one batter's vector.
    Convert {
        /// Lineup slot (1-9) to convert.
        #[arg(long, default_value_t = 1, conflicts_with = "vector")]
        slot: usize,
        /// Ability-vector JSON to convert instead of a lineup slot.
        #[arg(long)]
        vector: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        d_alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        d_woba: Option<f64>,
    },
    /// Monte Carlo simulation of the configured lineup and policy.
    Simulate {
        /// Run histogram CSV destination.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Parameter sweep against the normal-only baseline.
    Sweep {
        #[arg(long, value_enum)]
        mode: Option<SweepModeArg>,
    },
    /// Compare the baseline run distribution with a reference histogram.
    Validate {
        /// Reference `runs,count` CSV.
        #[arg(long)]
        reference: PathBuf,
        /// Paired histogram CSV destination.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SweepModeArg {
    StrategyGrid,
    ThresholdGrid,
}

impl From<SweepModeArg> for SweepMode {
    fn from(m: SweepModeArg) -> Self {
        match m {
            SweepModeArg::StrategyGrid => SweepMode::StrategyGrid,
            SweepModeArg::ThresholdGrid => SweepMode::ThresholdGrid,
        }
    }
}
