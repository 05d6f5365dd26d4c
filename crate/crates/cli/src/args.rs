use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vecalc_core::{GridSpacing, VeMeasureKind};

#[derive(Debug, Parser)]
#[command(name = "vecalc", version, about = "Vaccine effectiveness under competing variants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// VE at one time point.
    Ve {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_parser = parse_kind)]
        measure: VeMeasureKind,
        #[command(flatten)]
        comparison: ComparisonArgs,
        /// Defaults to the scenario horizon.
        #[arg(long)]
        t: Option<f64>,
    },
    /// VE over a time grid.
    Curve {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_parser = parse_kind)]
        measure: VeMeasureKind,
        #[command(flatten)]
        comparison: ComparisonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Spread below which the curve is reported time-invariant.
        #[arg(long, default_value_t = vecalc_core::scenario::DEFAULT_INVARIANCE_THRESHOLD)]
        threshold: f64,
    },
    /// Small-Λt and large-Λt limits.
    Limits {
        #[command(flatten)]
        io: IoArgs,
        /// All kinds when omitted.
        #[arg(long, value_parser = parse_kind)]
        measure: Option<VeMeasureKind>,
        #[command(flatten)]
        comparison: ComparisonArgs,
    },
    /// Expected test-negative design counts and VE.
    Tnd {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        vaccine: Option<String>,
    },
    /// Minimum detectable VE of the scenario's design.
    Mdve {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        comparison: ComparisonArgs,
    },
    /// Simulated precision of the scenario's design.
    Precision {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        comparison: ComparisonArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "n-sim", default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        n_sim: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// Scenario document; repeat to evaluate several.
    #[arg(long = "scenario", required = true)]
    pub scenarios: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to a file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComparisonArgs {
    #[arg(long)]
    pub variant: String,
    #[arg(long)]
    pub vaccine: String,
    /// Compare against this arm instead of placebo.
    #[arg(long, conflicts_with = "other_variant")]
    pub reference: Option<String>,
    /// Compare against this variant within the same vaccine.
    #[arg(long = "other-variant")]
    pub other_variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, requires_all = ["stop", "points"], conflicts_with = "times")]
    pub start: Option<f64>,
    #[arg(long, requires = "start")]
    pub stop: Option<f64>,
    #[arg(long, requires = "start")]
    pub points: Option<usize>,
    #[arg(long, value_enum, default_value_t = SpacingArg::Linear)]
    pub spacing: SpacingArg,
    /// Explicit comma-separated times.
    #[arg(long, value_delimiter = ',', required_unless_present = "start")]
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpacingArg {
    Linear,
    Log,
}

impl From<SpacingArg> for GridSpacing {
    fn from(s: SpacingArg) -> Self {
        match s {
            SpacingArg::Linear => GridSpacing::Linear,
            SpacingArg::Log => GridSpacing::Log,
        }
    }
}

fn parse_kind(s: &str) -> Result<VeMeasureKind, String> {
    s.parse::<VeMeasureKind>().map_err(|e| e.to_string())
}
