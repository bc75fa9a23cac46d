use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_list, ExperimentConfig, OutputFormat, RegimeArg};

#[derive(Debug, Parser)]
#[command(name = "kolmo", version, about = "Experiments on the step-n Kolmogorov diffusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump exact sample paths, one CSV per seed.
    Simulate(SimulateArgs),
    /// Small-ball rate curve with lower and upper reference values.
    Smallball(SmallballArgs),
    /// Joint versus product probability of a component-max rectangle.
    Gci(GciArgs),
    /// Chung-LIL statistics at time zero or infinity.
    Lil(LilArgs),
    /// Compare the propagated covariance with the closed form.
    CovCheck(CommonArgs),
}

/// Comma-separated numbers, e.g. `0.7,0.6,0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_list(s).map(FloatList)
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Step of the diffusion (number of components).
    #[arg(long, allow_hyphen_values = true)]
    pub n: Option<i64>,
    /// Time horizon.
    #[arg(long = "T", allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Number of uniform grid points on (0, T].
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<i64>,
    /// Number of Monte Carlo paths.
    #[arg(long, allow_hyphen_values = true)]
    pub samples: Option<i64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<OutputFormat>,
    /// Flat `key = value` file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of paths to dump.
    #[arg(long, allow_hyphen_values = true)]
    pub seeds: Option<i64>,
}

#[derive(Debug, Args)]
pub struct SmallballArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Radii, strictly decreasing.
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<FloatList>,
    /// Splitting weights x_1..x_n.
    #[arg(long, allow_hyphen_values = true)]
    pub weights: Option<FloatList>,
}

#[derive(Debug, Args)]
pub struct GciArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Rectangle half-widths τ_1..τ_n on the component maxima.
    #[arg(long, allow_hyphen_values = true)]
    pub thresholds: Option<FloatList>,
}

#[derive(Debug, Args)]
pub struct LilArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub regime: Option<RegimeArg>,
    /// Times at which the running maxima are read.
    #[arg(long, allow_hyphen_values = true)]
    pub windows: Option<FloatList>,
}

impl CommonArgs {
    fn to_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            n: self.n,
            horizon: self.horizon,
            grid: self.grid,
            samples: self.samples,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
            ..Default::default()
        }
    }
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a) => &a.common,
            Command::Smallball(a) => &a.common,
            Command::Gci(a) => &a.common,
            Command::Lil(a) => &a.common,
            Command::CovCheck(a) => a,
        }
    }

    /// The flag values as a configuration overlay.
    pub fn flag_config(&self) -> ExperimentConfig {
        let mut cfg = self.common().to_config();
        match self {
            Command::Simulate(a) => cfg.seeds = a.seeds,
            Command::Smallball(a) => {
                cfg.eps = a.eps.clone().map(|l| l.0);
                cfg.weights = a.weights.clone().map(|l| l.0);
            }
            Command::Gci(a) => cfg.thresholds = a.thresholds.clone().map(|l| l.0),
            Command::Lil(a) => {
                cfg.regime = a.regime;
                cfg.windows = a.windows.clone().map(|l| l.0);
            }
            Command::CovCheck(_) => {}
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_map_to_config() {
        let cli = Cli::try_parse_from(["kolmo", "smallball", "--n", "2", "--T", "1.5", "--eps", "0.7,0.6"]).unwrap();
        let cfg = cli.command.flag_config();
        assert_eq!(cfg.n, Some(2));
        assert_eq!(cfg.horizon, Some(1.5));
        assert_eq!(cfg.eps, Some(vec![0.7, 0.6]));
        let cli = Cli::try_parse_from(["kolmo", "simulate", "--n", "-1"]).unwrap();
        assert_eq!(cli.command.flag_config().n, Some(-1));
        assert!(Cli::try_parse_from(["kolmo", "lil", "--regime", "sideways"]).is_err());
    }
}
