//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gplinear::inference::Method;
use gplinear::{Kind, Scale, TestConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "gplinear", version, about = "Bayes factor tests for linear versus nonlinear effects")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, env = "GPLINEAR_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bayes factor of the linear against the nonlinear model.
    Test(TestArgs),
    /// One-sided tests for a consistently positive or negative effect.
    Onesided(OneSidedArgs),
    /// Simulation study over effect size, sample size and prior scale.
    Simulate(SimulateArgs),
    /// Posterior mean-function and slope draws as long-format CSV.
    Draws(DrawsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Headered CSV file.
    pub data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub y: String,
    /// Predictor column.
    #[arg(long)]
    pub x: String,
    /// Covariate columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub z: Vec<String>,
    /// Add an intercept column to the covariates.
    #[arg(long)]
    pub intercept: bool,
    /// Residualize the predictor on the covariates.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Small,
    Medium,
    Large,
    All,
}

impl ScaleArg {
    pub fn scales(self) -> Vec<Scale> {
        match self {
            ScaleArg::Small => vec![Scale::Small],
            ScaleArg::Medium => vec![Scale::Medium],
            ScaleArg::Large => vec![Scale::Large],
            ScaleArg::All => Scale::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    /// Named prior scale for xi.
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
    /// Explicit half-Cauchy scale for xi, instead of --scale.
    #[arg(long, conflicts_with = "scale")]
    pub s_xi: Option<f64>,
    /// g-prior scaling (default: n).
    #[arg(long)]
    pub g: Option<f64>,
    /// Gauss-Legendre nodes for the integral over xi.
    #[arg(long, default_value_t = 201)]
    pub n_quad: usize,
    #[arg(long, env = "GPLINEAR_SEED", default_value_t = TestConfig::DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Quadrature,
    Importance,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Quadrature => Method::Quadrature,
            MethodArg::Importance => Method::Importance,
        }
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Quadrature)]
    pub method: MethodArg,
    /// Prior draws of xi for importance sampling.
    #[arg(long, default_value_t = 10_000)]
    pub n_is: usize,
    /// Write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OneSidedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Number of prior and of posterior function draws.
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    /// Evaluate slopes on this many equally spaced points instead of the observed x.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DrawsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value_t = 50)]
    pub draws: usize,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Long-format CSV output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Bump,
    Step,
    Both,
}

impl KindArg {
    pub fn kinds(self) -> Vec<Kind> {
        match self {
            KindArg::Bump => vec![Kind::Bump],
            KindArg::Step => vec![Kind::Step],
            KindArg::Both => vec![Kind::Bump, Kind::Step],
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Bump)]
    pub kind: KindArg,
    /// Effect sizes: `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "0:0.5:0.1")]
    pub h: String,
    /// Sample sizes, comma separated.
    #[arg(long, default_value = "20,50,200")]
    pub n: String,
    /// `all` or a comma-separated list of small, medium, large.
    #[arg(long, default_value = "all")]
    pub scales: String,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 201)]
    pub n_quad: usize,
    #[arg(long, env = "GPLINEAR_SEED", default_value_t = TestConfig::DEFAULT_SEED)]
    pub seed: u64,
    /// Tidy CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a
/// comma-separated list of values.
pub fn parse_h(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("malformed --h '{spec}': expected start:stop:step or a list"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.len() {
        1 => spec.split(',').map(num).collect::<CliResult<Vec<f64>>>()?,
        3 => {
            let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0 && stop >= start) {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|i| ((start + step * i as f64) * 1e12).round() / 1e12)
                .collect()
        }
        _ => return Err(bad()),
    };
    if values.iter().any(|&h| h < 0.0) {
        return Err(CliError::Usage(format!("--h values must be >= 0, got '{spec}'")));
    }
    Ok(values)
}

pub fn parse_n(spec: &str) -> CliResult<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("malformed --n '{spec}': expected a comma-separated list of integers")))
        })
        .collect()
}

pub fn parse_scales(spec: &str) -> CliResult<Vec<Scale>> {
    if spec.trim() == "all" {
        return Ok(Scale::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| {
            Scale::parse(s.trim())
                .ok_or_else(|| CliError::Usage(format!("unknown scale '{s}': use small, medium, large or all")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_range_is_inclusive() {
        assert_eq!(parse_h("0:0.5:0.1").unwrap(), vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(parse_h("0.25").unwrap(), vec![0.25]);
        assert_eq!(parse_h("0,0.5").unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn malformed_h_is_usage_error() {
        for s in ["0:0.5", "a:b:c", "0:0.5:0", "0.5:0:0.1", "", "1,,2", "-1"] {
            assert!(matches!(parse_h(s), Err(CliError::Usage(_))), "{s}");
        }
    }

    #[test]
    fn scales_and_n() {
        assert_eq!(parse_scales("all").unwrap().len(), 3);
        assert_eq!(parse_scales("small,large").unwrap(), vec![Scale::Small, Scale::Large]);
        assert!(parse_scales("huge").is_err());
        assert_eq!(parse_n("20, 50,200").unwrap(), vec![20, 50, 200]);
        assert!(parse_n("20;50").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
