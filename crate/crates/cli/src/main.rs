//! `urbscale`: scaling indicators, correlations, planning planes and
//! scenarios for a directory of city block files.
//!
//! Exit codes: 0 success, 1 missing input or environment problem, 2 bad
//! data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::TypedValueParser as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use urbscale_core::cohort::Dependent;
use urbscale_core::plane::VariogramKind;
use urbscale_core::stats::Transform;

#[derive(Debug, Parser)]
#[command(name = "urbscale", version, about = "Urban scaling indicator toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-city scaling indicator table, excluded cities included.
    Indicator(Common),
    /// Fractal spectrum SVG for one city.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long = "city")]
        city_id: String,
    },
    /// Correlations between the indicator and the energy observables.
    Correlate(Common),
    /// Kriged planning plane for one dependent variable.
    Plane {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "gas-per-area")]
        dependent: DependentArg,
    },
    /// Evaluate a development scenario for one city against a plane.
    Scenario {
        #[command(flatten)]
        common: Common,
        #[arg(long = "city")]
        city_id: String,
        #[arg(long)]
        delta_file: PathBuf,
        #[arg(long, value_enum, default_value = "gas-per-area")]
        dependent: DependentArg,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory with the built explorer bundle, served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub blocks_dir: PathBuf,
    #[arg(long)]
    pub observables: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = urbscale_core::DEFAULT_CLASSES, value_parser = clap::value_parser!(u16).range(3..).map(usize::from))]
    pub classes: usize,
    #[arg(long, default_value_t = urbscale_core::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value = "exponential")]
    pub variogram: VariogramArg,
    #[arg(long, default_value_t = urbscale_core::plane::DEFAULT_GRID, value_parser = clap::value_parser!(u16).range(2..).map(usize::from))]
    pub grid: usize,
    #[arg(long, value_enum, default_value = "linear")]
    pub transform: TransformArg,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write the main result to standard output.
    #[arg(long)]
    pub stdout: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariogramArg {
    Exponential,
    Spherical,
    Gaussian,
}

impl From<VariogramArg> for VariogramKind {
    fn from(v: VariogramArg) -> Self {
        match v {
            VariogramArg::Exponential => VariogramKind::Exponential,
            VariogramArg::Spherical => VariogramKind::Spherical,
            VariogramArg::Gaussian => VariogramKind::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    Linear,
    #[value(alias = "log_x")]
    LogX,
    #[value(alias = "log_y")]
    LogY,
    #[value(alias = "log_log")]
    LogLog,
    All,
}

impl TransformArg {
    pub fn transforms(self) -> Vec<Transform> {
        match self {
            TransformArg::Linear => vec![Transform::Linear],
            TransformArg::LogX => vec![Transform::LogX],
            TransformArg::LogY => vec![Transform::LogY],
            TransformArg::LogLog => vec![Transform::LogLog],
            TransformArg::All => Transform::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DependentArg {
    #[value(alias = "gas_per_area")]
    GasPerArea,
    #[value(alias = "co2_per_capita")]
    Co2PerCapita,
}

impl From<DependentArg> for Dependent {
    fn from(d: DependentArg) -> Self {
        match d {
            DependentArg::GasPerArea => Dependent::GasPerArea,
            DependentArg::Co2PerCapita => Dependent::Co2PerCapita,
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("URBSCALE_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn main() -> ExitCode {
    init_logging();
    // Usage errors are missing-input errors (1), not clap's default 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("urbscale: {}", e.message);
            ExitCode::from(e.exit_code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("urbscale").chain(args.iter().copied()))
    }

    #[test]
    fn defaults() {
        let cli = parse(&["indicator", "--blocks-dir", "b", "--observables", "o.csv", "--out", "x"]).unwrap();
        let Command::Indicator(c) = cli.command else { panic!() };
        assert_eq!((c.classes, c.grid, c.tolerance), (10, 100, 0.01));
        assert_eq!(c.transform, TransformArg::Linear);
        assert!(c.jobs.is_none() && !c.stdout);
    }

    #[test]
    fn dependent_accepts_both_spellings() {
        for d in ["gas_per_area", "gas-per-area"] {
            let cli = parse(&["plane", "--blocks-dir", "b", "--observables", "o", "--dependent", d]).unwrap();
            assert!(matches!(cli.command, Command::Plane { dependent: DependentArg::GasPerArea, .. }));
        }
    }

    #[test]
    fn rejects_too_few_classes() {
        assert!(parse(&["indicator", "--blocks-dir", "b", "--observables", "o", "--classes", "2"]).is_err());
    }

    #[test]
    fn all_transforms() {
        assert_eq!(TransformArg::All.transforms().len(), 4);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
