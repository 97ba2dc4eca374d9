//! The `qlab` command line.
//!
//! Exit codes: 0 success or all checks pass, 1 usage error, 2 failed
//! assertions, 3 runtime error. Every file-producing command writes into a
//! run directory named after its run id and records a `run.json`.

mod bias;
mod dynamics;
mod escort;
mod record;
mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub use record::{Collision, RunDir, RunRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QLAB_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "qlab-out";

#[derive(Debug, Parser)]
#[command(
    name = "qlab",
    version,
    about = "Numerical laboratory for q-logarithm losses, their gradient estimators and dynamics",
    after_help = "Exit codes: 0 success or all checks passed, 1 usage error, 2 failed checks, 3 runtime error.\nOutputs go to <out>/<command>-<run id>; --out defaults to $QLAB_OUT_DIR, then ./qlab-out."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print escort minimizers of the categorical objective with an oracle-gap column.
    Escort(escort::EscortArgs),
    /// Integrate escape, noise-fitting or near-optimality dynamics over grids.
    Dynamics(dynamics::DynamicsArgs),
    /// Measure estimator bias and variance, with pass/fail checks.
    Bias(bias::BiasArgs),
    /// Train on a toy task from a config file.
    Train(train::TrainArgs),
    /// Sweep q and seeds on one toy task.
    Qsweep(train::QsweepArgs),
    /// Run the full acceptance suite.
    Selftest(SelftestArgs),
}

/// Where a command writes its run directory.
#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Parent directory for run directories [default: $QLAB_OUT_DIR or ./qlab-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// What to do when the run directory already exists.
    #[arg(long, value_enum, default_value_t = Collision::Suffix)]
    pub on_collision: Collision,
}

impl OutArgs {
    pub fn parent(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Master seed of the suite.
    #[arg(long, default_value_t = crate::acceptance::DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    /// Named checks that failed.
    Assertions(Vec<String>),
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Assertions(_) => EXIT_ASSERTION,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<Error> for Failure {
    /// Errors caused by malformed arguments or inputs are usage errors.
    fn from(e: Error) -> Self {
        match e {
            Error::QOutOfRange(_)
            | Error::ProbabilityDomain(_)
            | Error::Simplex(_)
            | Error::InsufficientGrid(_)
            | Error::Config(_)
            | Error::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }
    }
}

pub type CmdResult = std::result::Result<(), Failure>;

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Assertions(names) => {
                    eprintln!("{} check(s) failed:", names.len());
                    for n in names {
                        eprintln!("  {n}");
                    }
                }
                Failure::Runtime(e) => eprintln!("error: {e}"),
            }
            f.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Escort(a) => escort::run(&a),
        Command::Dynamics(a) => dynamics::run(&a),
        Command::Bias(a) => bias::run(&a),
        Command::Train(a) => train::run_train(&a),
        Command::Qsweep(a) => train::run_qsweep(&a),
        Command::Selftest(a) => selftest(&a),
    }
}

fn selftest(a: &SelftestArgs) -> CmdResult {
    let snapshot = format!("selftest seed={}", a.seed);
    let mut dir = RunDir::create("selftest", &snapshot, &a.out)?;
    let results = crate::acceptance::run_suite(a.seed, dir.path(), |r| println!("{}", r.line()))?;
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("criterion {}: {}", r.id, r.detail))
        .collect();
    println!(
        "selftest: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    dir.add_all_csv()?;
    dir.finish(if failed.is_empty() { "pass" } else { "fail" })?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertions(failed))
    }
}

/// Comma-separated floats.
pub(crate) fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

/// `start:end:step`, inclusive of `end` up to rounding.
pub(crate) fn parse_range(s: &str) -> std::result::Result<Vec<f64>, String> {
    let parts = parse_list(&s.replace(':', ","))?;
    let [a, b, h] = parts[..] else {
        return Err(format!("expected start:end:step, got `{s}`"));
    };
    if !(h > 0.0) || b < a {
        return Err(format!("range `{s}` needs step > 0 and end >= start"));
    }
    let n = ((b - a) / h + 1e-9).floor() as usize;
    // round to 12 decimals so 0.1:1:0.1 yields 0.3 rather than 0.30000000000000004
    Ok((0..=n)
        .map(|i| ((a + i as f64 * h) * 1e12).round() / 1e12)
        .collect())
}

/// A comma-separated list of floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Floats(pub Vec<f64>);

impl std::str::FromStr for Floats {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_list(s).map(Floats)
    }
}

/// A `start:end:step` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_range(s).map(Grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Plugin,
    Rloo,
    Paft,
    /// Plug-in, RLOO and PAFT on shared pools.
    Compare,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_is_inclusive() {
        let g = parse_range("0.1:1:0.1").unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(parse_range("1:0:0.1").is_err());
        assert!(parse_range("0:1").is_err());
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("0.8, 0.2").unwrap(), vec![0.8, 0.2]);
        assert!(parse_list("0.8,x").is_err());
    }

    #[test]
    fn input_errors_are_usage() {
        assert_eq!(
            Failure::from(Error::QOutOfRange(2.0)).exit_code(),
            EXIT_USAGE
        );
        assert_eq!(
            Failure::from(Error::Numerical("x".into())).exit_code(),
            EXIT_RUNTIME
        );
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
