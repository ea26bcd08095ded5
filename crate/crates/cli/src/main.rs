//! `nonlocal`: box validation, measures, ribbon scans, wirings and fuzz
//! campaigns from the command line.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 validation failure,
//! 3 property violation found.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{CliConfig, Format, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "nonlocal",
    version,
    about = "Monotone measures of non-locality for no-signaling boxes"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Global {
    /// JSON file with default settings; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Tolerance for validating box files.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid resolution (points per axis, or number of eta values).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Random restarts of the hypercontractivity search.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Alphabet size of the auxiliary variable in the channel search.
    #[arg(long, global = true)]
    u_card: Option<usize>,
    /// Output file (for campaigns: file stem of the .csv/.json pair).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ribbon {
    Mc,
    Hc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Campaign {
    Rho,
    Mc,
    HcIneq,
    Lemmas,
    Chain,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a box file is a valid no-signaling box.
    Validate { file: PathBuf },
    /// Maximal correlation, its maximizing input pair and the CHSH value.
    Measures { file: PathBuf },
    /// Scan a ribbon on the grid {0, 1/(k-1), ..., 1}^2.
    Ribbon {
        #[arg(value_enum)]
        which: Ribbon,
        file: PathBuf,
    },
    /// Run a wiring spec: write the derived box and report the information
    /// identity residuals.
    Wire {
        spec: PathBuf,
        /// Where to write the residual report (default: stderr).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Skip the residual computation.
        #[arg(long)]
        no_lemmas: bool,
    },
    /// Run a randomized verification campaign.
    Fuzz {
        #[arg(value_enum)]
        campaign: Campaign,
        /// Boxes per wiring (maximum chain length for `chain`).
        #[arg(long, default_value_t = 2)]
        boxes: usize,
        /// Number of cases (default depends on the campaign).
        #[arg(long)]
        cases: Option<usize>,
        /// Channels per wiring for `hc-ineq`.
        #[arg(long, default_value_t = 100)]
        channels: usize,
    },
    /// Measures of the isotropic boxes on an eta grid plus 1/sqrt(2).
    ScanIsotropic,
    /// Sample boxes with CHSH >= (1 + eta)/2 and check rho >= eta.
    Frontier {
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Write the isotropic box PR_eta as a box file.
    Isotropic {
        #[arg(long)]
        eta: f64,
    },
    /// Check the common-randomness argument on a mixture given as
    /// WEIGHT=FILE terms.
    Pivot {
        #[arg(long)]
        eta2: f64,
        #[arg(required = true)]
        terms: Vec<String>,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Violation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Violation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Violation(m) => m,
        }
    }
}

impl From<nonlocal::Error> for CliError {
    fn from(e: nonlocal::Error) -> Self {
        use nonlocal::Error as E;
        match e {
            E::InvalidBox(_)
            | E::BinaryParams { .. }
            | E::NotBinary(_)
            | E::InvalidStrategy(_)
            | E::InvalidWiring(_)
            | E::TooManyBoxes { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let file = match &cli.global.config {
        Some(path) => match CliConfig::load(path) {
            Ok(c) => c,
            Err(msg) => {
                eprintln!("error: {msg}");
                return ExitCode::from(1);
            }
        },
        None => CliConfig::default(),
    };
    let settings = Settings::merge(&cli.global, file);
    match commands::run(cli.command, &settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
