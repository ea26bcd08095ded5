use std::path::{Path, PathBuf};

use serde::Deserialize;

use nonlocal::hc_ribbon::{DEFAULT_RESTARTS, HC_TOLERANCE};
use nonlocal::nsbox::NS_TOLERANCE;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Settings read from `--config`. Command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    /// Tolerance used when validating box files.
    pub tolerance: Option<f64>,
    /// Violation threshold for hypercontractivity certificates.
    pub hc_tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub grid: Option<usize>,
    pub restarts: Option<usize>,
    pub u_card: Option<usize>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}

/// Effective settings after merging flags over the config file over the
/// library defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub tolerance: f64,
    pub hc_tolerance: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub grid: Option<usize>,
    pub restarts: usize,
    pub u_card: Option<usize>,
}

impl Settings {
    pub fn merge(flags: &crate::Global, file: CliConfig) -> Self {
        Settings {
            tolerance: flags.tolerance.or(file.tolerance).unwrap_or(NS_TOLERANCE),
            hc_tolerance: file.hc_tolerance.unwrap_or(HC_TOLERANCE),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            out: flags.out.clone().or(file.out),
            format: flags.format.or(file.format).unwrap_or_default(),
            grid: flags.grid.or(file.grid),
            restarts: flags.restarts.or(file.restarts).unwrap_or(DEFAULT_RESTARTS),
            u_card: flags.u_card.or(file.u_card),
        }
    }
}
