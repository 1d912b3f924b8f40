//! Optional TOML config. Command-line flags take precedence over it.
//!
//! ```toml
//! seed = 7
//! threads = 2
//! out_dir = "runs"
//!
//! [levels]
//! epsilon = 0.2
//! delta = 0.01
//! rho = 0.0
//!
//! [sequential]
//! k_t = 10
//! alpha = 0.1
//! a = "inf"
//!
//! [solver]
//! restarts = 5
//! tol_alt = 1e-5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use randmi::solver::SolverOptions;

use crate::error::{CliError, Code};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsConfig {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialSection {
    pub k_t: Option<u64>,
    pub alpha: Option<f64>,
    /// A number or "inf".
    pub a: Option<String>,
    pub repeats: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub levels: LevelsConfig,
    pub sequential: SequentialSection,
    pub solver: SolverOptions,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::new(Code::Usage, format!("{}: {e}", path.display())))
    }
}
