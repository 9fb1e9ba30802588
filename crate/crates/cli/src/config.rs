//! Experiment configuration: one TOML file with a section per stage.
//!
//! Every table rejects unknown keys, so a typo fails loudly instead of
//! silently falling back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lrt_core::law::ParameterLaw;
use lrt_core::micro::{SystemSpec, DEFAULT_BINS, DEFAULT_BURN_IN};
use lrt_core::reduction::logistic::{DEFAULT_MC_RUNS, DEFAULT_MC_STEPS};
use lrt_core::reduction::spectral::{DEFAULT_MAX_LAG, DEFAULT_SPECTRAL_GRID};
use lrt_core::reduction::{AlphaGrid, TableConfig};
use lrt_core::response::{
    default_epsilons, CalibrationConfig, LagCutoff, ResponseModel, SigmaSource,
};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` overrides it.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub law: ParameterLaw,
    #[serde(default)]
    pub table: TableSection,
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub moments: MomentsSection,
    #[serde(default)]
    pub response: ResponseSection,
    #[serde(default)]
    pub calibrate: CalibrationConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableSection {
    pub grid: AlphaGrid,
    pub lags: usize,
    pub mc_runs: usize,
    pub mc_steps: usize,
    /// Seed of the table's Monte Carlo; the master seed when absent.
    pub seed: Option<u64>,
    /// Where built tables are kept between runs.
    pub cache_dir: PathBuf,
}

impl Default for TableSection {
    fn default() -> Self {
        Self {
            grid: AlphaGrid::default(),
            lags: DEFAULT_MAX_LAG,
            mc_runs: DEFAULT_MC_RUNS,
            mc_steps: DEFAULT_MC_STEPS,
            seed: None,
            cache_dir: PathBuf::from("table-cache"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySection {
    pub model: ResponseModel,
    #[serde(rename = "N")]
    pub n: usize,
    pub burn_in: usize,
    pub bins: usize,
}

impl Default for DensitySection {
    fn default() -> Self {
        Self {
            model: ResponseModel::Full,
            n: 1_000_000,
            burn_in: DEFAULT_BURN_IN,
            bins: DEFAULT_BINS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsSection {
    pub sizes: Vec<usize>,
    pub realizations: usize,
    /// Realizations of the stochastic limit; `realizations` when absent.
    pub limit_realizations: Option<usize>,
    pub step: usize,
    pub unit_burn_in: usize,
    pub q0: f64,
}

impl Default for MomentsSection {
    fn default() -> Self {
        Self {
            sizes: vec![4, 16, 64, 256, 1024],
            realizations: 10_000,
            limit_realizations: None,
            step: 6,
            unit_burn_in: DEFAULT_BURN_IN,
            q0: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponseSection {
    pub model: ResponseModel,
    /// Ensemble sizes tested in turn; `system.M` is replaced by each.
    pub sizes: Vec<usize>,
    #[serde(rename = "N")]
    pub n: usize,
    pub burn_in: usize,
    pub realizations: usize,
    pub epsilons: Vec<f64>,
    pub sigma: SigmaSource,
    pub cutoff: LagCutoff,
    /// Response order; `--order` overrides it.
    pub ell: usize,
    pub max_lag: usize,
    pub spectral_grid: usize,
}

impl Default for ResponseSection {
    fn default() -> Self {
        Self {
            model: ResponseModel::Full,
            sizes: vec![16, 1024],
            n: 200_000,
            burn_in: DEFAULT_BURN_IN,
            realizations: 50,
            epsilons: default_epsilons(),
            sigma: SigmaSource::default(),
            cutoff: LagCutoff::Auto,
            ell: 1,
            max_lag: DEFAULT_MAX_LAG,
            spectral_grid: DEFAULT_SPECTRAL_GRID,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn system(&self) -> Result<SystemSpec, CliError> {
        let spec = self
            .system
            .ok_or_else(|| CliError::Config("missing [system] section".into()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn table_config(&self) -> Result<TableConfig, CliError> {
        let t = &self.table;
        t.grid.validate()?;
        if t.mc_runs == 0 || t.mc_steps == 0 {
            return Err(CliError::Config(
                "table mc_runs and mc_steps must be positive".into(),
            ));
        }
        Ok(TableConfig {
            grid: t.grid,
            observable: self.system()?.observable,
            lags: t.lags,
            mc_runs: t.mc_runs,
            mc_steps: t.mc_steps,
        })
    }

    pub fn table_seed(&self) -> u64 {
        self.table.seed.unwrap_or(self.seed)
    }
}
