//! Run configuration files. Every field has a default, so `{}` is a valid
//! config; command-line flags override file values.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tpe_core::model::{Constellation, SystemDims};
use tpe_core::sim::{CoeffSource, DetectorSpec, SweepConfig};
use tpe_core::train::TrainingConfig;

use crate::error::{CliError, Result};
use crate::io;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn check_schema(v: u32, what: &str) -> Result<()> {
    if v == CONFIG_SCHEMA_VERSION {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{what}: unsupported schema_version {v} (expected {CONFIG_SCHEMA_VERSION})"
        )))
    }
}

/// Config for `train`, `fit-oracle` and `gen-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub training: TrainingConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            training: TrainingConfig::default(),
        }
    }
}

impl TrainFile {
    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = io::read_json(path)?;
        check_schema(f.schema_version, &path.display().to_string())?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<SystemDims> {
        check_schema(self.schema_version, "train config")?;
        Ok(self.training.validate()?)
    }
}

/// One detector row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorEntry {
    Zf,
    Mmse,
    TpeAlphaOpt {
        order_j: usize,
    },
    TpeAlphaConstant {
        order_j: usize,
    },
    TpeAlphaPower {
        order_j: usize,
        #[serde(default = "default_power_iterations")]
        iterations: usize,
    },
    TpeLearned {
        order_j: usize,
        checkpoint: PathBuf,
    },
}

fn default_power_iterations() -> usize {
    20
}

impl DetectorEntry {
    pub fn describe(&self) -> String {
        match self {
            Self::Zf => "zf".into(),
            Self::Mmse => "mmse".into(),
            Self::TpeAlphaOpt { order_j } => format!("tpe_alpha_opt J={order_j}"),
            Self::TpeAlphaConstant { order_j } => format!("tpe_alpha_constant J={order_j}"),
            Self::TpeAlphaPower { order_j, iterations } => {
                format!("tpe_alpha_power J={order_j} iterations={iterations}")
            }
            Self::TpeLearned { order_j, checkpoint } => {
                format!("tpe_learned J={order_j} checkpoint={}", checkpoint.display())
            }
        }
    }

    /// Builds the core detector, loading learned coefficients relative to `base`.
    pub fn resolve(&self, dims: SystemDims, base: &Path) -> Result<DetectorSpec> {
        let tpe = |order_j: usize, source| DetectorSpec::Tpe { order_j, source };
        Ok(match self {
            Self::Zf => DetectorSpec::Zf,
            Self::Mmse => DetectorSpec::Mmse,
            Self::TpeAlphaOpt { order_j } => tpe(*order_j, CoeffSource::AlphaOpt),
            Self::TpeAlphaConstant { order_j } => tpe(*order_j, CoeffSource::AlphaConstant),
            Self::TpeAlphaPower { order_j, iterations } => tpe(
                *order_j,
                CoeffSource::AlphaPower {
                    iterations: *iterations,
                },
            ),
            Self::TpeLearned { order_j, checkpoint } => {
                let path = base.join(checkpoint);
                let coeffs = io::load_coeffs(&path, dims, *order_j).map_err(|e| match e {
                    CliError::Io { path, source } => CliError::Validation(format!(
                        "detector `{}`: cannot read checkpoint {}: {source}",
                        self.describe(),
                        path.display()
                    )),
                    other => other.context(&format!("detector `{}`", self.describe())),
                })?;
                tpe(*order_j, CoeffSource::Learned(coeffs))
            }
        })
    }
}

/// Config for `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFile {
    pub schema_version: u32,
    /// Name recorded in the summary file.
    pub scenario: String,
    pub n: usize,
    pub k: usize,
    pub qam_order: u32,
    pub symbol_energy: f64,
    pub snr_grid_db: Vec<f64>,
    pub detectors: Vec<DetectorEntry>,
    pub min_bits: u64,
    pub min_errors: u64,
    pub max_bits: u64,
    pub block_trials: u64,
    pub master_seed: u64,
}

impl Default for SweepFile {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            scenario: "sweep".into(),
            n: 128,
            k: 16,
            qam_order: 16,
            symbol_energy: 1.0,
            snr_grid_db: (0..=8).map(|i| 2.0 * i as f64).collect(),
            detectors: vec![DetectorEntry::Zf, DetectorEntry::Mmse],
            min_bits: 1_000_000,
            min_errors: 100,
            max_bits: 100_000_000,
            block_trials: 256,
            master_seed: 1,
        }
    }
}

impl SweepFile {
    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = io::read_json(path)?;
        check_schema(f.schema_version, &path.display().to_string())?;
        Ok(f)
    }

    /// Validates everything and loads referenced checkpoints. Relative
    /// checkpoint paths are taken relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<SweepConfig> {
        check_schema(self.schema_version, "sweep config")?;
        let dims = SystemDims::new(self.n, self.k)?;
        let constellation = Constellation::new(self.qam_order, self.symbol_energy)?;
        let mut seen = BTreeSet::new();
        let mut detectors = Vec::with_capacity(self.detectors.len());
        for entry in &self.detectors {
            let spec = entry.resolve(dims, base)?;
            if !seen.insert((spec.label(), spec.order())) {
                return Err(CliError::Validation(format!(
                    "detector `{}` appears twice; rows are keyed by detector and J",
                    entry.describe()
                )));
            }
            detectors.push(spec);
        }
        let config = SweepConfig {
            dims,
            constellation,
            snr_grid_db: self.snr_grid_db.clone(),
            detectors,
            min_bits: self.min_bits,
            min_errors: self.min_errors,
            max_bits: self.max_bits,
            block_trials: self.block_trials,
            master_seed: self.master_seed,
        };
        config.validate()?;
        Ok(config)
    }
}
