//! Run configuration: every pipeline setting in one TOML or JSON document.
//!
//! Every section and key is optional and falls back to its documented
//! default; unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! [energy]
//! penetration = 3000.0
//! [sampler]
//! chains = 64
//! iterations = 2000
//! [refine]
//! attraction_sign = "pull"
//! [dataset]
//! max_objects = 2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyWeights;
use crate::error::{Error, Result};
use crate::metrics::{FilterThresholds, MetricsConfig};
use crate::refine::{ReachParams, RefineParams};
use crate::sampler::{MalaParams, SynthesisConfig};

/// Dataset generation settings, read from the `[dataset]` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    /// Largest number of objects per combination.
    pub max_objects: usize,
    pub scenes_per_combination: usize,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            max_objects: 2,
            scenes_per_combination: 1,
        }
    }
}

/// Input locations, read from the `[paths]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Hand model JSON; the bundled reference hand when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hand: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of every random choice; a command-line seed takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub energy: EnergyWeights,
    pub sampler: MalaParams,
    pub filter: FilterThresholds,
    /// Sampling resolution and friction model of the metrics.
    pub metrics: MetricsConfig,
    pub refine: RefineParams,
    pub reach: ReachParams,
    pub dataset: DatasetParams,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads JSON for a `.json` extension and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        self.sampler.validate()?;
        self.filter.validate()?;
        self.metrics.validate()?;
        self.refine.validate()?;
        self.reach.validate()?;
        if self.dataset.max_objects == 0 {
            return Err(Error::Config("dataset.max_objects must be >= 1".into()));
        }
        Ok(())
    }

    /// The synthesis part of the configuration.
    pub fn synthesis(&self) -> SynthesisConfig {
        SynthesisConfig {
            energy: self.energy.clone(),
            sampler: self.sampler.clone(),
            filter: self.filter.clone(),
            metrics: self.metrics.clone(),
        }
    }
}
