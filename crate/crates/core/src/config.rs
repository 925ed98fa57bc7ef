//! Declarative run configuration.
//!
//! A run is described by one TOML document. Every section is optional and
//! falls back to the paper's parameter values; unknown keys are rejected.
//! The annotated reference lives in `configs/reference.toml`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::pair::{Architecture, CalibrationConfig, Template, WeightRanges};
use crate::experiments::poisson::RateProfile;
use crate::experiments::run::RunSettings;
use crate::experiments::suite::Placement;
use crate::gradcheck::GradcheckConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub pairs: usize,
    pub placement: Placement,
    /// Rerun the pairs that diverged with every input rate multiplied by
    /// this factor.
    pub rescue_rate_scale: Option<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            pairs: 200,
            placement: Placement::Independent,
            rescue_rate_scale: None,
        }
    }
}

/// Sizes used by `figdata`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    /// Random vector pairs for the error-gradient decay scatter.
    pub decay_pairs: usize,
    /// Pairs in the single-neuron improvement scatters.
    pub scatter_pairs: usize,
    pub scatter_updates: u64,
    /// Pairs in the run-to-convergence panels.
    pub convergence_pairs: usize,
    pub convergence_updates: u64,
    /// Pairs in the two-layer panels.
    pub network_pairs: usize,
    pub network_updates: u64,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            decay_pairs: 10_000,
            scatter_pairs: 200,
            scatter_updates: 10_000,
            convergence_pairs: 20,
            convergence_updates: 100_000,
            network_pairs: 20,
            network_updates: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub template: Template,
    /// Explicit weight ranges; calibrated when absent.
    pub weight_ranges: Option<WeightRanges>,
    pub calibration: CalibrationConfig,
    pub drive: RateProfile,
    pub run: RunSettings,
    pub suite: SuiteConfig,
    pub gradcheck: GradcheckConfig,
    pub figures: FigureConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "out".into(),
            template: Template::new(Architecture::excitatory_neuron(10)),
            weight_ranges: None,
            calibration: CalibrationConfig::default(),
            drive: RateProfile::Sinusoidal {
                max_rate_hz: 10.0,
                mod_freq_hz: 2.0,
            },
            run: RunSettings::default(),
            suite: SuiteConfig::default(),
            gradcheck: GradcheckConfig::default(),
            figures: FigureConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            Error::config(key, inner.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<echo>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.template.validate()?;
        if let Some(r) = &self.weight_ranges {
            r.validate(&self.template)?;
        }
        self.drive
            .validate()
            .map_err(|e| Error::config("drive", e.to_string()))?;
        self.run
            .sim
            .validate()
            .map_err(|e| Error::config("run.sim", e.to_string()))?;
        self.run
            .learn
            .validate()
            .map_err(|e| Error::config("run.learn", e.to_string()))?;
        self.run.validate()?;
        if let Some(s) = self.suite.rescue_rate_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config(
                    "suite.rescue_rate_scale",
                    "must be finite and non-negative",
                ));
            }
        }
        if let Placement::Stratified { bins, max_mape } = self.suite.placement {
            if bins == 0 || !(max_mape > 0.0) {
                return Err(Error::config(
                    "suite.placement",
                    "bins and max_mape must be positive",
                ));
            }
        }
        let [lo, hi] = self.calibration.target_hz;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::config(
                "calibration.target_hz",
                "expected 0 < low < high",
            ));
        }
        Ok(())
    }
}
