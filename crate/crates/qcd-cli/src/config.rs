//! TOML experiment configurations.
//!
//! Each command takes a single config file; the schemas are documented in
//! the repository README with one full example per experiment family
//! under `configs/`.

use qcd_core::density_estimation::{BandwidthRule, ClipConfig, KernelSpec};
use qcd_core::detectors::{Algorithm, DetectorConfig, EstimatorConfig};
use qcd_core::distributions::{DensityModel, GaussianParams};
use serde::Deserialize;
use std::path::PathBuf;

use crate::CliError;

/// Density model fragment: `kind` selects the family, the remaining
/// fields carry per-dimension (and per-component) parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Gaussian {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    GaussianMixture {
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

impl ModelSpec {
    pub fn build(&self, field: &str) -> Result<DensityModel, CliError> {
        let model = match self {
            ModelSpec::Gaussian { means, variances } => {
                DensityModel::gaussian(means.clone(), variances.clone())
            }
            ModelSpec::GaussianMixture {
                means,
                variances,
                weights,
            } => {
                if means.len() != variances.len() {
                    return Err(CliError::config(format!(
                        "`{field}`: {} mean vectors but {} variance vectors",
                        means.len(),
                        variances.len()
                    )));
                }
                let components = means
                    .iter()
                    .zip(variances)
                    .map(|(m, v)| GaussianParams::new(m.clone(), v.clone()))
                    .collect::<qcd_core::Result<Vec<_>>>()
                    .map_err(|e| CliError::config(format!("`{field}`: {e}")))?;
                DensityModel::mixture(components, weights.clone())
            }
        };
        model.map_err(|e| CliError::config(format!("`{field}`: {e}")))
    }
}

/// KDE estimator fragment shared by the non-parametric detectors.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(default)]
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthRule,
    #[serde(default)]
    pub clip: ClipConfig,
}

impl EstimatorSpec {
    pub fn build(&self, field: &str) -> Result<EstimatorConfig, CliError> {
        let cfg = EstimatorConfig::Kde {
            kernel: self.kernel,
            bandwidth: self.bandwidth.clone(),
            clip: self.clip,
        };
        cfg.validate()
            .map_err(|e| CliError::config(format!("`{field}`: {e}")))?;
        Ok(cfg)
    }
}

/// One detector entry in an operating-characteristic experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    /// Series label in outputs; defaults to the algorithm name.
    pub name: Option<String>,
    pub algorithm: Algorithm,
    /// Ascending thresholds for this detector; falls back to the
    /// experiment-level list.
    pub thresholds: Option<Vec<f64>>,
    /// Scan window (`glr`, `nglr`).
    pub window: Option<usize>,
    /// Estimation window (`nwla`, `sr`).
    pub w: Option<usize>,
    /// Largest parallel window (`parallel_nwla`).
    pub w_max: Option<usize>,
    pub estimator: Option<EstimatorSpec>,
    /// Per-step dominance checks (`nwla` only).
    pub diagnostics: Option<bool>,
}

impl DetectorSpec {
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.algorithm.to_string())
            .replace([',', '\n', '\r', ' '], "_")
    }

    fn reject(&self, idx: usize, field: &str, present: bool) -> Result<(), CliError> {
        if present {
            return Err(CliError::config(format!(
                "`detectors[{idx}].{field}` is not used by algorithm `{}`",
                self.algorithm
            )));
        }
        Ok(())
    }

    fn require_estimator(&self, idx: usize) -> Result<EstimatorConfig, CliError> {
        self.estimator
            .as_ref()
            .ok_or_else(|| {
                CliError::config(format!(
                    "`detectors[{idx}].estimator` is required by algorithm `{}`",
                    self.algorithm
                ))
            })?
            .build(&format!("detectors[{idx}].estimator"))
    }

    fn require(&self, idx: usize, field: &str, value: Option<usize>) -> Result<usize, CliError> {
        value.ok_or_else(|| {
            CliError::config(format!(
                "`detectors[{idx}].{field}` is required by algorithm `{}`",
                self.algorithm
            ))
        })
    }

    pub fn build(&self, idx: usize) -> Result<DetectorConfig, CliError> {
        match self.algorithm {
            Algorithm::Cusum => {
                self.reject(idx, "window", self.window.is_some())?;
                self.reject(idx, "w", self.w.is_some())?;
                self.reject(idx, "w_max", self.w_max.is_some())?;
                self.reject(idx, "estimator", self.estimator.is_some())?;
                self.reject(idx, "diagnostics", self.diagnostics.is_some())?;
                Ok(DetectorConfig::Cusum)
            }
            Algorithm::Glr => {
                self.reject(idx, "w", self.w.is_some())?;
                self.reject(idx, "w_max", self.w_max.is_some())?;
                self.reject(idx, "estimator", self.estimator.is_some())?;
                self.reject(idx, "diagnostics", self.diagnostics.is_some())?;
                Ok(DetectorConfig::Glr {
                    window: self.require(idx, "window", self.window)?,
                })
            }
            Algorithm::Nglr => {
                self.reject(idx, "w", self.w.is_some())?;
                self.reject(idx, "w_max", self.w_max.is_some())?;
                self.reject(idx, "diagnostics", self.diagnostics.is_some())?;
                Ok(DetectorConfig::Nglr {
                    window: self.require(idx, "window", self.window)?,
                    estimator: self.require_estimator(idx)?,
                })
            }
            Algorithm::Nwla => {
                self.reject(idx, "window", self.window.is_some())?;
                self.reject(idx, "w_max", self.w_max.is_some())?;
                Ok(DetectorConfig::Nwla {
                    w: self.require(idx, "w", self.w)?,
                    estimator: self.require_estimator(idx)?,
                    diagnostics: self.diagnostics.unwrap_or(false),
                })
            }
            Algorithm::ParallelNwla => {
                self.reject(idx, "window", self.window.is_some())?;
                self.reject(idx, "w", self.w.is_some())?;
                self.reject(idx, "diagnostics", self.diagnostics.is_some())?;
                Ok(DetectorConfig::ParallelNwla {
                    w_max: self.require(idx, "w_max", self.w_max)?,
                    estimator: self.require_estimator(idx)?,
                })
            }
            Algorithm::Sr => {
                self.reject(idx, "window", self.window.is_some())?;
                self.reject(idx, "w_max", self.w_max.is_some())?;
                self.reject(idx, "diagnostics", self.diagnostics.is_some())?;
                Ok(DetectorConfig::Sr {
                    w: self.require(idx, "w", self.w)?,
                    estimator: self.require_estimator(idx)?,
                })
            }
        }
    }
}

/// Change point(s) for the delay runs: a single index or a list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NuSpec {
    Single(u64),
    List(Vec<u64>),
}

impl NuSpec {
    pub fn resolve(&self) -> Result<Vec<u64>, CliError> {
        let nus = match self {
            NuSpec::Single(v) => vec![*v],
            NuSpec::List(vs) => vs.clone(),
        };
        if nus.is_empty() {
            return Err(CliError::config("`nu` list must not be empty"));
        }
        if nus.contains(&0) {
            return Err(CliError::config("`nu` entries must be >= 1"));
        }
        Ok(nus)
    }
}

/// `qcd oc` experiment: operating characteristics for a detector list.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcConfig {
    pub seed: u64,
    pub trials: u64,
    /// Change point(s) for the delay runs (run-length runs never
    /// change).
    #[serde(default = "default_nu")]
    pub nu: NuSpec,
    /// Path cap for run-length trials; defaults per detector to
    /// `ceil(50 * exp(largest threshold))`.
    pub max_len_mrl: Option<u64>,
    /// Path cap for delay trials (default 10000).
    #[serde(default = "default_max_len_delay")]
    pub max_len_delay: u64,
    /// Also write per-trial records to `trials.csv`.
    #[serde(default)]
    pub emit_trials: bool,
    pub out_dir: Option<PathBuf>,
    /// Fallback thresholds for detectors without their own list.
    pub thresholds: Option<Vec<f64>>,
    pub pre: ModelSpec,
    pub post: ModelSpec,
    pub detectors: Vec<DetectorSpec>,
}

fn default_nu() -> NuSpec {
    NuSpec::Single(1)
}

fn default_max_len_delay() -> u64 {
    10_000
}

impl OcConfig {
    pub fn detector_thresholds(&self, spec: &DetectorSpec, idx: usize) -> Result<Vec<f64>, CliError> {
        let bs = spec
            .thresholds
            .clone()
            .or_else(|| self.thresholds.clone())
            .ok_or_else(|| {
                CliError::config(format!(
                    "`detectors[{idx}].thresholds` missing and no experiment-level \
                     `thresholds` fallback is set"
                ))
            })?;
        if bs.is_empty() {
            return Err(CliError::config(format!(
                "`detectors[{idx}].thresholds` must not be empty"
            )));
        }
        Ok(bs)
    }

    pub fn mrl_cap(&self, bs: &[f64]) -> u64 {
        self.max_len_mrl.unwrap_or_else(|| {
            let b_max = bs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (50.0 * b_max.exp()).ceil().min(1e9) as u64
        })
    }
}

/// One series of the `qcd qcheck` condition check.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcheckSeries {
    pub name: String,
    pub pre: ModelSpec,
    pub estimator: EstimatorSpec,
}

/// `qcd qcheck` experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcheckConfig {
    pub seed: u64,
    pub trials: u64,
    /// Strictly ascending segment lengths, each >= 2.
    pub ms: Vec<usize>,
    pub out_dir: Option<PathBuf>,
    pub series: Vec<QcheckSeries>,
}

/// `qcd kdeloss` experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdelossConfig {
    pub seed: u64,
    pub trials: u64,
    /// Window sizes to estimate the loss at.
    pub ws: Vec<usize>,
    pub out_dir: Option<PathBuf>,
    pub model: ModelSpec,
    pub estimator: EstimatorSpec,
}

pub fn load<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::config(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text).map_err(|e| {
        CliError::config(format!("config {}: {e}", path.display()))
    })
}
