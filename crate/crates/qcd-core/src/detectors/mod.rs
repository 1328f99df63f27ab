//! Streaming stopping-rule statistics and their policy solvers.
//!
//! Each detector consumes one observation per [`Detector::step`] call and
//! returns its current decision statistic. Detectors never apply a
//! threshold themselves — the statistic stream is exposed so one simulated
//! path can be scanned against many thresholds — while [`DetectorState`]
//! wraps a detector together with a threshold when conventional
//! stop-and-record semantics are wanted.

mod cusum;
mod glr;
mod nglr;
mod nwla;
pub mod policy;

pub use cusum::CusumDetector;
pub use glr::GlrDetector;
pub use nglr::NglrDetector;
pub use nwla::{NwlaDetector, ParallelNwlaDetector, SrDetector};
pub use policy::{
    kappa_star, nglr_window, nwla_threshold, nwla_window, parallel_nwla_threshold,
    solve_nglr_threshold, ThresholdPolicy, WindowPolicy,
};

use crate::density_estimation::{BandwidthRule, ClipConfig, KernelSpec};
use crate::distributions::DensityModel;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A streaming decision statistic.
pub trait Detector {
    /// Consumes the next observation and returns the updated statistic.
    fn step(&mut self, x: &[f64]) -> Result<f64>;

    /// Current statistic value (0 before the first step).
    fn statistic(&self) -> f64;

    /// Number of observations consumed.
    fn samples_seen(&self) -> u64;

    fn dim(&self) -> usize;

    /// Whether the stopping rule may fire at the current sample count
    /// (window-limited rules stay disarmed through their warm-up).
    fn armed(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cusum,
    Glr,
    Nglr,
    Nwla,
    ParallelNwla,
    Sr,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algorithm::Cusum => "cusum",
            Algorithm::Glr => "glr",
            Algorithm::Nglr => "nglr",
            Algorithm::Nwla => "nwla",
            Algorithm::ParallelNwla => "parallel_nwla",
            Algorithm::Sr => "sr",
        };
        f.write_str(s)
    }
}

/// How the non-parametric detectors obtain a post-change density
/// estimate for a set of window samples.
#[derive(Debug, Clone)]
pub enum EstimatorConfig {
    /// Gaussian-kernel KDE with the given bandwidth rule; estimates are
    /// clipped before logs are taken.
    Kde {
        kernel: KernelSpec,
        bandwidth: BandwidthRule,
        clip: ClipConfig,
    },
    /// Test hook: the "estimate" is a fixed known density, evaluated
    /// exactly and never clipped.
    Fixed(DensityModel),
}

impl EstimatorConfig {
    pub fn kde(bandwidth: BandwidthRule) -> Self {
        Self::Kde {
            kernel: KernelSpec::gaussian(),
            bandwidth,
            clip: ClipConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Kde {
                kernel,
                bandwidth,
                clip,
            } => {
                kernel.validate()?;
                clip.validate()?;
                match bandwidth {
                    BandwidthRule::Fixed { h } => {
                        if h.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                            return Err(Error::InvalidConfig(
                                "fixed bandwidth must be positive".into(),
                            ));
                        }
                    }
                    BandwidthRule::Power { c, exponent } => {
                        if !(c.is_finite() && *c > 0.0 && exponent.is_finite()) {
                            return Err(Error::InvalidConfig(
                                "power bandwidth needs c > 0 and a finite exponent".into(),
                            ));
                        }
                    }
                }
                Ok(())
            }
            Self::Fixed(_) => Ok(()),
        }
    }
}

/// Builds any of the supported detectors against the experiment's
/// pre-change model `pre` (and, for CuSum, the true post-change `post`).
#[derive(Debug, Clone)]
pub enum DetectorConfig {
    /// Oracle CuSum with full knowledge of the post-change density.
    Cusum,
    /// Window-limited GLR-CuSum for the Gaussian mean family.
    Glr { window: usize },
    /// Non-parametric GLR-CuSum on leave-one-out density estimates.
    Nglr {
        window: usize,
        estimator: EstimatorConfig,
    },
    /// Window-limited adaptive CuSum on trailing-window estimates.
    Nwla {
        w: usize,
        estimator: EstimatorConfig,
        diagnostics: bool,
    },
    /// One NWLA statistic per window size in `1..=w_max`, maximised.
    ParallelNwla {
        w_max: usize,
        estimator: EstimatorConfig,
    },
    /// Shiryaev–Roberts-style recursion on the NWLA increments
    /// (diagnostic companion, not a tuned stopping rule).
    Sr { w: usize, estimator: EstimatorConfig },
}

impl DetectorConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::Cusum => Algorithm::Cusum,
            Self::Glr { .. } => Algorithm::Glr,
            Self::Nglr { .. } => Algorithm::Nglr,
            Self::Nwla { .. } => Algorithm::Nwla,
            Self::ParallelNwla { .. } => Algorithm::ParallelNwla,
            Self::Sr { .. } => Algorithm::Sr,
        }
    }

    pub fn build(&self, pre: &DensityModel, post: &DensityModel) -> Result<AnyDetector> {
        Ok(match self {
            Self::Cusum => AnyDetector::Cusum(CusumDetector::new(pre.clone(), post.clone())?),
            Self::Glr { window } => AnyDetector::Glr(GlrDetector::new(pre, *window)?),
            Self::Nglr { window, estimator } => {
                AnyDetector::Nglr(NglrDetector::new(pre.clone(), *window, estimator.clone())?)
            }
            Self::Nwla {
                w,
                estimator,
                diagnostics,
            } => {
                let mut d = NwlaDetector::new(pre.clone(), *w, estimator.clone())?;
                if *diagnostics {
                    d.enable_diagnostics();
                }
                AnyDetector::Nwla(d)
            }
            Self::ParallelNwla { w_max, estimator } => AnyDetector::ParallelNwla(
                ParallelNwlaDetector::new(pre.clone(), *w_max, estimator.clone())?,
            ),
            Self::Sr { w, estimator } => {
                AnyDetector::Sr(SrDetector::new(pre.clone(), *w, estimator.clone())?)
            }
        })
    }
}

/// Type-erased detector for configuration-driven callers.
#[derive(Debug, Clone)]
pub enum AnyDetector {
    Cusum(CusumDetector),
    Glr(GlrDetector),
    Nglr(NglrDetector),
    Nwla(NwlaDetector),
    ParallelNwla(ParallelNwlaDetector),
    Sr(SrDetector),
}

macro_rules! dispatch {
    ($self:expr, $d:ident => $body:expr) => {
        match $self {
            AnyDetector::Cusum($d) => $body,
            AnyDetector::Glr($d) => $body,
            AnyDetector::Nglr($d) => $body,
            AnyDetector::Nwla($d) => $body,
            AnyDetector::ParallelNwla($d) => $body,
            AnyDetector::Sr($d) => $body,
        }
    };
}

impl Detector for AnyDetector {
    fn step(&mut self, x: &[f64]) -> Result<f64> {
        dispatch!(self, d => d.step(x))
    }

    fn statistic(&self) -> f64 {
        dispatch!(self, d => d.statistic())
    }

    fn samples_seen(&self) -> u64 {
        dispatch!(self, d => d.samples_seen())
    }

    fn dim(&self) -> usize {
        dispatch!(self, d => d.dim())
    }

    fn armed(&self) -> bool {
        dispatch!(self, d => d.armed())
    }
}

/// A detector paired with a threshold: tracks the stop flag and the
/// stopping time, and refuses to run past its own alarm.
#[derive(Debug, Clone)]
pub struct DetectorState<D = AnyDetector> {
    detector: D,
    threshold: f64,
    stopped: bool,
    tau: Option<u64>,
}

impl<D: Detector> DetectorState<D> {
    pub fn new(detector: D, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::InvalidConfig("threshold must be finite".into()));
        }
        Ok(Self {
            detector,
            threshold,
            stopped: false,
            tau: None,
        })
    }

    /// Feeds one observation; returns `(statistic, stopped)`.
    pub fn step(&mut self, x: &[f64]) -> Result<(f64, bool)> {
        if self.stopped {
            return Err(Error::InvalidState(format!(
                "detector already stopped at tau = {}",
                self.tau.expect("set when stopped")
            )));
        }
        let s = self.detector.step(x)?;
        if self.detector.armed() && s >= self.threshold {
            self.stopped = true;
            self.tau = Some(self.detector.samples_seen());
        }
        Ok((s, self.stopped))
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    /// Stopping time, once the statistic has crossed the threshold.
    pub fn stopping_time(&self) -> Option<u64> {
        self.tau
    }

    pub fn detector(&self) -> &D {
        &self.detector
    }
}
