//! Window-limited adaptive CuSum on trailing-window density estimates,
//! its parallel multi-window variant, and the Shiryaev–Roberts-style
//! diagnostic recursion.

use super::{Detector, EstimatorConfig};
use crate::density_estimation::{bandwidth_of, gaussian_kernel_term, ClipConfig, WindowBuffer};
use crate::distributions::DensityModel;
use crate::error::{Error, Result};

/// `ln(1 + e^r)`, stable for any `r` including `-inf`.
#[inline]
fn log1p_exp(r: f64) -> f64 {
    if r <= 0.0 {
        r.exp().ln_1p()
    } else {
        r + (-r).exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
enum WindowEstimator {
    Kde {
        h: Vec<f64>,
        hprod: f64,
        clip: ClipConfig,
    },
    Fixed(DensityModel),
}

impl WindowEstimator {
    fn build(estimator: EstimatorConfig, w: usize, dim: usize) -> Result<Self> {
        estimator.validate()?;
        Ok(match estimator {
            EstimatorConfig::Kde {
                bandwidth, clip, ..
            } => {
                let h = bandwidth_of(&bandwidth, w, dim)?;
                let hprod = h.iter().product();
                Self::Kde { h, hprod, clip }
            }
            EstimatorConfig::Fixed(model) => {
                if model.dim() != dim {
                    return Err(Error::InvalidConfig(
                        "stub estimator dimension differs from the pre-change model".into(),
                    ));
                }
                Self::Fixed(model)
            }
        })
    }

    /// `log p_hat(x)` from the `w` most recent samples in `buf`.
    #[inline]
    fn log_estimate(&self, buf: &WindowBuffer, w: usize, x: &[f64]) -> f64 {
        match self {
            Self::Kde { h, hprod, clip } => {
                let mut sum = 0.0;
                for obs in buf.iter_tail(w) {
                    sum += gaussian_kernel_term(x, obs, h);
                }
                clip.apply(sum / (w as f64 * hprod)).ln()
            }
            Self::Fixed(model) => model.log_density_unchecked(x),
        }
    }
}

/// NWLA-CuSum: the statistic is pinned at zero through the first `w`
/// samples, then follows the reflected recursion
/// `W(n) = max(W(n-1), 0) + log(p_hat_n^w(x_n) / p0(x_n))`
/// where `p_hat_n^w` is estimated from the previous `w` observations
/// (never from `x_n` itself).
#[derive(Debug, Clone)]
pub struct NwlaDetector {
    p0: DensityModel,
    w: usize,
    dim: usize,
    estimator: WindowEstimator,
    buf: WindowBuffer,
    n: u64,
    statistic: f64,
    last_increment: f64,
    // optional diagnostics backing the run-length analysis
    diagnostics: bool,
    cumulative: f64,
    log_sr: f64,
}

impl NwlaDetector {
    pub fn new(p0: DensityModel, w: usize, estimator: EstimatorConfig) -> Result<Self> {
        if w < 1 {
            return Err(Error::InvalidConfig("NWLA window must be >= 1".into()));
        }
        let dim = p0.dim();
        let estimator = WindowEstimator::build(estimator, w, dim)?;
        Ok(Self {
            p0,
            w,
            dim,
            estimator,
            buf: WindowBuffer::new(w, dim),
            n: 0,
            statistic: 0.0,
            last_increment: f64::NAN,
            diagnostics: false,
            cumulative: 0.0,
            log_sr: f64::NEG_INFINITY,
        })
    }

    /// Also track the non-reflected cumulative sum `U_n` and the
    /// Shiryaev–Roberts recursion `R_n` alongside the statistic.
    pub fn enable_diagnostics(&mut self) {
        self.diagnostics = true;
    }

    pub fn window_size(&self) -> usize {
        self.w
    }

    /// True once the warm-up window has filled (`n > w`).
    pub fn active(&self) -> bool {
        self.n > self.w as u64
    }

    /// Most recent estimated log-likelihood-ratio increment.
    pub fn last_increment(&self) -> f64 {
        self.last_increment
    }

    /// `U_n = sum of increments` (zero through warm-up); requires
    /// diagnostics.
    pub fn cumulative_sum(&self) -> f64 {
        self.cumulative
    }

    /// `ln R_n` for the recursion `R_n = (1 + R_{n-1}) e^{Z_n}`,
    /// `-inf` while `R_n = 0`; requires diagnostics.
    pub fn log_sr(&self) -> f64 {
        self.log_sr
    }
}

impl Detector for NwlaDetector {
    fn step(&mut self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "observation has dim {}, detector expects {}",
                x.len(),
                self.dim
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        self.n += 1;
        if self.n <= self.w as u64 {
            self.buf.push(x);
            self.statistic = 0.0;
            return Ok(0.0);
        }
        let z = self.estimator.log_estimate(&self.buf, self.w, x)
            - self.p0.log_density_unchecked(x);
        if !z.is_finite() {
            return Err(Error::Numeric(format!(
                "adaptive increment non-finite at n = {} \
                 (estimated density underflowed; enable a positive clip floor)",
                self.n
            )));
        }
        self.statistic = self.statistic.max(0.0) + z;
        self.last_increment = z;
        if self.diagnostics {
            self.cumulative += z;
            self.log_sr = log1p_exp(self.log_sr) + z;
            // U_n <= W(n) on every path (the non-reflected sum can never
            // lead the reflected one); implies tau_u(b) >= tau(b) for all b
            if self.cumulative > self.statistic {
                return Err(Error::Numeric(format!(
                    "diagnostic violation at n = {}: cumulative sum {} exceeded \
                     the reflected statistic {}",
                    self.n, self.cumulative, self.statistic
                )));
            }
            // ln R_n >= W(n), with equality possible only on the first
            // active step
            let first_active = self.n == self.w as u64 + 1;
            let sr_ok = if first_active {
                self.log_sr >= self.statistic
            } else {
                self.log_sr > self.statistic
            };
            if !sr_ok {
                return Err(Error::Numeric(format!(
                    "diagnostic violation at n = {}: ln R = {} did not dominate \
                     the statistic {}",
                    self.n, self.log_sr, self.statistic
                )));
            }
        }
        self.buf.push(x);
        Ok(self.statistic)
    }

    fn statistic(&self) -> f64 {
        self.statistic
    }

    fn samples_seen(&self) -> u64 {
        self.n
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn armed(&self) -> bool {
        self.active()
    }
}

/// Parallel NWLA-CuSum: one NWLA statistic per window size `1..=w_max`
/// over a shared sample buffer, maximised. Each window size resolves its
/// own bandwidth, so a step costs O(w_max^2) kernel terms.
#[derive(Debug, Clone)]
pub struct ParallelNwlaDetector {
    p0: DensityModel,
    w_max: usize,
    dim: usize,
    estimators: Vec<WindowEstimator>,
    buf: WindowBuffer,
    stats: Vec<f64>,
    n: u64,
    statistic: f64,
}

impl ParallelNwlaDetector {
    pub fn new(p0: DensityModel, w_max: usize, estimator: EstimatorConfig) -> Result<Self> {
        if w_max < 1 {
            return Err(Error::InvalidConfig("w_max must be >= 1".into()));
        }
        let dim = p0.dim();
        let estimators = (1..=w_max)
            .map(|w| WindowEstimator::build(estimator.clone(), w, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            p0,
            w_max,
            dim,
            estimators,
            buf: WindowBuffer::new(w_max, dim),
            stats: vec![0.0; w_max],
            n: 0,
            statistic: 0.0,
        })
    }

    pub fn max_window(&self) -> usize {
        self.w_max
    }

    /// Per-window statistics (index `w - 1`), zero while window `w` is
    /// still warming up.
    pub fn window_statistics(&self) -> &[f64] {
        &self.stats
    }
}

impl Detector for ParallelNwlaDetector {
    fn step(&mut self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "observation has dim {}, detector expects {}",
                x.len(),
                self.dim
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        self.n += 1;
        let lp0 = self.p0.log_density_unchecked(x);
        let active = self.w_max.min((self.n - 1) as usize);
        for w in 1..=active {
            let z = self.estimators[w - 1].log_estimate(&self.buf, w, x) - lp0;
            if !z.is_finite() {
                return Err(Error::Numeric(format!(
                    "adaptive increment non-finite at n = {} for window {w} \
                     (estimated density underflowed; enable a positive clip floor)",
                    self.n
                )));
            }
            self.stats[w - 1] = self.stats[w - 1].max(0.0) + z;
        }
        self.buf.push(x);
        self.statistic = self.stats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(self.statistic)
    }

    fn statistic(&self) -> f64 {
        self.statistic
    }

    fn samples_seen(&self) -> u64 {
        self.n
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn armed(&self) -> bool {
        self.n >= 2
    }
}

/// Shiryaev–Roberts-style companion to the NWLA increments:
/// `R_n = (1 + R_{n-1}) e^{Z_n}` with `R_n = 0` through the warm-up.
/// The recursion runs in log space; [`Detector::statistic`] reports
/// `R_n` saturated to `f64::MAX`, and [`SrDetector::log_value`] exposes
/// the exact log-space value. Used to lower-bound the mean run length,
/// not as a tuned stopping rule.
#[derive(Debug, Clone)]
pub struct SrDetector {
    inner: NwlaDetector,
}

impl SrDetector {
    pub fn new(p0: DensityModel, w: usize, estimator: EstimatorConfig) -> Result<Self> {
        let mut inner = NwlaDetector::new(p0, w, estimator)?;
        inner.enable_diagnostics();
        Ok(Self { inner })
    }

    /// `ln R_n` (`-inf` while `R_n = 0`).
    pub fn log_value(&self) -> f64 {
        self.inner.log_sr()
    }

    fn linear_value(&self) -> f64 {
        let r = self.inner.log_sr();
        if r == f64::NEG_INFINITY {
            0.0
        } else {
            r.exp().min(f64::MAX)
        }
    }
}

impl Detector for SrDetector {
    fn step(&mut self, x: &[f64]) -> Result<f64> {
        self.inner.step(x)?;
        Ok(self.linear_value())
    }

    fn statistic(&self) -> f64 {
        self.linear_value()
    }

    fn samples_seen(&self) -> u64 {
        self.inner.samples_seen()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn armed(&self) -> bool {
        self.inner.armed()
    }
}
