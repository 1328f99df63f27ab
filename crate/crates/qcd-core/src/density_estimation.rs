//! Kernel density estimation over sliding windows.
//!
//! The estimator is the Gaussian product-kernel KDE
//!
//! ```text
//! p_hat(x) = 1/(w * prod_i h_i) * sum_j prod_i K((x_i - X_{j,i}) / h_i)
//! ```
//!
//! over the `w` observations currently held in a [`WindowBuffer`].
//! Leave-one-out (LOO) evaluation removes one stored observation before
//! estimating, keeping the estimate independent of the point it is scored
//! at. Estimated densities are clipped to a configurable band before logs
//! are taken so log-ratios stay finite.

use crate::distributions::DensityModel;
use crate::error::{Error, Result};
use crate::rng::{trial_rng, StreamPurpose};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
}

/// Kernel family and moment order. The Gaussian kernel integrates to one
/// and has a vanishing first moment, so orders 0 and 1 ship; higher-order
/// kernels are representable but unimplemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default = "default_kernel_kind")]
    pub kind: KernelKind,
    #[serde(default = "default_kernel_order")]
    pub order: u8,
}

fn default_kernel_kind() -> KernelKind {
    KernelKind::Gaussian
}

fn default_kernel_order() -> u8 {
    1
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        Self {
            kind: KernelKind::Gaussian,
            order: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order > 1 {
            return Err(Error::InvalidConfig(format!(
                "kernel order {} unsupported: only orders 0 and 1 are implemented",
                self.order
            )));
        }
        Ok(())
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian()
    }
}

/// One product-kernel term `prod_i K((x_i - obs_i)/h_i)`, without the
/// `1/(w * prod h)` normalisation. Every KDE path in the crate funnels
/// through this function so that alternative evaluation orders agree
/// bit-for-bit.
#[inline]
pub fn gaussian_kernel_term(x: &[f64], obs: &[f64], h: &[f64]) -> f64 {
    const INV_SQRT_2PI: f64 = 0.3989422804014327;
    let mut t = 1.0;
    for i in 0..x.len() {
        let u = (x[i] - obs[i]) / h[i];
        t *= INV_SQRT_2PI * (-0.5 * u * u).exp();
    }
    t
}

/// Loss-decay description of a density estimator: the first moment of
/// `log(p/p_hat)` decays as `c1 / w^beta1` and its second moment as
/// `c2 / w^beta2` in the backing sample count `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorRates {
    pub beta1: f64,
    pub beta2: f64,
    pub c1: f64,
    pub c2: f64,
    /// Smoothness of the target density class.
    pub gamma: f64,
    /// Observation dimension.
    pub d: usize,
}

impl EstimatorRates {
    pub fn new(beta1: f64, beta2: f64, c1: f64, c2: f64, gamma: f64, d: usize) -> Result<Self> {
        if beta1 <= 0.0 || beta1.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "beta1 must be positive, got {beta1}"
            )));
        }
        if !(beta2 > 0.0 && beta2 < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "beta2 must lie in (0, 2), got {beta2}"
            )));
        }
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(Error::InvalidConfig("constants must be positive".into()));
        }
        if gamma <= 0.0 || gamma.is_nan() || d < 1 {
            return Err(Error::InvalidConfig(
                "need gamma > 0 and dimension >= 1".into(),
            ));
        }
        Ok(Self {
            beta1,
            beta2,
            c1,
            c2,
            gamma,
            d,
        })
    }

    /// Rates achieved by the kernel estimator on a `gamma`-smooth target
    /// in `d` dimensions: `beta1 = beta2 = 2 gamma / (2 gamma + d)`.
    pub fn kde(gamma: f64, d: usize, c1: f64, c2: f64) -> Result<Self> {
        if gamma <= 0.0 || gamma.is_nan() || d < 1 {
            return Err(Error::InvalidConfig(
                "need gamma > 0 and dimension >= 1".into(),
            ));
        }
        let beta = 2.0 * gamma / (2.0 * gamma + d as f64);
        Self::new(beta, beta, c1, c2, gamma, d)
    }

    /// Delay-correction rate of the adaptive detector at window
    /// exponent `kappa`: `min(kappa * beta1, 1 - kappa)`.
    pub fn rho(&self, kappa: f64) -> f64 {
        (kappa * self.beta1).min(1.0 - kappa)
    }

    /// The exponent maximising [`Self::rho`] and the rate it achieves:
    /// `kappa* = 1 / (1 + beta1)`, `rho* = beta1 / (1 + beta1)`.
    pub fn optimal_window_exponent(&self) -> (f64, f64) {
        let kappa = 1.0 / (1.0 + self.beta1);
        (kappa, self.beta1 / (1.0 + self.beta1))
    }
}

/// Bandwidth selection rule: either a fixed per-dimension vector or the
/// power law `h = c * w^(-exponent)` in the backing sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthRule {
    Fixed { h: Vec<f64> },
    Power { c: f64, exponent: f64 },
}

impl BandwidthRule {
    pub fn fixed(h: f64) -> Self {
        Self::Fixed { h: vec![h] }
    }

    pub fn power(c: f64, exponent: f64) -> Self {
        Self::Power { c, exponent }
    }
}

/// Resolves a bandwidth rule at window size `w` into a per-dimension
/// vector. A length-1 fixed vector broadcasts to higher dimensions.
pub fn bandwidth_of(rule: &BandwidthRule, w: usize, dim: usize) -> Result<Vec<f64>> {
    if w < 1 {
        return Err(Error::InvalidInput("window size must be >= 1".into()));
    }
    let h = match rule {
        BandwidthRule::Fixed { h } => {
            if h.len() == dim {
                h.clone()
            } else if h.len() == 1 {
                vec![h[0]; dim]
            } else {
                return Err(Error::InvalidConfig(format!(
                    "fixed bandwidth has {} entries for dim {}",
                    h.len(),
                    dim
                )));
            }
        }
        BandwidthRule::Power { c, exponent } => {
            vec![c * (w as f64).powf(-exponent); dim]
        }
    };
    if h.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bandwidth rule produced a nonpositive value at w = {w}: {h:?}"
        )));
    }
    Ok(h)
}

/// Clipping band applied to estimated density values before logs.
/// `floor = 0` with an infinite ceiling disables clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipConfig {
    #[serde(default = "default_clip_floor")]
    pub floor: f64,
    #[serde(default = "default_clip_ceiling")]
    pub ceiling: f64,
}

fn default_clip_floor() -> f64 {
    1e-12
}

fn default_clip_ceiling() -> f64 {
    f64::INFINITY
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            floor: 1e-12,
            ceiling: f64::INFINITY,
        }
    }
}

impl ClipConfig {
    pub fn new(floor: f64, ceiling: f64) -> Result<Self> {
        let c = Self { floor, ceiling };
        c.validate()?;
        Ok(c)
    }

    pub fn disabled() -> Self {
        Self {
            floor: 0.0,
            ceiling: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor >= 0.0 && self.floor < self.ceiling) {
            return Err(Error::InvalidConfig(format!(
                "clip band requires 0 <= floor < ceiling, got [{}, {}]",
                self.floor, self.ceiling
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        v.max(self.floor).min(self.ceiling)
    }
}

/// `min(max(v, floor), ceiling)`.
pub fn clip_density(v: f64, clip: &ClipConfig) -> f64 {
    clip.apply(v)
}

/// Bounded FIFO of the most recent observations, stored flat with one
/// `dim`-sized slot per observation. Index 0 is always the oldest.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    dim: usize,
    capacity: usize,
    start: usize,
    len: usize,
    data: Vec<f64>,
}

impl WindowBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity >= 1 && dim >= 1);
        Self {
            dim,
            capacity,
            start: 0,
            len: 0,
            data: vec![0.0; capacity * dim],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Appends an observation, evicting the oldest when full.
    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        let slot = (self.start + self.len) % self.capacity;
        self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(x);
        if self.len < self.capacity {
            self.len += 1;
        } else {
            self.start = (self.start + 1) % self.capacity;
        }
    }

    /// Observation `i` in arrival order (0 = oldest).
    pub fn get(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.len);
        let slot = (self.start + i) % self.capacity;
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Iterates observations oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Iterates the `k` most recent observations, oldest of them first.
    pub fn iter_tail(&self, k: usize) -> impl Iterator<Item = &[f64]> + '_ {
        debug_assert!(k <= self.len);
        (self.len - k..self.len).map(move |i| self.get(i))
    }

    pub fn clear(&mut self) {
        self.start = 0;
        self.len = 0;
    }
}

fn check_kde_inputs(window: &WindowBuffer, h: &[f64], x: &[f64]) -> Result<()> {
    if h.len() != window.dim() || x.len() != window.dim() {
        return Err(Error::InvalidInput(format!(
            "dim mismatch: window {}, bandwidth {}, point {}",
            window.dim(),
            h.len(),
            x.len()
        )));
    }
    if h.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidInput("bandwidth must be positive".into()));
    }
    Ok(())
}

/// KDE over the full window, evaluated at `x`. Strictly positive for the
/// Gaussian kernel (up to floating-point underflow far from all samples).
pub fn kde_eval(window: &WindowBuffer, kernel: &KernelSpec, h: &[f64], x: &[f64]) -> Result<f64> {
    kernel.validate()?;
    if window.is_empty() {
        return Err(Error::InvalidState("KDE over an empty window".into()));
    }
    check_kde_inputs(window, h, x)?;
    let mut sum = 0.0;
    for obs in window.iter() {
        sum += gaussian_kernel_term(x, obs, h);
    }
    let hprod: f64 = h.iter().product();
    Ok(sum / (window.len() as f64 * hprod))
}

/// Leave-one-out KDE: the estimate over the window with element
/// `leave_out` removed, evaluated at `x`. Computed by subtracting the
/// left-out kernel term from the full sum and renormalising, which is
/// algebraically identical to re-estimating on the reduced window.
pub fn kde_eval_loo(
    window: &WindowBuffer,
    leave_out: usize,
    kernel: &KernelSpec,
    h: &[f64],
    x: &[f64],
) -> Result<f64> {
    kernel.validate()?;
    if window.len() < 2 {
        return Err(Error::InvalidState(
            "leave-one-out undefined on fewer than 2 samples".into(),
        ));
    }
    if leave_out >= window.len() {
        return Err(Error::InvalidInput(format!(
            "leave-out index {} out of range (window length {})",
            leave_out,
            window.len()
        )));
    }
    check_kde_inputs(window, h, x)?;
    let mut sum = 0.0;
    let mut left_out_term = 0.0;
    for (i, obs) in window.iter().enumerate() {
        let t = gaussian_kernel_term(x, obs, h);
        sum += t;
        if i == leave_out {
            left_out_term = t;
        }
    }
    let hprod: f64 = h.iter().product();
    Ok((sum - left_out_term) / ((window.len() - 1) as f64 * hprod))
}

/// Monte Carlo MISE estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct MiseEstimate {
    pub mise: f64,
    pub std_err: f64,
    pub trials: u64,
}

/// Monte Carlo estimates of the first two moments of `log(p(X)/p_hat(X))`.
#[derive(Debug, Clone, Copy)]
pub struct KlLossEstimate {
    pub first_moment: f64,
    pub first_moment_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    pub trials: u64,
}

pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Grid for the inner MISE integral: the true model's extent at +-6 SD,
/// 2048 trapezoid points.
const MISE_GRID_POINTS: usize = 2048;

/// MISE of an arbitrary window-backed estimator against `truth` (d = 1):
/// fresh window per trial, inner integral by trapezoid rule.
/// `estimate(window, x)` returns the density estimate at `x`.
pub fn estimate_mise_with<F>(
    truth: &DensityModel,
    w: usize,
    trials: u64,
    seed: u64,
    estimate: F,
) -> Result<MiseEstimate>
where
    F: Fn(&WindowBuffer, &[f64]) -> f64 + Sync,
{
    if truth.dim() != 1 {
        return Err(Error::InvalidInput(
            "MISE estimation is implemented for d = 1 only".into(),
        ));
    }
    if trials < 2 {
        return Err(Error::InvalidInput("need >= 2 trials".into()));
    }
    if w < 1 {
        return Err(Error::InvalidInput("window size must be >= 1".into()));
    }
    let (lo, hi) = truth.extent_1d(6.0);
    let step = (hi - lo) / (MISE_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..MISE_GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let true_vals: Vec<f64> = grid
        .iter()
        .map(|&x| truth.log_density_unchecked(&[x]).exp())
        .collect();

    let per_trial: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, StreamPurpose::Mise, t);
            let mut window = WindowBuffer::new(w, 1);
            let mut x = [0.0];
            for _ in 0..w {
                truth.sample_into(&mut rng, &mut x);
                window.push(&x);
            }
            let mut integral = 0.0;
            let mut prev = 0.0;
            for (i, (&g, &tv)) in grid.iter().zip(true_vals.iter()).enumerate() {
                let d = estimate(&window, &[g]) - tv;
                let sq = d * d;
                if i > 0 {
                    integral += 0.5 * (prev + sq) * step;
                }
                prev = sq;
            }
            integral
        })
        .collect();

    for (t, v) in per_trial.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "MISE integrand non-finite in trial {t}"
            )));
        }
    }
    let (mean, se) = mean_se(&per_trial);
    Ok(MiseEstimate {
        mise: mean,
        std_err: se,
        trials,
    })
}

/// MISE of the Gaussian-kernel KDE with bandwidth `rule` applied at `w`.
pub fn estimate_mise(
    truth: &DensityModel,
    w: usize,
    kernel: &KernelSpec,
    rule: &BandwidthRule,
    trials: u64,
    seed: u64,
) -> Result<MiseEstimate> {
    kernel.validate()?;
    let h = bandwidth_of(rule, w, truth.dim())?;
    let k = *kernel;
    estimate_mise_with(truth, w, trials, seed, move |window, x| {
        kde_eval(window, &k, &h, x).expect("validated inputs")
    })
}

/// First two moments of `log(p(X)/p_hat(X))` for an arbitrary estimator:
/// fresh window and fresh evaluation point per trial.
pub fn estimate_kl_loss_with<F>(
    truth: &DensityModel,
    w: usize,
    trials: u64,
    seed: u64,
    estimate: F,
) -> Result<KlLossEstimate>
where
    F: Fn(&WindowBuffer, &[f64]) -> f64 + Sync,
{
    if trials < 2 {
        return Err(Error::InvalidInput("need >= 2 trials".into()));
    }
    if w < 1 {
        return Err(Error::InvalidInput("window size must be >= 1".into()));
    }
    let dim = truth.dim();
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, StreamPurpose::KlLoss, t);
            let mut window = WindowBuffer::new(w, dim);
            let mut x = vec![0.0; dim];
            for _ in 0..w {
                truth.sample_into(&mut rng, &mut x);
                window.push(&x);
            }
            truth.sample_into(&mut rng, &mut x);
            let v = estimate(&window, &x);
            truth.log_density_unchecked(&x) - v.ln()
        })
        .collect();

    for (t, r) in ratios.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::Numeric(format!(
                "log density ratio non-finite in trial {t}: {r}; \
                 enable a positive clip floor or check the estimator"
            )));
        }
    }
    let squares: Vec<f64> = ratios.iter().map(|r| r * r).collect();
    let (m1, se1) = mean_se(&ratios);
    let (m2, se2) = mean_se(&squares);
    Ok(KlLossEstimate {
        first_moment: m1,
        first_moment_se: se1,
        second_moment: m2,
        second_moment_se: se2,
        trials,
    })
}

/// KL-loss moments of the clipped Gaussian-kernel KDE. The clip floor
/// must be positive so log-ratios stay finite when the evaluation point
/// lands far from every window sample.
pub fn estimate_kl_loss(
    truth: &DensityModel,
    w: usize,
    kernel: &KernelSpec,
    rule: &BandwidthRule,
    clip: &ClipConfig,
    trials: u64,
    seed: u64,
) -> Result<KlLossEstimate> {
    kernel.validate()?;
    clip.validate()?;
    if clip.floor <= 0.0 {
        return Err(Error::InvalidConfig(
            "KL-loss estimation requires a positive clip floor".into(),
        ));
    }
    let h = bandwidth_of(rule, w, truth.dim())?;
    let k = *kernel;
    let clip = *clip;
    estimate_kl_loss_with(truth, w, trials, seed, move |window, x| {
        clip.apply(kde_eval(window, &k, &h, x).expect("validated inputs"))
    })
}
