//! Pre/post-change density models and change-point stream generation.
//!
//! Only diagonal-covariance Gaussians and finite mixtures of them are
//! built in; that covers every experiment configuration this crate runs.
//! Models are immutable after construction and safe to share across
//! threads.

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::{trial_rng, StreamPurpose};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_TOL: f64 = 1e-12;

const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// One diagonal-covariance Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussianParams {
    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InvalidConfig("gaussian must have dim >= 1".into()));
        }
        if means.len() != variances.len() {
            return Err(Error::InvalidConfig(format!(
                "means ({}) and variances ({}) differ in length",
                means.len(),
                variances.len()
            )));
        }
        if !means.iter().all(|m| m.is_finite()) {
            return Err(Error::InvalidConfig("non-finite mean".into()));
        }
        if !variances.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidConfig(
                "variances must be finite and strictly positive".into(),
            ));
        }
        Ok(Self { means, variances })
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, m), v) in x.iter().zip(&self.means).zip(&self.variances) {
            let d = xi - m;
            acc += -0.5 * (LN_2PI + v.ln()) - d * d / (2.0 * v);
        }
        acc
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for ((o, m), v) in out.iter_mut().zip(&self.means).zip(&self.variances) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + v.sqrt() * z;
        }
    }
}

/// An evaluable, sampleable probability density on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel {
    Gaussian(GaussianParams),
    Mixture {
        components: Vec<GaussianParams>,
        weights: Vec<f64>,
    },
}

impl DensityModel {
    pub fn gaussian(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        Ok(Self::Gaussian(GaussianParams::new(means, variances)?))
    }

    /// Scalar Gaussian `N(mean, var)`.
    pub fn gaussian1(mean: f64, var: f64) -> Result<Self> {
        Self::gaussian(vec![mean], vec![var])
    }

    /// Standard normal on `R`.
    pub fn standard_normal() -> Self {
        Self::gaussian1(0.0, 1.0).expect("valid parameters")
    }

    pub fn mixture(components: Vec<GaussianParams>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidConfig("mixture needs >= 1 component".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::InvalidConfig(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let dim = components[0].means.len();
        if components.iter().any(|c| c.means.len() != dim) {
            return Err(Error::InvalidConfig(
                "mixture components differ in dimension".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("weights must be >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidConfig(format!(
                "mixture weights sum to {total:.17e}, not 1 within {WEIGHT_TOL:e}"
            )));
        }
        Ok(Self::Mixture {
            components,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.means.len(),
            Self::Mixture { components, .. } => components[0].means.len(),
        }
    }

    /// `log p(x)`. Finite for every finite `x` (Gaussians and their
    /// mixtures are strictly positive).
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has dim {}, model has dim {}",
                x.len(),
                self.dim()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite evaluation point".into()));
        }
        Ok(self.log_density_unchecked(x))
    }

    /// `log p(x)` without input validation; used in sampling-driven hot
    /// loops where `x` is finite by construction.
    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Self::Gaussian(g) => g.log_density(x),
            Self::Mixture {
                components,
                weights,
            } => {
                // log sum_k w_k exp(l_k), stabilised by the max term
                let mut max = f64::NEG_INFINITY;
                let logs: Vec<f64> = components
                    .iter()
                    .zip(weights)
                    .map(|(c, w)| {
                        let l = w.ln() + c.log_density(x);
                        if l > max {
                            max = l;
                        }
                        l
                    })
                    .collect();
                if max == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
            }
        }
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    /// Draws one observation into `out` (length `dim`).
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match self {
            Self::Gaussian(g) => g.sample_into(rng, out),
            Self::Mixture {
                components,
                weights,
            } => {
                let u: f64 = rng.gen::<f64>();
                let mut acc = 0.0;
                let mut chosen = components.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                components[chosen].sample_into(rng, out);
            }
        }
    }

    /// `[min(mu - n_sd*sigma), max(mu + n_sd*sigma)]` over all components
    /// (d = 1 only); used to bound grids and quadrature intervals.
    pub fn extent_1d(&self, n_sd: f64) -> (f64, f64) {
        debug_assert_eq!(self.dim(), 1);
        let comps: Vec<&GaussianParams> = match self {
            Self::Gaussian(g) => vec![g],
            Self::Mixture { components, .. } => components.iter().collect(),
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in comps {
            let sd = c.variances[0].sqrt();
            lo = lo.min(c.means[0] - n_sd * sd);
            hi = hi.max(c.means[0] + n_sd * sd);
        }
        (lo, hi)
    }

    /// Range containing all but ~1e-30 of the probability mass (d = 1).
    pub fn support_hint_1d(&self) -> (f64, f64) {
        self.extent_1d(12.0)
    }
}

/// `log p1(x) - log p0(x)`.
pub fn log_likelihood_ratio(x: &[f64], p0: &DensityModel, p1: &DensityModel) -> Result<f64> {
    if p0.dim() != p1.dim() {
        return Err(Error::InvalidInput(format!(
            "model dims differ: {} vs {}",
            p0.dim(),
            p1.dim()
        )));
    }
    Ok(p1.log_density(x)? - p0.log_density(x)?)
}

/// KL divergence `KL(p || q)`, nats.
///
/// Gaussian–Gaussian pairs use the closed form; any other pair on `R`
/// is integrated by adaptive Gauss–Kronrod quadrature (relative tolerance
/// 1e-8). For `d > 1` non-Gaussian pairs use [`kl_divergence_mc`].
pub fn kl_divergence(p: &DensityModel, q: &DensityModel) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput(format!(
            "model dims differ: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    if let (DensityModel::Gaussian(a), DensityModel::Gaussian(b)) = (p, q) {
        let mut kl = 0.0;
        for i in 0..a.means.len() {
            let dm = a.means[i] - b.means[i];
            kl += 0.5 * ((b.variances[i] / a.variances[i]).ln()
                + (a.variances[i] + dm * dm) / b.variances[i]
                - 1.0);
        }
        return Ok(kl.max(0.0));
    }
    if p.dim() != 1 {
        return Err(Error::InvalidInput(
            "closed-form KL only for Gaussian pairs; use kl_divergence_mc for d > 1".into(),
        ));
    }
    let (plo, phi) = p.support_hint_1d();
    let (qlo, qhi) = q.support_hint_1d();
    let (lo, hi) = (plo.min(qlo), phi.max(qhi));
    let f = |x: f64| {
        let xv = [x];
        let lp = p.log_density_unchecked(&xv);
        let lq = q.log_density_unchecked(&xv);
        let pv = lp.exp();
        if pv == 0.0 {
            0.0
        } else {
            pv * (lp - lq)
        }
    };
    let est = quadrature::integrate(&f, lo, hi, 1e-8, 0.0)?;
    Ok(est.value.max(0.0))
}

/// Monte Carlo `KL(p || q)` for models where quadrature is unavailable.
/// Returns `(estimate, standard error)`.
pub fn kl_divergence_mc(
    p: &DensityModel,
    q: &DensityModel,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput("model dims differ".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("need >= 2 samples".into()));
    }
    let mut rng = trial_rng(seed, StreamPurpose::KlMonteCarlo, 0);
    let mut x = vec![0.0; p.dim()];
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        p.sample_into(&mut rng, &mut x);
        let r = p.log_density_unchecked(&x) - q.log_density_unchecked(&x);
        sum += r;
        sumsq += r * r;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sumsq - n * mean * mean) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Change-point index: the distribution switches at sample `nu`
/// (1-based), or never.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangePoint {
    Finite(u64),
    Infinite,
}

impl ChangePoint {
    pub fn finite(nu: u64) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidConfig("change point must be >= 1".into()));
        }
        Ok(ChangePoint::Finite(nu))
    }

    /// True when sample index `i` (1-based) is drawn post-change.
    pub fn changed_at(&self, i: u64) -> bool {
        match self {
            ChangePoint::Finite(nu) => i >= *nu,
            ChangePoint::Infinite => false,
        }
    }

    pub fn as_finite(&self) -> Option<u64> {
        match self {
            ChangePoint::Finite(nu) => Some(*nu),
            ChangePoint::Infinite => None,
        }
    }
}

impl std::fmt::Display for ChangePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChangePoint::Finite(nu) => write!(f, "{nu}"),
            ChangePoint::Infinite => write!(f, "inf"),
        }
    }
}

/// A seeded observation process: i.i.d. `pre` before the change point,
/// i.i.d. `post` from it onward. The same seed reproduces the same path,
/// and paths that share a seed agree sample-for-sample before the change
/// point regardless of `nu`.
#[derive(Debug, Clone)]
pub struct ChangePointProcess {
    pub pre: DensityModel,
    pub post: DensityModel,
    pub nu: ChangePoint,
    pub seed: u64,
}

impl ChangePointProcess {
    pub fn new(pre: DensityModel, post: DensityModel, nu: ChangePoint, seed: u64) -> Result<Self> {
        if pre.dim() != post.dim() {
            return Err(Error::InvalidConfig(format!(
                "pre dim {} != post dim {}",
                pre.dim(),
                post.dim()
            )));
        }
        if nu == ChangePoint::Finite(0) {
            return Err(Error::InvalidConfig("change point must be >= 1".into()));
        }
        Ok(Self {
            pre,
            post,
            nu,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.pre.dim()
    }

    /// Sampler seeded from the process's own seed.
    pub fn sampler(&self) -> PathSampler<'_> {
        self.sampler_with_rng(trial_rng(self.seed, StreamPurpose::Generic, 0))
    }

    /// Sampler driven by an externally derived stream (one per Monte
    /// Carlo trial).
    pub fn sampler_with_rng(&self, rng: ChaCha8Rng) -> PathSampler<'_> {
        PathSampler {
            pre: &self.pre,
            post: &self.post,
            nu: self.nu,
            rng,
            next_index: 1,
        }
    }

    /// First `n` observations, flattened row-major (`n * dim` values).
    pub fn sample_path(&self, n: usize) -> Result<Vec<f64>> {
        if n < 1 {
            return Err(Error::InvalidInput("path length must be >= 1".into()));
        }
        let dim = self.dim();
        let mut out = vec![0.0; n * dim];
        let mut sampler = self.sampler();
        for i in 0..n {
            sampler.next_into(&mut out[i * dim..(i + 1) * dim]);
        }
        Ok(out)
    }
}

/// Streaming view of one path realisation.
pub struct PathSampler<'a> {
    pre: &'a DensityModel,
    post: &'a DensityModel,
    nu: ChangePoint,
    rng: ChaCha8Rng,
    next_index: u64,
}

impl PathSampler<'_> {
    /// Draws the next observation (1-based index `self.position() + 1`).
    pub fn next_into(&mut self, out: &mut [f64]) {
        let model = if self.nu.changed_at(self.next_index) {
            self.post
        } else {
            self.pre
        };
        model.sample_into(&mut self.rng, out);
        self.next_index += 1;
    }

    /// Number of observations drawn so far.
    pub fn position(&self) -> u64 {
        self.next_index - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn fig1_mixture() -> DensityModel {
        DensityModel::mixture(
            vec![
                GaussianParams::new(vec![-2.0], vec![0.25]).unwrap(),
                GaussianParams::new(vec![0.0], vec![0.25]).unwrap(),
                GaussianParams::new(vec![2.0], vec![1.0]).unwrap(),
            ],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap()
    }

    fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
        (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn standard_normal_log_density_at_zero() {
        let p = DensityModel::standard_normal();
        let expect = -0.5 * (2.0 * PI).ln(); // -0.918938533...
        assert!((p.log_density(&[0.0]).unwrap() - expect).abs() < 1e-15);
        assert!((expect + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn identical_evaluations_cancel() {
        let p = DensityModel::standard_normal();
        let a = p.log_density(&[0.7]).unwrap();
        let b = p.log_density(&[0.7]).unwrap();
        assert_eq!(a - b, 0.0);
    }

    #[test]
    fn mixture_log_density_matches_three_term_sum() {
        let m = fig1_mixture();
        let direct = ((normal_pdf(0.0, -2.0, 0.25)
            + normal_pdf(0.0, 0.0, 0.25)
            + normal_pdf(0.0, 2.0, 1.0))
            / 3.0)
            .ln();
        assert!((m.log_density(&[0.0]).unwrap() - direct).abs() < 1e-13);
    }

    #[test]
    fn non_finite_point_is_input_error() {
        let p = DensityModel::standard_normal();
        assert!(matches!(
            p.log_density(&[f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn llr_closed_form_gaussian_mean_shift() {
        let p0 = DensityModel::standard_normal();
        let p1 = DensityModel::gaussian1(0.5, 1.0).unwrap();
        // midpoint of the means
        assert!(log_likelihood_ratio(&[0.25], &p0, &p1).unwrap().abs() < 1e-15);
        // (mu1-mu0)(x-(mu0+mu1)/2)/sigma^2 = 0.5*0.75
        assert!((log_likelihood_ratio(&[1.0], &p0, &p1).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(log_likelihood_ratio(&[3.3], &p0, &p0).unwrap(), 0.0);
    }

    #[test]
    fn llr_dim_mismatch_is_input_error() {
        let p0 = DensityModel::standard_normal();
        let p1 = DensityModel::gaussian(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(log_likelihood_ratio(&[0.0], &p0, &p1).is_err());
    }

    #[test]
    fn kl_gaussian_closed_form() {
        let p0 = DensityModel::standard_normal();
        let p1 = DensityModel::gaussian1(0.5, 1.0).unwrap();
        assert!((kl_divergence(&p1, &p0).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(kl_divergence(&p0, &p0).unwrap(), 0.0);
    }

    #[test]
    fn kl_mixture_quadrature_self_consistent() {
        let m = fig1_mixture();
        let p0 = DensityModel::standard_normal();
        let kl = kl_divergence(&m, &p0).unwrap();
        assert!(kl > 0.0);
        // refine: same integrand through the quadrature at a tighter
        // tolerance must agree within 1e-6
        let (lo, hi) = m.support_hint_1d();
        let f = |x: f64| {
            let xv = [x];
            let lp = m.log_density_unchecked(&xv);
            let lq = p0.log_density_unchecked(&xv);
            lp.exp() * (lp - lq)
        };
        let fine = quadrature::integrate(&f, lo, hi, 1e-10, 0.0).unwrap();
        assert!((kl - fine.value).abs() < 1e-6);
    }

    #[test]
    fn kl_matches_quadrature_for_gaussian_pair() {
        // cross-check the closed form against the integral route
        let p = DensityModel::gaussian1(0.3, 2.0).unwrap();
        let q = DensityModel::gaussian1(-0.4, 0.7).unwrap();
        let closed = kl_divergence(&p, &q).unwrap();
        let (lo, hi) = {
            let (a, b) = p.support_hint_1d();
            let (c, d) = q.support_hint_1d();
            (a.min(c), b.max(d))
        };
        let f = |x: f64| {
            let xv = [x];
            let lp = p.log_density_unchecked(&xv);
            let lq = q.log_density_unchecked(&xv);
            lp.exp() * (lp - lq)
        };
        let quad = quadrature::integrate(&f, lo, hi, 1e-10, 0.0).unwrap();
        assert!((closed - quad.value).abs() < 1e-9);
    }

    #[test]
    fn mc_kl_agrees_with_closed_form() {
        let p = DensityModel::gaussian1(0.5, 1.0).unwrap();
        let q = DensityModel::standard_normal();
        let (est, se) = kl_divergence_mc(&p, &q, 100_000, 7).unwrap();
        assert!((est - 0.125).abs() < 3.0 * se, "est {est} se {se}");
    }

    #[test]
    fn change_at_first_index_draws_only_post() {
        let pre = DensityModel::gaussian1(100.0, 0.01).unwrap();
        let post = DensityModel::gaussian1(0.0, 0.01).unwrap();
        let proc =
            ChangePointProcess::new(pre, post, ChangePoint::finite(1).unwrap(), 9).unwrap();
        let path = proc.sample_path(50).unwrap();
        assert!(path.iter().all(|v| v.abs() < 10.0));
    }

    #[test]
    fn infinite_change_point_draws_only_pre() {
        let pre = DensityModel::gaussian1(100.0, 0.01).unwrap();
        let post = DensityModel::gaussian1(0.0, 0.01).unwrap();
        let proc = ChangePointProcess::new(pre, post, ChangePoint::Infinite, 9).unwrap();
        let path = proc.sample_path(50).unwrap();
        assert!(path.iter().all(|v| (v - 100.0).abs() < 10.0));
    }

    #[test]
    fn same_seed_reproduces_path() {
        let proc = ChangePointProcess::new(
            DensityModel::standard_normal(),
            DensityModel::gaussian1(0.5, 1.0).unwrap(),
            ChangePoint::finite(10).unwrap(),
            1234,
        )
        .unwrap();
        assert_eq!(proc.sample_path(100).unwrap(), proc.sample_path(100).unwrap());
    }

    #[test]
    fn pre_change_prefix_identical_across_nu() {
        let pre = fig1_mixture();
        let post = DensityModel::gaussian1(0.5, 1.0).unwrap();
        let with_change = ChangePointProcess::new(
            pre.clone(),
            post.clone(),
            ChangePoint::finite(20).unwrap(),
            77,
        )
        .unwrap();
        let without = ChangePointProcess::new(pre, post, ChangePoint::Infinite, 77).unwrap();
        let a = with_change.sample_path(40).unwrap();
        let b = without.sample_path(40).unwrap();
        assert_eq!(a[..19], b[..19]);
        assert_ne!(a[19..], b[19..]);
    }

    #[test]
    fn densities_integrate_to_one() {
        for model in [
            DensityModel::standard_normal(),
            DensityModel::gaussian1(1.3, 0.4).unwrap(),
            fig1_mixture(),
        ] {
            let (lo, hi) = model.support_hint_1d();
            let f = |x: f64| model.log_density_unchecked(&[x]).exp();
            let mass = quadrature::integrate(&f, lo, hi, 1e-10, 0.0).unwrap().value;
            assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        }
    }

    #[test]
    fn mixture_weight_sum_enforced() {
        let comps = vec![
            GaussianParams::new(vec![0.0], vec![1.0]).unwrap(),
            GaussianParams::new(vec![1.0], vec![1.0]).unwrap(),
        ];
        assert!(DensityModel::mixture(comps.clone(), vec![0.6, 0.5]).is_err());
        assert!(DensityModel::mixture(comps, vec![0.5, 0.5]).is_ok());
    }
}
