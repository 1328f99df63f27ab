//! Monte Carlo estimation of run lengths, detection delays,
//! operating-characteristic curves, and the likelihood-ratio-product
//! condition check.
//!
//! Trials are independent work items: trial `t` draws from the stream
//! `(master seed, purpose, t)` and results are reduced in trial order, so
//! every estimate is bit-identical across runs and thread counts. One
//! simulated path serves a whole ascending threshold list via a
//! first-crossing scan of the statistic trajectory.

use crate::density_estimation::{bandwidth_of, gaussian_kernel_term, mean_se};
use crate::detectors::{Algorithm, Detector, DetectorConfig, EstimatorConfig};
use crate::distributions::{ChangePoint, ChangePointProcess, DensityModel, PathSampler};
use crate::error::{Error, Result};
use crate::rng::{stream_id, trial_rng, StreamPurpose};
use rayon::prelude::*;

/// Trial count, per-path cap, and master seed for one estimation run.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub trials: u64,
    pub max_len: u64,
    pub master_seed: u64,
}

/// Outcome of a single simulated run of one detector at one threshold.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    /// RNG stream id the path was drawn from.
    pub stream: u64,
    pub nu: ChangePoint,
    pub detector: Algorithm,
    pub threshold: f64,
    /// Stopping time, or the path cap when truncated.
    pub tau: u64,
    /// Truncated trials never count as genuine stops.
    pub truncated: bool,
}

/// First crossing of one threshold on one path.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub tau: u64,
    pub truncated: bool,
}

/// Streams one path into `det` and records the first crossing time for
/// each threshold in the ascending list `bs`. The path ends as soon as
/// the largest threshold is crossed, or at `max_len`; later thresholds
/// are then reported as truncated at `max_len`.
pub fn scan_crossings<D: Detector>(
    det: &mut D,
    sampler: &mut PathSampler<'_>,
    bs: &[f64],
    max_len: u64,
) -> Result<Vec<Crossing>> {
    debug_assert!(bs.windows(2).all(|p| p[0] <= p[1]), "thresholds ascending");
    let mut x = vec![0.0; det.dim()];
    let mut out: Vec<Crossing> = Vec::with_capacity(bs.len());
    for n in 1..=max_len {
        sampler.next_into(&mut x);
        let s = det.step(&x)?;
        if det.armed() {
            while out.len() < bs.len() && s >= bs[out.len()] {
                out.push(Crossing {
                    tau: n,
                    truncated: false,
                });
            }
        }
        if out.len() == bs.len() {
            break;
        }
    }
    while out.len() < bs.len() {
        out.push(Crossing {
            tau: max_len,
            truncated: true,
        });
    }
    debug_assert!(out.windows(2).all(|p| p[0].tau <= p[1].tau));
    Ok(out)
}

fn validate_thresholds(bs: &[f64]) -> Result<()> {
    if bs.is_empty() {
        return Err(Error::InvalidConfig("threshold list is empty".into()));
    }
    if bs.iter().any(|b| b.is_nan()) {
        return Err(Error::InvalidConfig("threshold is NaN".into()));
    }
    if bs.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::InvalidConfig(
            "thresholds must be in ascending order".into(),
        ));
    }
    Ok(())
}

/// Per-trial crossings for every threshold: `result[trial][threshold]`.
fn run_scans<D, F>(
    proc: &ChangePointProcess,
    factory: &F,
    bs: &[f64],
    cfg: &RunConfig,
    purpose: StreamPurpose,
) -> Result<Vec<Vec<Crossing>>>
where
    D: Detector,
    F: Fn() -> Result<D> + Sync,
{
    validate_thresholds(bs)?;
    if cfg.trials < 1 {
        return Err(Error::InvalidConfig("need >= 1 trial".into()));
    }
    if cfg.max_len < 1 {
        return Err(Error::InvalidConfig("max_len must be >= 1".into()));
    }
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let rng = trial_rng(cfg.master_seed, purpose, t);
            let mut sampler = proc.sampler_with_rng(rng);
            let mut det = factory()?;
            scan_crossings(&mut det, &mut sampler, bs, cfg.max_len)
        })
        .collect()
}

/// Mean run length to false alarm with Monte Carlo standard error.
/// Truncated trials contribute the path cap, so under truncation the
/// mean is a lower bound on the true run length.
#[derive(Debug, Clone, Copy)]
pub struct MrlEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub truncated_fraction: f64,
    pub trials: u64,
}

impl MrlEstimate {
    /// More than half the trials hit the cap; treat the estimate as a
    /// coarse lower bound.
    pub fn truncation_warning(&self) -> bool {
        self.truncated_fraction > 0.5
    }

    /// `FAR = 1 / E[run length]`, with a delta-method standard error.
    pub fn far(&self) -> (f64, f64) {
        (1.0 / self.mean, self.std_err / (self.mean * self.mean))
    }
}

/// Mean detection delay `(tau - nu + 1)` over trials with `tau >= nu`.
/// Premature alarms (`tau < nu`) are excluded from the mean and counted
/// separately; truncated trials contribute `max_len - nu + 1` and are
/// flagged.
#[derive(Debug, Clone, Copy)]
pub struct DelayEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub premature_fraction: f64,
    pub truncated_fraction: f64,
    /// Trials contributing to the mean (non-premature).
    pub trials_used: u64,
    pub trials: u64,
}

fn aggregate_mrl(scans: &[Vec<Crossing>], b_index: usize, trials: u64) -> MrlEstimate {
    let taus: Vec<f64> = scans.iter().map(|s| s[b_index].tau as f64).collect();
    let truncated = scans.iter().filter(|s| s[b_index].truncated).count();
    let (mean, se) = mean_se(&taus);
    MrlEstimate {
        mean,
        std_err: se,
        truncated_fraction: truncated as f64 / trials as f64,
        trials,
    }
}

fn aggregate_delay(
    scans: &[Vec<Crossing>],
    b_index: usize,
    nu: u64,
    trials: u64,
) -> DelayEstimate {
    let mut delays = Vec::with_capacity(scans.len());
    let mut premature = 0u64;
    let mut truncated = 0u64;
    for s in scans {
        let c = s[b_index];
        if c.truncated {
            truncated += 1;
            delays.push((c.tau - nu + 1) as f64);
        } else if c.tau < nu {
            premature += 1;
        } else {
            delays.push((c.tau - nu + 1) as f64);
        }
    }
    let (mean, se) = if delays.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_se(&delays)
    };
    DelayEstimate {
        mean,
        std_err: se,
        premature_fraction: premature as f64 / trials as f64,
        truncated_fraction: truncated as f64 / trials as f64,
        trials_used: delays.len() as u64,
        trials,
    }
}

/// Mean run length under the no-change measure for each threshold in the
/// ascending list, using a detector supplied by `factory` per trial.
pub fn mrl_curve_with<D, F>(
    proc: &ChangePointProcess,
    factory: F,
    bs: &[f64],
    cfg: &RunConfig,
) -> Result<Vec<MrlEstimate>>
where
    D: Detector,
    F: Fn() -> Result<D> + Sync,
{
    if proc.nu.as_finite().is_some() {
        return Err(Error::InvalidConfig(
            "run-length estimation requires a process that never changes (nu = inf)".into(),
        ));
    }
    if cfg.trials < 2 {
        return Err(Error::InvalidConfig("need >= 2 trials".into()));
    }
    let scans = run_scans(proc, &factory, bs, cfg, StreamPurpose::MeanRunLength)?;
    Ok((0..bs.len())
        .map(|j| aggregate_mrl(&scans, j, cfg.trials))
        .collect())
}

/// Mean detection delay at the process's change point for each threshold.
pub fn delay_curve_with<D, F>(
    proc: &ChangePointProcess,
    factory: F,
    bs: &[f64],
    cfg: &RunConfig,
) -> Result<Vec<DelayEstimate>>
where
    D: Detector,
    F: Fn() -> Result<D> + Sync,
{
    let nu = proc.nu.as_finite().ok_or_else(|| {
        Error::InvalidConfig("delay estimation requires a finite change point".into())
    })?;
    if cfg.max_len < nu {
        return Err(Error::InvalidConfig(format!(
            "max_len {} ends before the change point {nu}",
            cfg.max_len
        )));
    }
    if cfg.trials < 2 {
        return Err(Error::InvalidConfig("need >= 2 trials".into()));
    }
    let scans = run_scans(proc, &factory, bs, cfg, StreamPurpose::Delay)?;
    Ok((0..bs.len())
        .map(|j| aggregate_delay(&scans, j, nu, cfg.trials))
        .collect())
}

/// [`mrl_curve_with`] for a configured detector at a single threshold.
pub fn estimate_mrl(
    proc: &ChangePointProcess,
    detector: &DetectorConfig,
    b: f64,
    cfg: &RunConfig,
) -> Result<MrlEstimate> {
    let curve = mrl_curve_with(proc, || detector.build(&proc.pre, &proc.post), &[b], cfg)?;
    Ok(curve[0])
}

/// [`delay_curve_with`] for a configured detector at a single threshold.
pub fn estimate_delay(
    proc: &ChangePointProcess,
    detector: &DetectorConfig,
    b: f64,
    cfg: &RunConfig,
) -> Result<DelayEstimate> {
    let curve = delay_curve_with(proc, || detector.build(&proc.pre, &proc.post), &[b], cfg)?;
    Ok(curve[0])
}

/// Runs one seeded trial of a configured detector and records the
/// outcome. The path is drawn from the process's own seed.
pub fn run_trial(
    proc: &ChangePointProcess,
    detector: &DetectorConfig,
    b: f64,
    max_len: u64,
) -> Result<TrialRecord> {
    if max_len < 1 {
        return Err(Error::InvalidConfig("max_len must be >= 1".into()));
    }
    if b.is_nan() {
        return Err(Error::InvalidConfig("threshold is NaN".into()));
    }
    let mut det = detector.build(&proc.pre, &proc.post)?;
    let mut sampler = proc.sampler();
    let crossing = scan_crossings(&mut det, &mut sampler, &[b], max_len)?[0];
    Ok(TrialRecord {
        stream: stream_id(StreamPurpose::Generic, 0),
        nu: proc.nu,
        detector: detector.algorithm(),
        threshold: b,
        tau: crossing.tau,
        truncated: crossing.truncated,
    })
}

/// One operating-characteristic point: run length under no change and
/// delay at change point `nu`, at a common threshold.
#[derive(Debug, Clone, Copy)]
pub struct OcPoint {
    pub nu: u64,
    pub threshold: f64,
    pub mrl: f64,
    pub mrl_se: f64,
    pub mrl_truncated_fraction: f64,
    pub delay: f64,
    pub delay_se: f64,
    pub delay_truncated_fraction: f64,
    pub premature_fraction: f64,
    pub trials: u64,
}

/// An OC curve plus the per-trial records backing it.
#[derive(Debug, Clone)]
pub struct OcCurve {
    pub points: Vec<OcPoint>,
    pub trial_records: Vec<TrialRecord>,
}

/// Experiment description for [`oc_curve`].
#[derive(Debug, Clone)]
pub struct OcExperiment<'a> {
    pub pre: &'a DensityModel,
    pub post: &'a DensityModel,
    /// Change points for the delay legs (the run-length leg never
    /// changes and is shared across them).
    pub nus: &'a [u64],
    pub detector: &'a DetectorConfig,
    /// Ascending thresholds.
    pub thresholds: &'a [f64],
    pub trials: u64,
    pub max_len_mrl: u64,
    pub max_len_delay: u64,
    pub master_seed: u64,
}

/// Estimates one OC point per `(change point, threshold)` pair.
/// Statistic trajectories are computed once per trial and scanned
/// against the whole threshold list; the run-length leg runs once and
/// is reused across change points.
pub fn oc_curve(exp: &OcExperiment<'_>) -> Result<OcCurve> {
    validate_thresholds(exp.thresholds)?;
    if exp.nus.is_empty() {
        return Err(Error::InvalidConfig("change-point list is empty".into()));
    }
    if exp.trials < 2 {
        return Err(Error::InvalidConfig("need >= 2 trials".into()));
    }
    let far_proc = ChangePointProcess::new(
        exp.pre.clone(),
        exp.post.clone(),
        ChangePoint::Infinite,
        exp.master_seed,
    )?;
    let mrl_cfg = RunConfig {
        trials: exp.trials,
        max_len: exp.max_len_mrl,
        master_seed: exp.master_seed,
    };
    let delay_cfg = RunConfig {
        trials: exp.trials,
        max_len: exp.max_len_delay,
        master_seed: exp.master_seed,
    };

    let build = || exp.detector.build(exp.pre, exp.post);
    let mrl_scans = run_scans(
        &far_proc,
        &build,
        exp.thresholds,
        &mrl_cfg,
        StreamPurpose::MeanRunLength,
    )?;

    let alg = exp.detector.algorithm();
    let mut points = Vec::with_capacity(exp.nus.len() * exp.thresholds.len());
    let mut trial_records =
        Vec::with_capacity((1 + exp.nus.len()) * exp.trials as usize * exp.thresholds.len());
    for (t, scan) in mrl_scans.iter().enumerate() {
        for (j, c) in scan.iter().enumerate() {
            trial_records.push(TrialRecord {
                stream: stream_id(StreamPurpose::MeanRunLength, t as u64),
                nu: ChangePoint::Infinite,
                detector: alg,
                threshold: exp.thresholds[j],
                tau: c.tau,
                truncated: c.truncated,
            });
        }
    }

    for &nu in exp.nus {
        if delay_cfg.max_len < nu {
            return Err(Error::InvalidConfig(format!(
                "max_len_delay {} ends before the change point {nu}",
                delay_cfg.max_len
            )));
        }
        let delay_proc = ChangePointProcess::new(
            exp.pre.clone(),
            exp.post.clone(),
            ChangePoint::finite(nu)?,
            exp.master_seed,
        )?;
        let delay_scans = run_scans(
            &delay_proc,
            &build,
            exp.thresholds,
            &delay_cfg,
            StreamPurpose::Delay,
        )?;
        for (j, &b) in exp.thresholds.iter().enumerate() {
            let mrl = aggregate_mrl(&mrl_scans, j, exp.trials);
            let delay = aggregate_delay(&delay_scans, j, nu, exp.trials);
            points.push(OcPoint {
                nu,
                threshold: b,
                mrl: mrl.mean,
                mrl_se: mrl.std_err,
                mrl_truncated_fraction: mrl.truncated_fraction,
                delay: delay.mean,
                delay_se: delay.std_err,
                delay_truncated_fraction: delay.truncated_fraction,
                premature_fraction: delay.premature_fraction,
                trials: exp.trials,
            });
        }
        for (t, scan) in delay_scans.iter().enumerate() {
            for (j, c) in scan.iter().enumerate() {
                trial_records.push(TrialRecord {
                    stream: stream_id(StreamPurpose::Delay, t as u64),
                    nu: delay_proc.nu,
                    detector: alg,
                    threshold: exp.thresholds[j],
                    tau: c.tau,
                    truncated: c.truncated,
                });
            }
        }
    }
    Ok(OcCurve {
        points,
        trial_records,
    })
}

/// One row of the condition check: the Monte Carlo estimate of
/// `Q(m) = E[max_{2<=n<=m} prod_{i<=n} p_hat_{-i}^{[1,n]}(X_i)/p0(X_i)]`
/// and the margin `log Q(m) - 3 log m`.
#[derive(Debug, Clone, Copy)]
pub struct QRow {
    pub m: usize,
    pub q: f64,
    pub q_se: f64,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub rows: Vec<QRow>,
    pub trials: u64,
}

/// Log of the likelihood-ratio product over the segment `[1, n]` with
/// leave-one-out estimates: `sum_i log(p_hat_{-i}(X_i) / p0(X_i))`.
/// For power-law bandwidth rules the bandwidth is evaluated at the
/// segment length `n`.
fn log_lr_product(
    estimator: &EstimatorConfig,
    xs: &[f64],
    logp0: &[f64],
    dim: usize,
    n: usize,
) -> Result<f64> {
    match estimator {
        EstimatorConfig::Kde {
            bandwidth, clip, ..
        } => {
            let h = bandwidth_of(bandwidth, n, dim)?;
            let hprod: f64 = h.iter().product();
            let inv_denom = 1.0 / ((n - 1) as f64 * hprod);
            let mut total = 0.0;
            for i in 0..n {
                let xi = &xs[i * dim..(i + 1) * dim];
                let mut sum = 0.0;
                for j in 0..n {
                    if j != i {
                        sum += gaussian_kernel_term(xi, &xs[j * dim..(j + 1) * dim], &h);
                    }
                }
                total += clip.apply(sum * inv_denom).ln() - logp0[i];
            }
            Ok(total)
        }
        EstimatorConfig::Fixed(model) => {
            let mut total = 0.0;
            for i in 0..n {
                total += model.log_density_unchecked(&xs[i * dim..(i + 1) * dim]) - logp0[i];
            }
            Ok(total)
        }
    }
}

/// Monte Carlo estimate of `Q(m)` for each `m` in the ascending list.
/// Products are accumulated in log space; the expectation is recovered
/// with a max-shift, which is exact algebra.
pub fn check_q(
    p0: &DensityModel,
    ms: &[usize],
    estimator: &EstimatorConfig,
    trials: u64,
    master_seed: u64,
) -> Result<ConditionReport> {
    if ms.is_empty() {
        return Err(Error::InvalidConfig("m list is empty".into()));
    }
    if ms.iter().any(|m| *m < 2) {
        return Err(Error::InvalidConfig("every m must be >= 2".into()));
    }
    if ms.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidConfig("m list must be strictly ascending".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidConfig("need >= 2 trials".into()));
    }
    estimator.validate()?;
    let m_max = *ms.last().expect("nonempty");
    let dim = p0.dim();

    // per trial, the running-max log product checkpointed at each m
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let mut rng = trial_rng(master_seed, StreamPurpose::ConditionCheck, t);
            let mut xs = vec![0.0; m_max * dim];
            let mut logp0 = vec![0.0; m_max];
            let mut checkpoints = Vec::with_capacity(ms.len());
            let mut running_max = f64::NEG_INFINITY;
            let mut next_m = 0usize;
            for n in 1..=m_max {
                p0.sample_into(&mut rng, &mut xs[(n - 1) * dim..n * dim]);
                logp0[n - 1] = p0.log_density_unchecked(&xs[(n - 1) * dim..n * dim]);
                if n >= 2 {
                    let l = log_lr_product(estimator, &xs[..n * dim], &logp0[..n], dim, n)?;
                    if l > running_max {
                        running_max = l;
                    }
                }
                if next_m < ms.len() && n == ms[next_m] {
                    checkpoints.push(running_max);
                    next_m += 1;
                }
            }
            Ok(checkpoints)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(ms.len());
    for (j, &m) in ms.iter().enumerate() {
        let logs: Vec<f64> = per_trial.iter().map(|v| v[j]).collect();
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
        let (mean, se) = mean_se(&shifted);
        let scale = shift.exp();
        let row = QRow {
            m,
            q: scale * mean,
            q_se: scale * se,
            margin: shift + mean.ln() - 3.0 * (m as f64).ln(),
        };
        if !(row.q.is_finite() && row.margin.is_finite()) {
            return Err(Error::Numeric(format!(
                "Q({m}) estimate is non-finite (every sampled product underflowed); \
                 raise the estimator clip floor"
            )));
        }
        rows.push(row);
    }
    Ok(ConditionReport { rows, trials })
}
