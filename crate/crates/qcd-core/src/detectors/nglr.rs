//! Non-parametric GLR CuSum on leave-one-out density estimates.

use super::{Detector, EstimatorConfig};
use crate::density_estimation::{
    bandwidth_of, gaussian_kernel_term, BandwidthRule, ClipConfig, WindowBuffer,
};
use crate::distributions::DensityModel;
use crate::error::{Error, Result};
use std::collections::VecDeque;

/// Ring-aligned symmetric table of per-pair values over the most recent
/// observations. Logical index 0 is the oldest retained item.
#[derive(Debug, Clone)]
struct PairTable {
    capacity: usize,
    start: usize,
    len: usize,
    data: Vec<f64>,
}

impl PairTable {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            start: 0,
            len: 0,
            data: vec![0.0; capacity * capacity],
        }
    }

    #[inline]
    fn slot(&self, i: usize) -> usize {
        (self.start + i) % self.capacity
    }

    /// Admits a new item, evicting the oldest when full; `f(i)` supplies
    /// the pair value against surviving item `i`.
    fn push_with(&mut self, mut f: impl FnMut(usize) -> f64) {
        if self.len == self.capacity {
            self.start = (self.start + 1) % self.capacity;
            self.len -= 1;
        }
        let s = (self.start + self.len) % self.capacity;
        for i in 0..self.len {
            let t = self.slot(i);
            let v = f(i);
            self.data[s * self.capacity + t] = v;
            self.data[t * self.capacity + s] = v;
        }
        self.len += 1;
    }

    /// Physical slots of the live items in logical order; lets hot loops
    /// index `data` directly.
    fn fill_slots(&self, out: &mut Vec<usize>) {
        out.clear();
        out.extend((0..self.len).map(|i| self.slot(i)));
    }
}

#[derive(Debug, Clone)]
enum Scan {
    /// Fixed bandwidth: pairwise kernel terms are computed once per pair
    /// and reused, so a step costs O(m^2) instead of an O(m^3) rebuild.
    FixedKde {
        h: Vec<f64>,
        hprod: f64,
        clip: ClipConfig,
        terms: PairTable,
    },
    /// Power-law bandwidth: h depends on the hypothesised segment length,
    /// so kernel terms cannot be shared across segments. Squared
    /// distances are cached; the exponentials are per-segment.
    PowerKde {
        c: f64,
        exponent: f64,
        clip: ClipConfig,
        sqdist: PairTable,
    },
    /// Test hook: increments come from a fixed density, so the scan
    /// reduces to suffix sums of per-sample log-ratios.
    Stub {
        model: DensityModel,
        z: VecDeque<f64>,
    },
}

/// Window-limited scan over candidate change points `k <= n-1`, scoring
/// each segment `[k, n]` by the sum of leave-one-out estimated
/// log-likelihood ratios
///
/// ```text
/// Z_hat(i; k, n) = log( p_hat_{-i}^{[k,n]}(X_i) / p0(X_i) )
/// ```
///
/// where `p_hat_{-i}^{[k,n]}` is the KDE over the segment with `X_i`
/// removed. For power-law bandwidth rules the bandwidth is evaluated at
/// the segment length `n - k + 1`.
#[derive(Debug, Clone)]
pub struct NglrDetector {
    p0: DensityModel,
    window: usize,
    dim: usize,
    n: u64,
    statistic: f64,
    samples: WindowBuffer,
    logp0: VecDeque<f64>,
    scan: Scan,
    // per-step scratch, kept to avoid reallocation
    kernel_sums: Vec<f64>,
    logp0_suffix: Vec<f64>,
    slots: Vec<usize>,
}

impl NglrDetector {
    pub fn new(p0: DensityModel, window: usize, estimator: EstimatorConfig) -> Result<Self> {
        if window < 2 {
            return Err(Error::InvalidConfig(
                "NGLR window must be >= 2 so leave-one-out estimates exist".into(),
            ));
        }
        estimator.validate()?;
        let dim = p0.dim();
        let scan = match estimator {
            EstimatorConfig::Kde {
                bandwidth, clip, ..
            } => match bandwidth {
                BandwidthRule::Fixed { .. } => {
                    let h = bandwidth_of(&bandwidth, window, dim)?;
                    let hprod = h.iter().product();
                    Scan::FixedKde {
                        h,
                        hprod,
                        clip,
                        terms: PairTable::new(window),
                    }
                }
                BandwidthRule::Power { c, exponent } => Scan::PowerKde {
                    c,
                    exponent,
                    clip,
                    sqdist: PairTable::new(window),
                },
            },
            EstimatorConfig::Fixed(model) => {
                if model.dim() != dim {
                    return Err(Error::InvalidConfig(
                        "stub estimator dimension differs from the pre-change model".into(),
                    ));
                }
                Scan::Stub {
                    model,
                    z: VecDeque::with_capacity(window),
                }
            }
        };
        Ok(Self {
            p0,
            window,
            dim,
            n: 0,
            statistic: 0.0,
            samples: WindowBuffer::new(window, dim),
            logp0: VecDeque::with_capacity(window),
            scan,
            kernel_sums: Vec::new(),
            logp0_suffix: Vec::new(),
            slots: Vec::new(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    fn rescan(&mut self) -> Result<()> {
        let live = self.samples.len();
        if live < 2 {
            self.statistic = 0.0;
            return Ok(());
        }
        // suffix sums of log p0 over the live samples
        self.logp0_suffix.clear();
        self.logp0_suffix.resize(live + 1, 0.0);
        for a in (0..live).rev() {
            self.logp0_suffix[a] = self.logp0_suffix[a + 1] + self.logp0[a];
        }

        let best = match &self.scan {
            Scan::FixedKde {
                hprod, clip, terms, ..
            } => {
                terms.fill_slots(&mut self.slots);
                let slots = &self.slots;
                let cap = terms.capacity;
                let kv = |i: usize, j: usize| terms.data[slots[i] * cap + slots[j]];

                self.kernel_sums.clear();
                self.kernel_sums.resize(live, 0.0);
                let s = &mut self.kernel_sums;
                s[live - 2] = kv(live - 2, live - 1);
                s[live - 1] = kv(live - 1, live - 2);

                let mut best = f64::NEG_INFINITY;
                let mut a = live - 2;
                loop {
                    // segment of length (live - a); each LOO estimate
                    // averages (live - a - 1) kernel terms
                    let inv_denom = 1.0 / ((live - a - 1) as f64 * hprod);
                    let mut t = 0.0;
                    for si in s.iter().take(live).skip(a) {
                        t += clip.apply(si * inv_denom).ln();
                    }
                    t -= self.logp0_suffix[a];
                    if t > best {
                        best = t;
                    }
                    if a == 0 {
                        break;
                    }
                    a -= 1;
                    #[allow(clippy::needless_range_loop)]
                    for i in (a + 1)..live {
                        s[i] += kv(i, a);
                    }
                    s[a] = ((a + 1)..live).map(|j| kv(a, j)).sum();
                }
                best
            }
            Scan::PowerKde {
                c,
                exponent,
                clip,
                sqdist,
            } => {
                sqdist.fill_slots(&mut self.slots);
                let slots = &self.slots;
                let cap = sqdist.capacity;
                let dv = |i: usize, j: usize| sqdist.data[slots[i] * cap + slots[j]];
                let norm = (0.3989422804014327f64).powi(self.dim as i32);

                let mut best = f64::NEG_INFINITY;
                for a in 0..=live - 2 {
                    let seg = live - a;
                    let h = c * (seg as f64).powf(-exponent);
                    let inv_two_h2 = 1.0 / (2.0 * h * h);
                    let inv_denom = 1.0 / ((seg - 1) as f64 * h.powi(self.dim as i32));
                    let mut t = 0.0;
                    for i in a..live {
                        let mut sum = 0.0;
                        for j in a..live {
                            if j != i {
                                sum += norm * (-dv(i, j) * inv_two_h2).exp();
                            }
                        }
                        t += clip.apply(sum * inv_denom).ln();
                    }
                    t -= self.logp0_suffix[a];
                    if t > best {
                        best = t;
                    }
                }
                best
            }
            Scan::Stub { z, .. } => {
                let mut best = f64::NEG_INFINITY;
                let mut sum = z[live - 1];
                for a in (0..=live - 2).rev() {
                    sum += z[a];
                    if sum > best {
                        best = sum;
                    }
                }
                best
            }
        };
        if !best.is_finite() {
            return Err(Error::Numeric(format!(
                "NGLR statistic became non-finite at n = {} \
                 (estimated density underflowed; enable a positive clip floor)",
                self.n
            )));
        }
        self.statistic = best;
        Ok(())
    }
}

impl Detector for NglrDetector {
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
        if self.logp0.len() == self.window {
            self.logp0.pop_front();
        }
        self.logp0.push_back(lp0);

        self.samples.push(x);
        let samples = &self.samples;
        match &mut self.scan {
            Scan::FixedKde { h, terms, .. } => {
                terms.push_with(|i| gaussian_kernel_term(x, samples.get(i), h));
            }
            Scan::PowerKde { sqdist, .. } => {
                sqdist.push_with(|i| {
                    let obs = samples.get(i);
                    let mut d2 = 0.0;
                    for (a, b) in x.iter().zip(obs) {
                        let d = a - b;
                        d2 += d * d;
                    }
                    d2
                });
            }
            Scan::Stub { model, z } => {
                if z.len() == self.window {
                    z.pop_front();
                }
                z.push_back(model.log_density_unchecked(x) - lp0);
            }
        }
        self.rescan()?;
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
