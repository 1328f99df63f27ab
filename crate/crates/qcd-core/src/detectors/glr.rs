//! Window-limited GLR-CuSum for the Gaussian mean family.

use super::Detector;
use crate::density_estimation::WindowBuffer;
use crate::distributions::DensityModel;
use crate::error::{Error, Result};

/// Scans candidate change points `k` in the trailing window and maximises
/// the likelihood ratio over the unknown post-change mean:
///
/// ```text
/// G(n) = max_{(n-m)+ < k <= n} sup_theta sum_{i=k}^n log(p1^theta/p0)(X_i)
///      = max over segment lengths l of S^2 / (2 l)
/// ```
///
/// with `S` the sum of standardised observations over the segment. The
/// pre-change model must be a one-dimensional Gaussian; the post-change
/// family is `{N(theta, sigma0^2)}` with the pre-change variance.
#[derive(Debug, Clone)]
pub struct GlrDetector {
    mean0: f64,
    sd0: f64,
    window: usize,
    buf: WindowBuffer,
    statistic: f64,
    n: u64,
}

impl GlrDetector {
    pub fn new(p0: &DensityModel, window: usize) -> Result<Self> {
        let (mean0, var0) = match p0 {
            DensityModel::Gaussian(g) if g.means.len() == 1 => (g.means[0], g.variances[0]),
            _ => {
                return Err(Error::InvalidConfig(
                    "GLR baseline requires a one-dimensional Gaussian pre-change model".into(),
                ))
            }
        };
        if window < 1 {
            return Err(Error::InvalidConfig("GLR window must be >= 1".into()));
        }
        Ok(Self {
            mean0,
            sd0: var0.sqrt(),
            window,
            buf: WindowBuffer::new(window, 1),
            statistic: 0.0,
            n: 0,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

impl Detector for GlrDetector {
    fn step(&mut self, x: &[f64]) -> Result<f64> {
        if x.len() != 1 {
            return Err(Error::InvalidInput("GLR detector is one-dimensional".into()));
        }
        if !x[0].is_finite() {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        self.buf.push(x);
        self.n += 1;
        // newest-to-oldest suffix sums of standardised samples
        let live = self.buf.len();
        let mut sum = 0.0;
        let mut best = f64::NEG_INFINITY;
        for l in 1..=live {
            let y = (self.buf.get(live - l)[0] - self.mean0) / self.sd0;
            sum += y;
            let cand = sum * sum / (2.0 * l as f64);
            if cand > best {
                best = cand;
            }
        }
        self.statistic = best;
        Ok(self.statistic)
    }

    fn statistic(&self) -> f64 {
        self.statistic
    }

    fn samples_seen(&self) -> u64 {
        self.n
    }

    fn dim(&self) -> usize {
        1
    }
}
