//! Page's CuSum with known pre- and post-change densities.

use super::Detector;
use crate::distributions::{log_likelihood_ratio, DensityModel};
use crate::error::{Error, Result};

/// Reflected random walk of exact log-likelihood ratios:
/// `W(n) = max(W(n-1), 0) + log(p1(x)/p0(x))`.
#[derive(Debug, Clone)]
pub struct CusumDetector {
    p0: DensityModel,
    p1: DensityModel,
    statistic: f64,
    last_increment: f64,
    n: u64,
}

impl CusumDetector {
    pub fn new(p0: DensityModel, p1: DensityModel) -> Result<Self> {
        if p0.dim() != p1.dim() {
            return Err(Error::InvalidConfig(format!(
                "pre dim {} != post dim {}",
                p0.dim(),
                p1.dim()
            )));
        }
        Ok(Self {
            p0,
            p1,
            statistic: 0.0,
            last_increment: f64::NAN,
            n: 0,
        })
    }

    /// The most recent log-likelihood-ratio increment.
    pub fn last_increment(&self) -> f64 {
        self.last_increment
    }
}

impl Detector for CusumDetector {
    fn step(&mut self, x: &[f64]) -> Result<f64> {
        let z = log_likelihood_ratio(x, &self.p0, &self.p1)?;
        self.statistic = self.statistic.max(0.0) + z;
        self.last_increment = z;
        self.n += 1;
        Ok(self.statistic)
    }

    fn statistic(&self) -> f64 {
        self.statistic
    }

    fn samples_seen(&self) -> u64 {
        self.n
    }

    fn dim(&self) -> usize {
        self.p0.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_shift_cusum() -> CusumDetector {
        CusumDetector::new(
            DensityModel::standard_normal(),
            DensityModel::gaussian1(0.5, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn first_step_equals_llr() {
        let mut d = mean_shift_cusum();
        let s = d.step(&[1.0]).unwrap();
        assert!((s - 0.375).abs() < 1e-15);
    }

    #[test]
    fn negative_statistic_reflects_on_next_step() {
        let mut d = mean_shift_cusum();
        // drive the statistic to -0.2: increment 0.5*(x - 0.25) = -0.2 at x = -0.15
        d.step(&[-0.15]).unwrap();
        assert!((d.statistic() + 0.2).abs() < 1e-12);
        // increment +0.1 at x = 0.45; reflection drops the -0.2
        let s = d.step(&[0.45]).unwrap();
        assert!((s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn crossing_detected_by_state_wrapper() {
        use crate::detectors::DetectorState;
        let mut st = DetectorState::new(mean_shift_cusum(), 8.0).unwrap();
        // deterministic increments of 0.375 per step: crossing at n = ceil(8/0.375) = 22
        let mut n = 0;
        loop {
            n += 1;
            let (_, stopped) = st.step(&[1.0]).unwrap();
            if stopped {
                break;
            }
        }
        assert_eq!(n, 22);
        assert_eq!(st.stopping_time(), Some(22));
    }

    #[test]
    fn statistic_dominates_last_increment() {
        // W(n) = max(W(n-1),0) + Z(n) >= Z(n)
        let mut d = mean_shift_cusum();
        let xs = [0.3, -1.2, 0.9, -0.4, 2.0, -2.5, 0.1];
        for x in xs {
            let s = d.step(&[x]).unwrap();
            assert!(s - d.last_increment() >= 0.0);
        }
    }
}
