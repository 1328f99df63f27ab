//! Threshold and window-size policies for the stopping rules.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ceiling that forgives floating-point dust: values within 1e-9
/// (relative) of an integer round to it instead of being pushed up.
fn ceil_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "false alarm rate must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Solves `b - varsigma * log(b) = |log alpha| + log 8` on the increasing
/// branch `b >= varsigma`, to residual below 1e-9.
pub fn solve_nglr_threshold(alpha: f64, varsigma: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(varsigma.is_finite() && varsigma >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "varsigma must be >= 0, got {varsigma}"
        )));
    }
    let rhs = -alpha.ln() + 8f64.ln();
    if varsigma == 0.0 {
        return Ok(rhs);
    }
    let g = |b: f64| b - varsigma * b.ln();
    // g is minimised at b = varsigma and increases from there
    if rhs < g(varsigma) {
        return Err(Error::InvalidConfig(format!(
            "threshold equation has no root with b >= varsigma: \
             |log alpha| + log 8 = {rhs:.6} < {:.6} = min over the branch; \
             alpha is too large for varsigma = {varsigma}",
            g(varsigma)
        )));
    }
    let mut lo = varsigma;
    let mut hi = varsigma.max(1.0);
    let mut guard = 0;
    while g(hi) < rhs {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Numeric("threshold bracket failed to expand".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut b = 0.5 * (lo + hi);
    // Newton polish; the derivative 1 - varsigma/b is positive on the branch
    for _ in 0..4 {
        let deriv = 1.0 - varsigma / b;
        if deriv <= 0.0 {
            break;
        }
        let next = b - (g(b) - rhs) / deriv;
        if next.is_finite() && next >= varsigma {
            b = next;
        }
    }
    let residual = (g(b) - rhs).abs();
    if residual >= 1e-9 {
        return Err(Error::Numeric(format!(
            "threshold solve stalled at residual {residual:.3e} (b = {b})"
        )));
    }
    Ok(b)
}

/// NGLR window size `m_b = ceil(eta * b / i_nom)`, at least 2. `i_nom` is
/// a user-supplied nominal divergence standing in for the unknowable true
/// post-change divergence.
pub fn nglr_window(eta: f64, b: f64, i_nom: f64) -> Result<usize> {
    if !(eta.is_finite() && eta > 1.0) {
        return Err(Error::InvalidConfig(format!("eta must exceed 1, got {eta}")));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold must be positive, got {b}"
        )));
    }
    if !(i_nom.is_finite() && i_nom > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "nominal divergence must be positive, got {i_nom}"
        )));
    }
    Ok((ceil_snapped(eta * b / i_nom) as usize).max(2))
}

/// NWLA window size `w = max(2, ceil(|log alpha|^kappa))`.
pub fn nwla_window(kappa: f64, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    let w = ceil_snapped((-alpha.ln()).powf(kappa));
    Ok((w as usize).max(2))
}

/// NWLA threshold meeting false alarm rate `alpha`: `|log alpha|`.
pub fn nwla_threshold(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(-alpha.ln())
}

/// Parallel-NWLA threshold: `|log alpha| + log w_max`.
pub fn parallel_nwla_threshold(alpha: f64, w_max: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if w_max < 1 {
        return Err(Error::InvalidConfig("w_max must be >= 1".into()));
    }
    Ok(-alpha.ln() + (w_max as f64).ln())
}

/// Optimal window exponent and delay-correction rate for a KDE-backed
/// NWLA detector on a `gamma`-smooth density in `d` dimensions:
/// `kappa* = (2 gamma + d) / (4 gamma + d)`, `rho* = 2 gamma / (4 gamma + d)`.
pub fn kappa_star(gamma: f64, d: usize) -> Result<(f64, f64)> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "smoothness gamma must be positive, got {gamma}"
        )));
    }
    if d < 1 {
        return Err(Error::InvalidConfig("dimension must be >= 1".into()));
    }
    let d = d as f64;
    Ok(((2.0 * gamma + d) / (4.0 * gamma + d), 2.0 * gamma / (4.0 * gamma + d)))
}

/// How a detector's threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdPolicy {
    Direct { b: f64 },
    NglrSolve { alpha: f64, varsigma: f64 },
    NwlaLog { alpha: f64 },
    ParallelLog { alpha: f64, w_max: usize },
}

impl ThresholdPolicy {
    pub fn resolve(&self) -> Result<f64> {
        let b = match self {
            Self::Direct { b } => {
                if !(b.is_finite() && *b > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "threshold must be positive, got {b}"
                    )));
                }
                *b
            }
            Self::NglrSolve { alpha, varsigma } => solve_nglr_threshold(*alpha, *varsigma)?,
            Self::NwlaLog { alpha } => nwla_threshold(*alpha)?,
            Self::ParallelLog { alpha, w_max } => parallel_nwla_threshold(*alpha, *w_max)?,
        };
        Ok(b)
    }
}

/// How a detector's window size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowPolicy {
    Direct { m: usize },
    NglrEta { eta: f64, i_nom: f64 },
    NwlaKappa { kappa: f64 },
    NwlaKappaStar { gamma: f64, d: usize },
}

impl WindowPolicy {
    /// Resolves the window size; `b` feeds the NGLR rule, `alpha` the
    /// NWLA rules.
    pub fn resolve(&self, b: Option<f64>, alpha: Option<f64>) -> Result<usize> {
        match self {
            Self::Direct { m } => {
                if *m < 2 {
                    return Err(Error::InvalidConfig("window must be >= 2".into()));
                }
                Ok(*m)
            }
            Self::NglrEta { eta, i_nom } => {
                let b = b.ok_or_else(|| {
                    Error::InvalidConfig("NGLR window policy needs a threshold b".into())
                })?;
                nglr_window(*eta, b, *i_nom)
            }
            Self::NwlaKappa { kappa } => {
                let alpha = alpha.ok_or_else(|| {
                    Error::InvalidConfig("NWLA window policy needs alpha".into())
                })?;
                nwla_window(*kappa, alpha)
            }
            Self::NwlaKappaStar { gamma, d } => {
                let alpha = alpha.ok_or_else(|| {
                    Error::InvalidConfig("NWLA window policy needs alpha".into())
                })?;
                let (kappa, _) = kappa_star(*gamma, *d)?;
                nwla_window(kappa, alpha)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_at_varsigma_zero() {
        let b = solve_nglr_threshold(0.01, 0.0).unwrap();
        let expect = (100f64).ln() + 8f64.ln(); // 6.684611...
        assert!((b - expect).abs() < 1e-12);
        assert!((b - 6.684612).abs() < 1e-6);
    }

    #[test]
    fn bisection_residual_tight() {
        let b = solve_nglr_threshold(1e-4, 3.0).unwrap();
        let rhs = -(1e-4f64).ln() + 8f64.ln();
        assert!((b - 3.0 * b.ln() - rhs).abs() < 1e-9);
        assert!(b > 3.0);
    }

    #[test]
    fn threshold_monotone_in_alpha() {
        let loose = solve_nglr_threshold(1e-2, 2.0).unwrap();
        let tight = solve_nglr_threshold(1e-6, 2.0).unwrap();
        assert!(tight > loose);
    }

    #[test]
    fn root_exists_even_for_large_varsigma() {
        // the branch minimum g(varsigma) = varsigma * (1 - ln varsigma)
        // never exceeds 1, while the right-hand side always exceeds
        // ln 8 > 1, so the equation stays solvable for any valid alpha
        let b = solve_nglr_threshold(0.5, 100.0).unwrap();
        let rhs = -(0.5f64).ln() + 8f64.ln();
        assert!((b - 100.0 * b.ln() - rhs).abs() < 1e-9);
        assert!(b > 100.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(matches!(
            solve_nglr_threshold(1.5, 0.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            solve_nglr_threshold(0.0, 0.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            solve_nglr_threshold(0.1, -1.0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn window_rules() {
        assert_eq!(nglr_window(1.2, 8.0, 0.125).unwrap(), 77);
        assert_eq!(nwla_window(0.5, (-9.0f64).exp()).unwrap(), 3);
        assert_eq!(nwla_window(0.5, (-2.0f64).exp()).unwrap(), 2); // max(2, ceil(sqrt 2))
        assert!(nglr_window(1.0, 8.0, 0.125).is_err()); // eta must exceed 1
        assert!(nwla_window(1.0, 0.01).is_err()); // kappa in (0,1)
    }

    #[test]
    fn kappa_star_example_values() {
        let (k, r) = kappa_star(2.0, 1).unwrap();
        assert_eq!(k, 5.0 / 9.0);
        assert_eq!(r, 4.0 / 9.0);
        assert!((k - 0.5556).abs() < 1e-4);
        assert!((r - 0.4444).abs() < 1e-4);
    }

    #[test]
    fn simple_thresholds() {
        assert!((nwla_threshold((-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-12);
        let p = parallel_nwla_threshold(0.01, 20).unwrap();
        assert!((p - ((100f64).ln() + 20f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn policy_enums_resolve() {
        let t = ThresholdPolicy::NglrSolve {
            alpha: 0.01,
            varsigma: 0.0,
        };
        assert!((t.resolve().unwrap() - 6.684611727667927).abs() < 1e-12);
        let w = WindowPolicy::NglrEta {
            eta: 1.2,
            i_nom: 0.125,
        };
        assert_eq!(w.resolve(Some(8.0), None).unwrap(), 77);
        assert!(w.resolve(None, Some(0.01)).is_err());
        let ks = WindowPolicy::NwlaKappaStar { gamma: 2.0, d: 1 };
        // |log 1e-4|^(5/9) = 9.2103...^0.5556 -> ceil
        let resolved = ks.resolve(None, Some(1e-4)).unwrap();
        assert!(resolved >= 2);
    }
}
