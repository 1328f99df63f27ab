//! Sequential quickest change detection (QCD) with non-parametric
//! post-change density estimation.
//!
//! The crate provides:
//!
//! - [`distributions`]: pre/post-change density models (diagonal Gaussians
//!   and their mixtures), exact log-likelihood ratios, KL divergences, and
//!   seeded change-point stream generation.
//! - [`density_estimation`]: Gaussian-kernel (product) KDE, leave-one-out
//!   evaluation, bandwidth rules, density clipping, and Monte Carlo
//!   estimators of MISE and KL-loss.
//! - [`detectors`]: streaming stopping-rule statistics — CuSum, the
//!   window-limited Gaussian GLR-CuSum, the non-parametric GLR (NGLR)
//!   CuSum, the non-parametric window-limited adaptive (NWLA) CuSum, its
//!   parallel variant, and the Shiryaev–Roberts-style diagnostic recursion —
//!   plus the threshold and window-size policy solvers.
//! - [`mc_harness`]: reproducible parallel Monte Carlo estimation of mean
//!   run length to false alarm, detection delay, operating-characteristic
//!   curves, and the likelihood-ratio-product condition check.
//!
//! All randomness flows through per-trial counter-based streams derived
//! from a master seed, so every estimate is bit-identical across runs and
//! across degrees of parallelism.

pub mod density_estimation;
pub mod detectors;
pub mod distributions;
pub mod error;
pub mod mc_harness;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
