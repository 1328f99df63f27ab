//! CSV artifacts with fixed column sets.
//!
//! Floating-point values are serialized with 17 significant digits so
//! files round-trip bit-exactly; outputs are deterministic functions of
//! (config, seed).

use qcd_core::mc_harness::{OcPoint, QRow, TrialRecord};

/// 17 significant digits, enough to reconstruct the exact double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn oc_curve_csv(rows: &[(String, OcPoint)]) -> String {
    let mut out = String::from("detector,b,mrl,mrl_se,delay,delay_se,trunc_frac,trials\n");
    for (label, p) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            label,
            fmt_f64(p.threshold),
            fmt_f64(p.mrl),
            fmt_f64(p.mrl_se),
            fmt_f64(p.delay),
            fmt_f64(p.delay_se),
            fmt_f64(p.mrl_truncated_fraction),
            p.trials
        ));
    }
    out
}

pub fn qcheck_csv(rows: &[(String, QRow)]) -> String {
    let mut out = String::from("series,m,q_estimate,q_se,margin\n");
    for (label, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            label,
            r.m,
            fmt_f64(r.q),
            fmt_f64(r.q_se),
            fmt_f64(r.margin)
        ));
    }
    out
}

/// One point row per window size plus, when two or more windows are
/// present, a trailing `slope` row holding the least-squares slopes of
/// the logged moments against `log w`.
pub struct KdelossRow {
    pub w: usize,
    pub kl_loss: f64,
    pub kl_loss_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
}

pub fn kdeloss_csv(rows: &[KdelossRow], slopes: Option<(f64, f64)>) -> String {
    let mut out =
        String::from("w,kl_loss,kl_loss_se,second_moment,second_moment_se\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.w,
            fmt_f64(r.kl_loss),
            fmt_f64(r.kl_loss_se),
            fmt_f64(r.second_moment),
            fmt_f64(r.second_moment_se)
        ));
    }
    if let Some((s1, s2)) = slopes {
        out.push_str(&format!("slope,{},,{},\n", fmt_f64(s1), fmt_f64(s2)));
    }
    out
}

pub fn trials_csv(rows: &[(String, TrialRecord)]) -> String {
    let mut out = String::from("detector,b,seed,nu,tau,truncated\n");
    for (label, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            label,
            fmt_f64(r.threshold),
            r.stream,
            r.nu,
            r.tau,
            r.truncated
        ));
    }
    out
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
