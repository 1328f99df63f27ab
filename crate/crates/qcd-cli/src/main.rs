//! `qcd` — operating-characteristic experiments, condition checks, and
//! policy solving for sequential change detection, driven by TOML
//! configs. Exit codes: 0 success, 1 configuration error, 2 numeric
//! failure.

mod config;
mod csv_out;
mod svg;

use clap::{Args, Parser, Subcommand};
use qcd_core::density_estimation::estimate_kl_loss;
use qcd_core::detectors::policy;
use qcd_core::mc_harness::{check_q, oc_curve, OcExperiment};
use qcd_core::Error as CoreError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Numeric(m) => CliError::Numeric(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qcd",
    about = "Sequential change detection experiments",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (affects wall time only, never output bytes).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate operating characteristics (run length and delay per
    /// threshold) for each configured detector.
    Oc {
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Estimate the likelihood-ratio-product condition margins.
    Qcheck {
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Estimate KDE KL-loss moments across window sizes.
    Kdeloss {
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve threshold and window-size policies.
    Solve {
        /// Target false alarm rate in (0, 1).
        #[arg(long)]
        alpha: f64,
        /// Growth exponent bound in the threshold equation.
        #[arg(long, default_value_t = 3.0)]
        varsigma: f64,
        /// Window slack factor (> 1) for the scan window rule.
        #[arg(long)]
        eta: Option<f64>,
        /// Nominal divergence the scan window is designed against.
        #[arg(long)]
        i_nom: Option<f64>,
        /// Window exponent in (0, 1) for the adaptive window rule.
        #[arg(long)]
        kappa: Option<f64>,
        /// Density smoothness for the optimal-exponent rule.
        #[arg(long)]
        gamma: Option<f64>,
        /// Observation dimension for the optimal-exponent rule.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Largest window of the parallel detector.
        #[arg(long)]
        w_max: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Oc { config, common } => run_with(&common).and_then(|_| cmd_oc(&config, &common)),
        Command::Qcheck { config, common } => {
            run_with(&common).and_then(|_| cmd_qcheck(&config, &common))
        }
        Command::Kdeloss { config, common } => {
            run_with(&common).and_then(|_| cmd_kdeloss(&config, &common))
        }
        Command::Solve {
            alpha,
            varsigma,
            eta,
            i_nom,
            kappa,
            gamma,
            dim,
            w_max,
            common,
        } => run_with(&common)
            .and_then(|_| cmd_solve(alpha, varsigma, eta, i_nom, kappa, gamma, dim, w_max)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qcd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Apply `--threads`; thread count changes scheduling only, results are
/// reduced in trial order regardless.
fn run_with(common: &CommonArgs) -> Result<(), CliError> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn out_dir(cfg_dir: Option<&PathBuf>, common: &CommonArgs) -> Result<PathBuf, CliError> {
    let dir = common
        .out_dir
        .clone()
        .or_else(|| cfg_dir.cloned())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
    eprintln!("qcd: wrote {}", path.display());
    Ok(())
}

fn cmd_oc(config_path: &Path, common: &CommonArgs) -> Result<(), CliError> {
    let cfg: config::OcConfig = config::load(config_path)?;
    if cfg.detectors.is_empty() {
        return Err(CliError::config("`detectors` list is empty"));
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    let dir = out_dir(cfg.out_dir.as_ref(), common)?;
    let pre = cfg.pre.build("pre")?;
    let post = cfg.post.build("post")?;
    let nus = cfg.nu.resolve()?;

    let mut curve_rows = Vec::new();
    let mut trial_rows = Vec::new();
    for (idx, spec) in cfg.detectors.iter().enumerate() {
        let detector = spec.build(idx)?;
        let mut bs = cfg.detector_thresholds(spec, idx)?;
        bs.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
        let label = spec.label();
        eprintln!(
            "qcd: oc series `{label}` ({} thresholds, {} trials)...",
            bs.len(),
            cfg.trials
        );
        let exp = OcExperiment {
            pre: &pre,
            post: &post,
            nus: &nus,
            detector: &detector,
            thresholds: &bs,
            trials: cfg.trials,
            max_len_mrl: cfg.mrl_cap(&bs),
            max_len_delay: cfg.max_len_delay,
            master_seed: seed,
        };
        let curve = oc_curve(&exp)?;
        for p in &curve.points {
            // one series per (detector, change point) so the fixed CSV
            // column set still identifies every row
            let series = if nus.len() > 1 {
                format!("{label}@nu={}", p.nu)
            } else {
                label.clone()
            };
            if p.mrl_truncated_fraction > 0.5 {
                eprintln!(
                    "qcd: warning: series `{series}` b = {}: {:.0}% of run-length trials \
                     hit the path cap; the run-length estimate is a lower bound",
                    p.threshold,
                    100.0 * p.mrl_truncated_fraction
                );
            }
            curve_rows.push((series, *p));
        }
        if cfg.emit_trials {
            for r in curve.trial_records {
                trial_rows.push((label.clone(), r));
            }
        }
    }

    write_file(&dir.join("oc_curve.csv"), &csv_out::oc_curve_csv(&curve_rows))?;
    if cfg.emit_trials {
        write_file(&dir.join("trials.csv"), &csv_out::trials_csv(&trial_rows))?;
    }

    // plot straight from the CSV rows
    let mut series: Vec<svg::Series> = Vec::new();
    for (label, p) in &curve_rows {
        if series.last().map(|s: &svg::Series| &s.name) != Some(label) {
            series.push(svg::Series {
                name: label.clone(),
                points: Vec::new(),
            });
        }
        series.last_mut().expect("just pushed").points.push((p.mrl, p.delay));
    }
    let plot = svg::line_plot(
        &series,
        &svg::PlotOptions {
            title: "Operating characteristics".into(),
            x_label: "mean run length to false alarm".into(),
            y_label: "mean detection delay".into(),
            log_x: true,
            zero_line: false,
        },
    );
    write_file(&dir.join("oc_curve.svg"), &plot)?;
    Ok(())
}

fn cmd_qcheck(config_path: &Path, common: &CommonArgs) -> Result<(), CliError> {
    let cfg: config::QcheckConfig = config::load(config_path)?;
    if cfg.series.is_empty() {
        return Err(CliError::config("`series` list is empty"));
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    let dir = out_dir(cfg.out_dir.as_ref(), common)?;

    let mut rows = Vec::new();
    for s in &cfg.series {
        let pre = s.pre.build(&format!("series `{}` pre", s.name))?;
        let estimator = s.estimator.build(&format!("series `{}` estimator", s.name))?;
        eprintln!(
            "qcd: qcheck series `{}` (m up to {}, {} trials)...",
            s.name,
            cfg.ms.last().copied().unwrap_or(0),
            cfg.trials
        );
        let report = check_q(&pre, &cfg.ms, &estimator, cfg.trials, seed)?;
        for r in report.rows {
            rows.push((s.name.clone(), r));
        }
    }
    write_file(&dir.join("qcheck.csv"), &csv_out::qcheck_csv(&rows))?;

    let mut series: Vec<svg::Series> = Vec::new();
    for (label, r) in &rows {
        if series.last().map(|s: &svg::Series| &s.name) != Some(label) {
            series.push(svg::Series {
                name: label.clone(),
                points: Vec::new(),
            });
        }
        series
            .last_mut()
            .expect("just pushed")
            .points
            .push((r.m as f64, r.margin));
    }
    let plot = svg::line_plot(
        &series,
        &svg::PlotOptions {
            title: "Condition margin log Q(m) - 3 log m".into(),
            x_label: "m".into(),
            y_label: "margin".into(),
            log_x: false,
            zero_line: true,
        },
    );
    write_file(&dir.join("qcheck.svg"), &plot)?;
    Ok(())
}

fn cmd_kdeloss(config_path: &Path, common: &CommonArgs) -> Result<(), CliError> {
    let cfg: config::KdelossConfig = config::load(config_path)?;
    if cfg.ws.is_empty() {
        return Err(CliError::config("`ws` list is empty"));
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    let dir = out_dir(cfg.out_dir.as_ref(), common)?;
    let model = cfg.model.build("model")?;
    let spec = &cfg.estimator;
    spec.build("estimator")?;

    let mut rows = Vec::new();
    for &w in &cfg.ws {
        eprintln!("qcd: kdeloss w = {w} ({} trials)...", cfg.trials);
        let est = estimate_kl_loss(
            &model,
            w,
            &spec.kernel,
            &spec.bandwidth,
            &spec.clip,
            cfg.trials,
            seed,
        )?;
        rows.push(csv_out::KdelossRow {
            w,
            kl_loss: est.first_moment,
            kl_loss_se: est.first_moment_se,
            second_moment: est.second_moment,
            second_moment_se: est.second_moment_se,
        });
    }
    let slopes = if rows.len() >= 2 {
        let pts1: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| ((r.w as f64).ln(), r.kl_loss.max(f64::MIN_POSITIVE).ln()))
            .collect();
        let pts2: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| {
                (
                    (r.w as f64).ln(),
                    r.second_moment.max(f64::MIN_POSITIVE).ln(),
                )
            })
            .collect();
        Some((csv_out::ls_slope(&pts1), csv_out::ls_slope(&pts2)))
    } else {
        None
    };
    write_file(&dir.join("kdeloss.csv"), &csv_out::kdeloss_csv(&rows, slopes))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    alpha: f64,
    varsigma: f64,
    eta: Option<f64>,
    i_nom: Option<f64>,
    kappa: Option<f64>,
    gamma: Option<f64>,
    dim: usize,
    w_max: Option<usize>,
) -> Result<(), CliError> {
    let b = policy::solve_nglr_threshold(alpha, varsigma)?;
    println!("scan threshold b_alpha             {b:.12}");
    println!(
        "  residual                         {:.3e}",
        (b - varsigma * b.ln() - (-alpha.ln() + 8f64.ln())).abs()
    );
    let b_bar = policy::nwla_threshold(alpha)?;
    println!("adaptive threshold |log alpha|     {b_bar:.12}");
    if let Some(w_max) = w_max {
        let bp = policy::parallel_nwla_threshold(alpha, w_max)?;
        println!("parallel threshold (w_max = {w_max})    {bp:.12}");
    }
    match (eta, i_nom) {
        (Some(eta), Some(i_nom)) => {
            let m = policy::nglr_window(eta, b, i_nom)?;
            println!("scan window m_b (eta {eta}, I {i_nom})    {m}");
        }
        (None, None) => {}
        _ => {
            return Err(CliError::config(
                "--eta and --i-nom must be given together",
            ))
        }
    }
    if let Some(kappa) = kappa {
        let w = policy::nwla_window(kappa, alpha)?;
        println!("adaptive window w_alpha (kappa {kappa}) {w}");
    }
    if let Some(gamma) = gamma {
        let (ks, rs) = policy::kappa_star(gamma, dim)?;
        println!("kappa* (gamma {gamma}, d {dim})            {ks:.12}");
        println!("rho*   (gamma {gamma}, d {dim})            {rs:.12}");
        let w = policy::nwla_window(ks, alpha)?;
        println!("adaptive window at kappa*          {w}");
    }
    Ok(())
}
