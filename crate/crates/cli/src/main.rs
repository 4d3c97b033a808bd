//! `efs` — ensemble forward selection from the command line.
//!
//! Four subcommand families, all deterministic for a given invocation:
//!
//! - `weights` prints selection-probability weight tables as CSV;
//! - `fit` runs plain or randomized forward selection on a CSV data file
//!   and reports the fitted model as JSON;
//! - `analyze` evaluates degrees-of-freedom, training-gap, majorization,
//!   and decoy-escape reports from small JSON configs;
//! - `simulate` executes the full paired df/training-error experiment
//!   protocol and writes its result table to a CSV file atomically.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or configuration,
//! 3 for I/O failures. Randomized subcommands take `--seed` (default 0);
//! the simulation protocol is seeded by its config file instead. The
//! `EFS_THREADS` environment variable caps the simulation worker pool
//! (0 or unset = auto); the output never depends on the thread count.

mod pool;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use efs_core::analysis::{
    build_escape_design, df_monte_carlo, majorization_check, training_gap,
};
use efs_core::greedy::{
    efs_base_fit, efs_ensemble_fit, efs_exact_orthogonal, fs_fit, DesignMatrix, FeatureOrdering,
};
use efs_core::simlab::{run_experiment, ExperimentConfig};
use efs_core::weights::{
    asymptotic_weight, exact_weight_table, limit_weight, mc_weight_table, CandidateSampling,
};

#[derive(Parser)]
#[command(name = "efs", version)]
#[command(about = "Ensemble forward selection: weight tables, fits, analyses, simulations")]
struct Cli {
    /// Seed for randomized subcommands; identical invocations give
    /// identical output. The simulation config carries its own seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Selection-probability weights, as CSV on standard output.
    #[command(subcommand)]
    Weights(WeightsCmd),

    /// Fit a selection path to a CSV data file, reporting JSON.
    #[command(subcommand)]
    Fit(FitCmd),

    /// Analysis reports from a JSON config, as CSV on standard output.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),

    /// Run the paired df/training-error experiment protocol.
    Simulate {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,

        /// Output CSV path; written atomically on success.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum WeightsCmd {
    /// Exact weights by dynamic program; rows `j,weight`, j = 1..=p.
    Exact {
        /// Selection steps.
        #[arg(long)]
        k: usize,
        /// Candidate subset size per step.
        #[arg(long)]
        m: usize,
        /// Total features.
        #[arg(long)]
        p: usize,
    },

    /// Large-p limiting weights at a fixed subset fraction; rows
    /// `j,weight`, j = 1..=jmax.
    Asymptotic {
        /// Selection steps.
        #[arg(long)]
        k: usize,
        /// Limiting subset fraction m/p, strictly inside (0, 1).
        #[arg(long)]
        gamma: f64,
        /// Largest rank reported [default: 3k].
        #[arg(long)]
        jmax: Option<usize>,
    },

    /// Deep-selection limit weight at one offset from the threshold;
    /// one row `j,weight` keyed by the offset.
    Limit {
        /// Offset from the selection threshold: the rank sits d
        /// positions inside the selected prefix (negative = outside).
        #[arg(long, allow_hyphen_values = true)]
        d: i64,
        /// Limiting subset fraction m/p, strictly inside (0, 1).
        #[arg(long)]
        gamma: f64,
    },

    /// Monte Carlo weight estimates; rows `j,weight,stderr`.
    Mc {
        /// Selection steps.
        #[arg(long)]
        k: usize,
        /// Candidate subset size per step.
        #[arg(long)]
        m: usize,
        /// Total features.
        #[arg(long)]
        p: usize,
        /// Simulated selection runs.
        #[arg(long)]
        reps: usize,
        /// Draw candidates with replacement (repeats allowed) instead of
        /// as subsets.
        #[arg(long, default_value_t = false)]
        with_replacement: bool,
    },
}

#[derive(Subcommand)]
enum FitCmd {
    /// Plain forward selection.
    Fs {
        /// Selection steps.
        #[arg(long)]
        k: usize,
        /// CSV data file: first column response, remaining columns features.
        #[arg(long)]
        data: PathBuf,
    },

    /// Randomized ensemble selection.
    Efs {
        /// Selection steps.
        #[arg(long)]
        k: usize,
        /// Candidate subset size per step.
        #[arg(long)]
        m: usize,
        /// Base runs averaged [default: 1].
        #[arg(long = "B", default_value_t = 1)]
        b: usize,
        /// CSV data file: first column response, remaining columns features.
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Degrees of freedom of plain and ensemble selection on a synthetic
    /// orthonormal design.
    Df {
        /// JSON config; see the README for the schema.
        #[arg(long)]
        config: PathBuf,
    },

    /// Best training-error gap of the exact ensemble over subset sizes.
    Gap {
        /// JSON config; see the README for the schema.
        #[arg(long)]
        config: PathBuf,
    },

    /// Prefix dominance of weight mass across subset sizes.
    Majorization {
        /// JSON config; see the README for the schema.
        #[arg(long)]
        config: PathBuf,
    },

    /// The correlated-decoy construction: greedy trap vs randomized runs.
    Escape {
        /// JSON config; see the README for the schema.
        #[arg(long)]
        config: PathBuf,
    },
}

// ---------------------------------------------------------------------
// Config schemas
// ---------------------------------------------------------------------

fn default_sigma2() -> f64 {
    1.0
}
fn default_df_replicates() -> usize {
    1000
}
fn default_beta() -> f64 {
    1.0
}
fn default_escape_runs() -> usize {
    500
}

/// Config for `analyze df`: a p-feature orthonormal design with `beta`
/// on the first `sparsity` features, noise variance `sigma2`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DfConfig {
    p: usize,
    k: usize,
    /// Candidate subset size for the ensemble rows; omit for plain only.
    m: Option<usize>,
    #[serde(default = "default_sigma2")]
    sigma2: f64,
    #[serde(default = "default_df_replicates")]
    replicates: usize,
    #[serde(default)]
    sparsity: usize,
    #[serde(default = "default_beta")]
    beta: f64,
}

/// Config for `analyze gap`: squared coefficient profile (default
/// `1/j`), scanned over every subset size.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GapConfig {
    k: usize,
    p: usize,
    /// Explicit squared-coefficient profile of length p; defaults to 1/j.
    beta_sq: Option<Vec<f64>>,
}

/// Config for `analyze majorization`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MajorizationConfig {
    k: usize,
    p: usize,
    /// Subset sizes compared; defaults to 1..=p.
    m_grid: Option<Vec<usize>>,
}

/// Config for `analyze escape`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EscapeConfig {
    n: usize,
    p: usize,
    k: usize,
    m: usize,
    #[serde(default = "default_beta")]
    beta: f64,
    zeta: f64,
    #[serde(default = "default_escape_runs")]
    runs: usize,
}

/// Config for `simulate`: exactly the experiment protocol's fields.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    n: usize,
    p: usize,
    rho: f64,
    sparsity: usize,
    snr: f64,
    k_max: usize,
    #[serde(rename = "B")]
    b: usize,
    #[serde(default)]
    m_grid: Option<Vec<usize>>,
    folds: usize,
    seed: u64,
    replicates: usize,
}

/// JSON shape of a fitted model.
#[derive(Serialize)]
struct FitReport {
    selected: Vec<usize>,
    coef: Vec<f64>,
    train_mse: f64,
}

// ---------------------------------------------------------------------
// Error handling
// ---------------------------------------------------------------------

enum CliError {
    /// Bad arguments, configs, or data values; exit code 2.
    Validation(String),
    /// Filesystem trouble; exit code 3.
    Io(String),
}

impl From<efs_core::Error> for CliError {
    fn from(err: efs_core::Error) -> Self {
        CliError::Validation(err.to_string())
    }
}

fn io_err(context: &str, err: std::io::Error) -> CliError {
    CliError::Io(format!("{context}: {err}"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Commands::Weights(cmd) => print!("{}", weights_csv(cmd, seed)?),
        Commands::Fit(cmd) => print!("{}", fit_json(cmd, seed)?),
        Commands::Analyze(cmd) => print!("{}", analyze_csv(cmd, seed)?),
        Commands::Simulate { config, out } => {
            let cfg: SimulateConfig = load_config(&config)?;
            let csv = simulate_csv(cfg)?;
            write_atomic(&out, &csv)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// weights
// ---------------------------------------------------------------------

fn weights_csv(cmd: WeightsCmd, seed: u64) -> Result<String, CliError> {
    let mut out = String::new();
    match cmd {
        WeightsCmd::Exact { k, m, p } => {
            let table = exact_weight_table(k, m, p)?;
            out.push_str("j,weight\n");
            for (j, w) in table.weights().iter().enumerate() {
                let _ = writeln!(out, "{},{w}", j + 1);
            }
        }
        WeightsCmd::Asymptotic { k, gamma, jmax } => {
            let jmax = jmax.unwrap_or(3 * k).max(1);
            out.push_str("j,weight\n");
            for j in 1..=jmax {
                let w = asymptotic_weight(j, k, gamma)?;
                let _ = writeln!(out, "{j},{w}");
            }
        }
        WeightsCmd::Limit { d, gamma } => {
            let w = limit_weight(d, gamma, 1e-12)?;
            out.push_str("j,weight\n");
            let _ = writeln!(out, "{d},{w}");
        }
        WeightsCmd::Mc { k, m, p, reps, with_replacement } => {
            let sampling = if with_replacement {
                CandidateSampling::WithReplacement
            } else {
                CandidateSampling::WithoutReplacement
            };
            let mc = mc_weight_table(k, m, p, reps, seed, sampling)?;
            out.push_str("j,weight,stderr\n");
            for (j, (w, se)) in mc.table.weights().iter().zip(&mc.stderr).enumerate() {
                let _ = writeln!(out, "{},{w},{se}", j + 1);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------

fn fit_json(cmd: FitCmd, seed: u64) -> Result<String, CliError> {
    let model = match cmd {
        FitCmd::Fs { k, data } => {
            let (x, y) = read_design_csv(&data)?;
            fs_fit(&x, &y, k)?
        }
        FitCmd::Efs { k, m, b, data } => {
            let (x, y) = read_design_csv(&data)?;
            efs_ensemble_fit(&x, &y, k, m, b, seed)?
        }
    };
    let report = FitReport {
        selected: model.selected,
        coef: model.coef,
        train_mse: model.train_mse,
    };
    let mut text = serde_json::to_string(&report)
        .map_err(|e| CliError::Validation(format!("serializing fit report: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Reads a data file: one CSV row per observation, response first,
/// features after. A single leading non-numeric row is treated as a
/// header and skipped.
fn read_design_csv(path: &Path) -> Result<(DesignMatrix, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut saw_data = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                saw_data = true;
                rows.push(vals);
            }
            Err(_) if !saw_data => continue, // header line
            Err(e) => {
                return Err(CliError::Validation(format!(
                    "{} line {}: {e}",
                    path.display(),
                    lineno + 1
                )));
            }
        }
    }
    let n = rows.len();
    if n == 0 {
        return Err(CliError::Validation(format!("{}: no data rows", path.display())));
    }
    let cols = rows[0].len();
    if cols < 2 {
        return Err(CliError::Validation(format!(
            "{}: need a response column and at least one feature column",
            path.display()
        )));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(CliError::Validation(format!(
            "{}: row {} has {} fields, expected {cols}",
            path.display(),
            bad + 1,
            rows[bad].len()
        )));
    }
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    let x = DesignMatrix::from_rows(n, cols - 1, &flat)?;
    Ok((x, y))
}

// ---------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------

fn analyze_csv(cmd: AnalyzeCmd, seed: u64) -> Result<String, CliError> {
    let mut out = String::from("quantity,value,stderr\n");
    match cmd {
        AnalyzeCmd::Df { config } => {
            let cfg: DfConfig = load_config(&config)?;
            analyze_df(&cfg, seed, &mut out)?;
        }
        AnalyzeCmd::Gap { config } => {
            let cfg: GapConfig = load_config(&config)?;
            analyze_gap(&cfg, &mut out)?;
        }
        AnalyzeCmd::Majorization { config } => {
            let cfg: MajorizationConfig = load_config(&config)?;
            analyze_majorization(&cfg, &mut out)?;
        }
        AnalyzeCmd::Escape { config } => {
            let cfg: EscapeConfig = load_config(&config)?;
            analyze_escape(&cfg, seed, &mut out)?;
        }
    }
    Ok(out)
}

/// Orthonormal design `sqrt(p) e_j` used by the synthetic df reports.
fn canonical_design(p: usize) -> Result<DesignMatrix, CliError> {
    let root = (p as f64).sqrt();
    let mut values = vec![0.0; p * p];
    for j in 0..p {
        values[j * p + j] = root;
    }
    Ok(DesignMatrix::new(p, p, values)?)
}

fn analyze_df(cfg: &DfConfig, seed: u64, out: &mut String) -> Result<(), CliError> {
    if cfg.sparsity > cfg.p {
        return Err(CliError::Validation(format!(
            "sparsity {} exceeds feature count {}",
            cfg.sparsity, cfg.p
        )));
    }
    let x = canonical_design(cfg.p)?;
    let certified = x.certify_orthonormal(1e-10)?;
    let root = (cfg.p as f64).sqrt();
    let mut f = vec![0.0; cfg.p];
    for fv in f.iter_mut().take(cfg.sparsity) {
        *fv = cfg.beta * root;
    }

    let fs = df_monte_carlo(&f, cfg.sigma2, cfg.replicates, seed, &mut |y| {
        Ok(fs_fit(&x, y, cfg.k)?.fitted)
    })?;
    let _ = writeln!(out, "df_fs,{},{}", fs.df, fs.stderr);

    if let Some(m) = cfg.m {
        let table = exact_weight_table(cfg.k, m, cfg.p)?;
        let efs = df_monte_carlo(&f, cfg.sigma2, cfg.replicates, seed, &mut |y| {
            let beta = certified.beta_hat(y)?;
            let ordering = FeatureOrdering::from_beta_hat(&beta)?;
            let coef = efs_exact_orthogonal(&ordering, &table)?;
            x.product(&coef)
        })?;
        let gap_se = (fs.stderr * fs.stderr + efs.stderr * efs.stderr).sqrt();
        let _ = writeln!(out, "df_efs,{},{}", efs.df, efs.stderr);
        let _ = writeln!(out, "df_gap,{},{gap_se}", efs.df - fs.df);
    }
    Ok(())
}

fn analyze_gap(cfg: &GapConfig, out: &mut String) -> Result<(), CliError> {
    let beta_sq: Vec<f64> = match &cfg.beta_sq {
        Some(profile) => {
            if profile.len() != cfg.p {
                return Err(CliError::Validation(format!(
                    "beta_sq has {} entries, expected p = {}",
                    profile.len(),
                    cfg.p
                )));
            }
            if profile.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(CliError::Validation(
                    "beta_sq entries must be finite and non-negative".into(),
                ));
            }
            profile.clone()
        }
        None => (1..=cfg.p).map(|j| 1.0 / j as f64).collect(),
    };
    let beta: Vec<f64> = beta_sq.iter().map(|v| v.sqrt()).collect();
    let ordering = FeatureOrdering::from_beta_hat(&beta)?;

    let mut best = f64::NEG_INFINITY;
    let mut best_m = 0usize;
    for m in 1..=cfg.p {
        let table = exact_weight_table(cfg.k, m, cfg.p)?;
        let gap = training_gap(&ordering, &table)?;
        if gap > best {
            best = gap;
            best_m = m;
        }
    }
    let _ = writeln!(out, "best_gap,{best},");
    let _ = writeln!(out, "best_m,{best_m},");

    if 2 * cfg.k <= cfg.p {
        let sorted = ordering.beta_sorted();
        let first: f64 =
            sorted[..cfg.k].iter().map(|b| b * b).sum::<f64>() / cfg.k as f64;
        let second: f64 = sorted[cfg.k..2 * cfg.k].iter().map(|b| b * b).sum::<f64>()
            / cfg.k as f64;
        if first > 0.0 {
            let _ = writeln!(out, "block_bound,{},", 0.25 * second * second / first);
        }
    }
    Ok(())
}

fn analyze_majorization(cfg: &MajorizationConfig, out: &mut String) -> Result<(), CliError> {
    let grid: Vec<usize> = match &cfg.m_grid {
        Some(g) => g.clone(),
        None => (1..=cfg.p).collect(),
    };
    let tables: Result<Vec<_>, _> =
        grid.iter().map(|&m| exact_weight_table(cfg.k, m, cfg.p)).collect();
    let report = majorization_check(&tables?, 1e-10)?;
    let _ = writeln!(out, "holds,{},", u8::from(report.holds));
    let _ = writeln!(out, "worst_violation,{},", report.worst_violation);
    let _ = writeln!(out, "pairs,{},", report.pairs);
    Ok(())
}

fn analyze_escape(cfg: &EscapeConfig, seed: u64, out: &mut String) -> Result<(), CliError> {
    if cfg.runs < 2 {
        return Err(CliError::Validation(format!(
            "need at least two runs for a standard error, got {}",
            cfg.runs
        )));
    }
    let (x, y) = build_escape_design(cfg.n, cfg.p, cfg.beta, cfg.zeta)?;
    let first_pick = fs_fit(&x, &y, 1)?.selected[0] + 1; // 1-based in reports
    let fs_error = fs_fit(&x, &y, cfg.k)?.train_mse;

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for run in 0..cfg.runs {
        let err = efs_base_fit(&x, &y, cfg.k, cfg.m, seed, run as u64)?.train_mse;
        sum += err;
        sumsq += err * err;
    }
    let runs = cfg.runs as f64;
    let mean = sum / runs;
    let var = ((sumsq / runs) - mean * mean).max(0.0) * runs / (runs - 1.0);
    let se = (var / runs).sqrt();

    let _ = writeln!(out, "fs_error,{fs_error},");
    let _ = writeln!(out, "efs_mean_error,{mean},{se}");
    let _ = writeln!(out, "first_pick,{first_pick},");
    Ok(())
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

fn simulate_csv(cfg: SimulateConfig) -> Result<String, CliError> {
    let config = ExperimentConfig {
        n: cfg.n,
        p: cfg.p,
        rho: cfg.rho,
        sparsity: cfg.sparsity,
        snr: cfg.snr,
        k_max: cfg.k_max,
        b: cfg.b,
        m_grid: cfg.m_grid,
        folds: cfg.folds,
        seed: cfg.seed,
        replicates: cfg.replicates,
    };
    let result = run_experiment(&config, &pool::ThreadPool::from_env())?;
    let mut out = String::from("k,method,chosen_m,df,df_se,train_mse,train_mse_se\n");
    for row in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.k, row.method, row.chosen_m, row.df, row.df_se, row.train_mse, row.train_mse_se
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// plumbing
// ---------------------------------------------------------------------

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

/// Writes through a dot-prefixed sibling temp file plus rename, so a
/// failed run never leaves a truncated output in place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("invalid output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.partial", name.to_string_lossy()));
    std::fs::write(&tmp, contents)
        .map_err(|e| io_err(&format!("writing {}", tmp.display()), e))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| io_err(&format!("renaming into {}", path.display()), e))?;
    Ok(())
}
