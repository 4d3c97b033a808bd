//! Simulation laboratory: correlated Gaussian designs, noise calibration
//! from a target signal-to-noise ratio, cross-validated choice of the
//! candidate subset size, and the paired experiment that measures degrees
//! of freedom and training error for plain and randomized selection side
//! by side.
//!
//! Reproducibility contract: every random quantity is drawn from a
//! substream keyed by the experiment seed, a fixed purpose tag, and an
//! index, so results are independent of scheduling and a run can be
//! reproduced from its configuration alone. Paired comparisons reuse the
//! same noise and the same candidate streams across methods and subset
//! sizes (common random numbers), and candidate draws consume randomness
//! at a data-independent rate, so a deep run shares its prefix with a
//! shallow one bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::exec::Executor;
use crate::greedy::{DesignMatrix, Engine};
use crate::rng::{self, tag};
use crate::Result;

/// Full description of one paired degrees-of-freedom / training-error
/// experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Observations per design.
    pub n: usize,
    /// Features.
    pub p: usize,
    /// Lag-one correlation of neighboring features.
    pub rho: f64,
    /// Number of leading features carrying unit signal.
    pub sparsity: usize,
    /// Target ratio of signal variance to noise variance.
    pub snr: f64,
    /// Deepest selection path measured; statistics come back for every
    /// step count up to this.
    pub k_max: usize,
    /// Ensemble size for the randomized method.
    pub b: usize,
    /// Candidate subset sizes offered to cross-validation; `None` uses
    /// [`default_m_grid`].
    pub m_grid: Option<Vec<usize>>,
    /// Cross-validation folds.
    pub folds: usize,
    /// Master seed; every random stream in the experiment derives from it.
    pub seed: u64,
    /// Monte Carlo replicates for the df/error phase.
    pub replicates: usize,
}

/// Which selector a result row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Plain forward selection.
    Fs,
    /// Randomized ensemble with the cross-validated subset size.
    Efs,
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Method::Fs => "fs",
            Method::Efs => "efs",
        })
    }
}

/// Aggregated statistics for one method at one path depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    /// Steps taken.
    pub k: usize,
    /// Which selector.
    pub method: Method,
    /// Candidate subset size in force (always `p` for plain selection).
    pub chosen_m: usize,
    /// Mean degrees-of-freedom statistic across replicates.
    pub df: f64,
    /// Standard error of `df`.
    pub df_se: f64,
    /// Mean training error across replicates.
    pub train_mse: f64,
    /// Standard error of `train_mse`.
    pub train_mse_se: f64,
}

/// Everything a finished experiment reports.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Noise variance implied by the configured signal-to-noise ratio.
    pub sigma2: f64,
    /// Cross-validated subset size per depth (`m_hat[k - 1]` for `k` steps).
    pub m_hat: Vec<usize>,
    /// Two rows per depth, plain selection first.
    pub rows: Vec<ExperimentRow>,
}

/// Cross-validation error curves over a subset-size grid.
///
/// `mse()[i][k - 1]` is the average held-out squared error per point of
/// the size-`grid()[i]` randomized fit stopped after `k` steps, averaged
/// over folds and base runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCurves {
    grid: Vec<usize>,
    mse: Vec<Vec<f64>>,
}

impl CvCurves {
    /// Subset sizes the curves cover, ascending.
    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    /// Held-out error curves, one per grid entry, indexed by depth.
    pub fn mse(&self) -> &[Vec<f64>] {
        &self.mse
    }

    /// Depths covered by the curves.
    pub fn k_max(&self) -> usize {
        self.mse.first().map_or(0, Vec::len)
    }

    /// Subset size with the lowest held-out error at depth `k`; ties go
    /// to the smaller size.
    ///
    /// # Panics
    /// If `k` is zero or beyond the computed depth.
    pub fn select(&self, k: usize) -> usize {
        assert!(k >= 1 && k <= self.k_max(), "depth {k} outside computed range");
        let mut best = (self.grid[0], self.mse[0][k - 1]);
        for (i, &m) in self.grid.iter().enumerate().skip(1) {
            let v = self.mse[i][k - 1];
            if v < best.1 {
                best = (m, v);
            }
        }
        best.0
    }
}

/// Geometric grid of candidate subset sizes from 2 to `p`, at most twelve
/// distinct values.
pub fn default_m_grid(p: usize) -> Vec<usize> {
    if p <= 1 {
        return if p == 1 { vec![1] } else { Vec::new() };
    }
    let lo = libm::log(2.0);
    let hi = libm::log(p as f64);
    let mut grid = Vec::new();
    for i in 0..12 {
        let t = lo + (hi - lo) * i as f64 / 11.0;
        let m = (libm::round(libm::exp(t)) as usize).clamp(1, p);
        if grid.last() != Some(&m) {
            grid.push(m);
        }
    }
    grid
}

/// Noise variance that realizes the requested signal-to-noise ratio when
/// the first `sparsity` features carry unit coefficients and neighboring
/// features correlate at lag-one strength `rho`.
///
/// The signal variance of that coefficient pattern is
/// `s + 2 sum_{d=1}^{s-1} (s - d) rho^d`; dividing by `snr` gives the
/// noise variance.
pub fn calibrate_sigma2(rho: f64, sparsity: usize, snr: f64) -> Result<f64> {
    if sparsity == 0 {
        return Err(Error::invalid("sparsity", format_args!("need at least one signal feature")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid("rho", format_args!("correlation must satisfy |rho| < 1, got {rho}")));
    }
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::invalid("snr", format_args!("signal-to-noise ratio must be positive, got {snr}")));
    }
    let mut signal = sparsity as f64;
    let mut pw = 1.0;
    for d in 1..sparsity {
        pw *= rho;
        signal += 2.0 * (sparsity - d) as f64 * pw;
    }
    Ok(signal / snr)
}

/// Gaussian design whose features follow a lag-one autoregression within
/// each row: unit variances, `corr(x_j, x_l) = rho^|j - l|`.
pub fn gen_banded_gaussian(n: usize, p: usize, rho: f64, seed: u64) -> Result<DesignMatrix> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("n,p", format_args!("design must be non-empty, got {n} x {p}")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid("rho", format_args!("correlation must satisfy |rho| < 1, got {rho}")));
    }
    let mut vals = vec![0.0; n * p];
    let mut stream = rng::stream(seed, tag::DESIGN, 0);
    rng::fill_standard_normal(&mut stream, &mut vals);
    let lam = libm::sqrt(1.0 - rho * rho);
    for row in vals.chunks_mut(p) {
        for j in 1..p {
            row[j] = rho * row[j - 1] + lam * row[j];
        }
    }
    DesignMatrix::from_rows(n, p, &vals)
}

/// Contiguous fold boundaries: fold `f` covers `[f n / folds, (f+1) n / folds)`.
pub(crate) fn fold_boundaries(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds).map(|f| (f * n / folds, (f + 1) * n / folds)).collect()
}

/// Rows of `x` restricted to `rows`, in the given order.
fn subset_rows(x: &DesignMatrix, rows: &[usize]) -> DesignMatrix {
    let nr = rows.len();
    let mut vals = vec![0.0; nr * x.p()];
    for j in 0..x.p() {
        let col = x.column(j);
        for (i, &r) in rows.iter().enumerate() {
            vals[j * nr + i] = col[r];
        }
    }
    DesignMatrix::new(nr, x.p(), vals).expect("row subset of a valid design is valid")
}

/// One randomized run on training rows with held-out squared error
/// recorded after every step.
///
/// The held-out prediction is updated through the same triangular
/// relations that express each selected column in the training basis, so
/// the whole depth profile costs one pass.
fn heldout_sse_path(
    xt: &DesignMatrix,
    yt: &[f64],
    k: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
    xh: &DesignMatrix,
    yh: &[f64],
) -> Result<Vec<f64>> {
    let mut eng = Engine::new(xt, yt)?;
    let mut pool: Vec<usize> = (0..xt.p()).collect();
    let nh = xh.n();
    let mut basis_at_held: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut predicted = vec![0.0; nh];
    let mut out = vec![0.0; k];
    for step in 0..k {
        let m_eff = m.min(pool.len());
        rng::sample_prefix(rng, &mut pool, m_eff);
        let j = eng
            .best_candidate(&pool[..m_eff])
            .ok_or(Error::RankExhausted { step })?;
        eng.add(j)?;
        let pos = pool.iter().position(|&v| v == j).expect("chosen from pool");
        pool.swap_remove(pos);
        // Evaluate the new basis function at the held rows: subtract the
        // projections onto earlier basis functions, then normalize.
        let mut col = xh.column(j).to_vec();
        for (i, qh) in basis_at_held.iter().enumerate() {
            let rij = eng.qx[i][j];
            for (cv, &qv) in col.iter_mut().zip(qh) {
                *cv -= rij * qv;
            }
        }
        let rd = eng.rdiag[step];
        for cv in col.iter_mut() {
            *cv /= rd;
        }
        let z = eng.z[step];
        for (pv, &qv) in predicted.iter_mut().zip(&col) {
            *pv += z * qv;
        }
        basis_at_held.push(col);
        out[step] = yh
            .iter()
            .zip(&predicted)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
    }
    Ok(out)
}

fn validate_cv(
    x: &DesignMatrix,
    y: &[f64],
    k_max: usize,
    grid: &[usize],
    b: usize,
    folds: usize,
) -> Result<()> {
    let (n, p) = (x.n(), x.p());
    if y.len() != n {
        return Err(Error::DimensionMismatch { what: "response", expected: n, got: y.len() });
    }
    if k_max < 1 || k_max > p {
        return Err(Error::invalid("k_max", format_args!("depth must be in 1..={p}, got {k_max}")));
    }
    if b < 1 {
        return Err(Error::invalid("b", format_args!("need at least one run per setting")));
    }
    if folds < 2 || folds > n {
        return Err(Error::invalid("folds", format_args!("folds must be in 2..={n}, got {folds}")));
    }
    if grid.is_empty() {
        return Err(Error::invalid("m_grid", format_args!("subset-size grid must be non-empty")));
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("m_grid", format_args!("grid must be strictly increasing")));
        }
    }
    if grid[0] < 1 || *grid.last().expect("non-empty") > p {
        return Err(Error::invalid("m_grid", format_args!("grid entries must lie in 1..={p}")));
    }
    let max_fold = fold_boundaries(n, folds)
        .iter()
        .map(|&(lo, hi)| hi - lo)
        .max()
        .expect("at least two folds");
    if n - max_fold < k_max {
        return Err(Error::invalid(
            "k_max",
            format_args!("training folds have {} rows, fewer than {k_max} steps", n - max_fold),
        ));
    }
    Ok(())
}

/// Held-out error curves for every grid size and every depth up to
/// `k_max`, from one pass of fold-wise randomized fits.
///
/// Rows are shuffled once (a substream of `seed`) and cut into
/// contiguous folds. Every `(fold, grid entry, run)` triple has its own
/// candidate substream, so curves for different depths come from the
/// same fits: the depth-`k` column equals what a separate pass with
/// `k_max = k` would produce, which keeps selections made from these
/// curves consistent across depths.
pub fn cv_curves(
    x: &DesignMatrix,
    y: &[f64],
    k_max: usize,
    grid: &[usize],
    b: usize,
    folds: usize,
    seed: u64,
) -> Result<CvCurves> {
    validate_cv(x, y, k_max, grid, b, folds)?;
    let n = x.n();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut frng = rng::stream(seed, tag::FOLDS, 0);
    rng::sample_prefix(&mut frng, &mut perm, n);
    let mut sse = vec![vec![0.0; k_max]; grid.len()];
    for (f, &(lo, hi)) in fold_boundaries(n, folds).iter().enumerate() {
        let held = &perm[lo..hi];
        let train: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
        let xt = subset_rows(x, &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let xh = subset_rows(x, held);
        let yh: Vec<f64> = held.iter().map(|&i| y[i]).collect();
        for (mi, &m) in grid.iter().enumerate() {
            for run in 0..b {
                let idx = ((f * grid.len() + mi) * b + run) as u64;
                let mut crng = rng::stream(seed, tag::CV_CANDIDATES, idx);
                let path = heldout_sse_path(&xt, &yt, k_max, m, &mut crng, &xh, &yh)?;
                for (acc, v) in sse[mi].iter_mut().zip(path) {
                    *acc += v;
                }
            }
        }
    }
    let scale = 1.0 / (n as f64 * b as f64);
    for row in &mut sse {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(CvCurves { grid: grid.to_vec(), mse: sse })
}

/// Cross-validated subset size for a `k`-step randomized fit: the grid
/// entry with the lowest held-out error, smaller size on ties.
///
/// Equals `cv_curves(...).select(k)` for any deeper pass, since the
/// underlying fits share prefixes across depths.
pub fn cv_select_m(
    x: &DesignMatrix,
    y: &[f64],
    k: usize,
    grid: &[usize],
    b: usize,
    folds: usize,
    seed: u64,
) -> Result<usize> {
    Ok(cv_curves(x, y, k, grid, b, folds, seed)?.select(k))
}

fn validate_config(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.sparsity > cfg.p {
        return Err(Error::invalid(
            "sparsity",
            format_args!("cannot place {} signal features among {}", cfg.sparsity, cfg.p),
        ));
    }
    if cfg.replicates < 2 {
        return Err(Error::invalid(
            "replicates",
            format_args!("need at least two replicates for standard errors, got {}", cfg.replicates),
        ));
    }
    Ok(())
}

/// Mean squared error, degrees of freedom, and their standard errors for
/// plain and randomized forward selection at every depth up to `k_max`,
/// under a common correlated Gaussian design.
///
/// Protocol, all driven by `config.seed`:
/// 1. draw the design once and calibrate the noise variance to the
///    requested signal-to-noise ratio;
/// 2. draw one calibration response and choose the subset size per depth
///    by cross-validation in a single shared pass ([`cv_curves`]);
/// 3. for each replicate, draw fresh noise and measure both methods on
///    the same response — the randomized ensemble reuses one set of
///    candidate streams across depths, and depths that share a chosen
///    subset size share their base runs outright.
///
/// When cross-validation picks the full feature set the randomized
/// method coincides with plain selection exactly, and its rows are
/// copies of the plain rows rather than re-estimates.
///
/// Replicates are distributed by `exec`; results do not depend on the
/// scheduling.
pub fn run_experiment(config: &ExperimentConfig, exec: &dyn Executor) -> Result<ExperimentResult> {
    validate_config(config)?;
    let (n, p, k_max, b) = (config.n, config.p, config.k_max, config.b);
    let default_grid;
    let grid: &[usize] = match &config.m_grid {
        Some(g) => g,
        None => {
            default_grid = default_m_grid(p);
            &default_grid
        }
    };
    let x = gen_banded_gaussian(n, p, config.rho, config.seed)?;
    let sigma2 = calibrate_sigma2(config.rho, config.sparsity, config.snr)?;
    let sd = libm::sqrt(sigma2);
    let mut signal = vec![0.0; n];
    for j in 0..config.sparsity {
        for (sv, &v) in signal.iter_mut().zip(x.column(j)) {
            *sv += v;
        }
    }

    // Depth-wise subset size from one calibration response.
    let mut noise = vec![0.0; n];
    let mut crng = rng::stream(config.seed, tag::CALIBRATION, 0);
    rng::fill_standard_normal(&mut crng, &mut noise);
    let y_cal: Vec<f64> = signal.iter().zip(&noise).map(|(&s, &e)| s + sd * e).collect();
    let curves = cv_curves(&x, &y_cal, k_max, grid, b, config.folds, config.seed)?;
    let m_hat: Vec<usize> = (1..=k_max).map(|k| curves.select(k)).collect();

    // Depths sharing a subset size share their ensemble fits.
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, &mh) in m_hat.iter().enumerate() {
        match groups.iter_mut().find(|(m, _)| *m == mh) {
            Some((_, ks)) => ks.push(i + 1),
            None => groups.push((mh, vec![i + 1])),
        }
    }

    // Per replicate: df statistic and training error for both methods at
    // every depth, laid out [fs_df | fs_mse | efs_df | efs_mse].
    let width = 4 * k_max;
    let mut out = vec![0.0; config.replicates * width];
    let seed = config.seed;
    let job = move |r: usize, block: &mut [f64]| {
        if replicate_stats(&x, &signal, sd, sigma2, k_max, b, &groups, seed, r, block).is_err() {
            for v in block.iter_mut() {
                *v = f64::NAN;
            }
        }
    };
    exec.run(config.replicates, width, &mut out, &job);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "replicates",
            format_args!("a replicate exhausted the design rank mid-path; reduce k_max"),
        ));
    }

    let reps = config.replicates as f64;
    let stat = |offset: usize, k: usize| -> (f64, f64) {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for r in 0..config.replicates {
            let v = out[r * width + offset + (k - 1)];
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / reps;
        let var = ((sumsq / reps) - mean * mean).max(0.0) * reps / (reps - 1.0);
        (mean, libm::sqrt(var / reps))
    };
    let mut rows = Vec::with_capacity(2 * k_max);
    for k in 1..=k_max {
        let (df, df_se) = stat(0, k);
        let (mse, mse_se) = stat(k_max, k);
        rows.push(ExperimentRow {
            k,
            method: Method::Fs,
            chosen_m: p,
            df,
            df_se,
            train_mse: mse,
            train_mse_se: mse_se,
        });
        let (df, df_se) = stat(2 * k_max, k);
        let (mse, mse_se) = stat(3 * k_max, k);
        rows.push(ExperimentRow {
            k,
            method: Method::Efs,
            chosen_m: m_hat[k - 1],
            df,
            df_se,
            train_mse: mse,
            train_mse_se: mse_se,
        });
    }
    Ok(ExperimentResult { sigma2, m_hat, rows })
}

/// Plain dot product (no `1/n`), for covariance statistics.
fn plain_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Statistics for one noise replicate, written into its output block.
#[allow(clippy::too_many_arguments)]
fn replicate_stats(
    x: &DesignMatrix,
    signal: &[f64],
    sd: f64,
    sigma2: f64,
    k_max: usize,
    b: usize,
    groups: &[(usize, Vec<usize>)],
    seed: u64,
    r: usize,
    block: &mut [f64],
) -> Result<()> {
    let (n, p) = (x.n(), x.p());
    let mut eps = vec![0.0; n];
    let mut nrng = rng::stream(seed, tag::REPLICATE_NOISE, r as u64);
    rng::fill_standard_normal(&mut nrng, &mut eps);
    let y: Vec<f64> = signal.iter().zip(&eps).map(|(&s, &e)| s + sd * e).collect();

    let (fs_df, rest) = block.split_at_mut(k_max);
    let (fs_mse, rest) = rest.split_at_mut(k_max);
    let (efs_df, efs_mse) = rest.split_at_mut(k_max);

    // Plain selection: one path, statistics recorded at every depth.
    let mut eng = Engine::new(x, &y)?;
    let mut pool: Vec<usize> = (0..p).collect();
    let mut tcum = 0.0;
    for l in 0..k_max {
        let j = eng.best_candidate(&pool).ok_or(Error::RankExhausted { step: l })?;
        eng.add(j)?;
        let pos = pool.iter().position(|&v| v == j).expect("chosen from pool");
        pool.swap_remove(pos);
        tcum += eng.z[l] * plain_dot(&eps, &eng.q[l]);
        fs_df[l] = tcum / sigma2;
        fs_mse[l] = eng.resid_sq;
    }

    for (m_g, ks) in groups {
        if *m_g == p {
            // Full-subset runs are plain selection exactly.
            for &k in ks {
                efs_df[k - 1] = fs_df[k - 1];
                efs_mse[k - 1] = fs_mse[k - 1];
            }
            continue;
        }
        let k_top = *ks.last().expect("group is non-empty");
        let mut fit_sum: Vec<Vec<f64>> = ks.iter().map(|_| vec![0.0; n]).collect();
        let mut t_sum = vec![0.0; ks.len()];
        for run in 0..b {
            let mut crng = rng::stream(seed, tag::BASE_CANDIDATES, (r * b + run) as u64);
            let mut eng = Engine::new(x, &y)?;
            let mut pool: Vec<usize> = (0..p).collect();
            let mut fitted = vec![0.0; n];
            let mut tc = 0.0;
            let mut gi = 0;
            for l in 0..k_top {
                let m_eff = (*m_g).min(pool.len());
                rng::sample_prefix(&mut crng, &mut pool, m_eff);
                let j = eng
                    .best_candidate(&pool[..m_eff])
                    .ok_or(Error::RankExhausted { step: l })?;
                eng.add(j)?;
                let pos = pool.iter().position(|&v| v == j).expect("chosen from pool");
                pool.swap_remove(pos);
                let z = eng.z[l];
                for (fv, &qv) in fitted.iter_mut().zip(&eng.q[l]) {
                    *fv += z * qv;
                }
                tc += z * plain_dot(&eps, &eng.q[l]);
                if gi < ks.len() && ks[gi] == l + 1 {
                    for (acc, &v) in fit_sum[gi].iter_mut().zip(&fitted) {
                        *acc += v;
                    }
                    t_sum[gi] += tc;
                    gi += 1;
                }
            }
        }
        let inv_b = 1.0 / b as f64;
        for (gi, &k) in ks.iter().enumerate() {
            efs_df[k - 1] = t_sum[gi] * inv_b / sigma2;
            efs_mse[k - 1] = y
                .iter()
                .zip(&fit_sum[gi])
                .map(|(&yv, &s)| {
                    let d = yv - s * inv_b;
                    d * d
                })
                .sum::<f64>()
                / n as f64;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
        assert!((got - want).abs() <= tol, "{what}: got {got}, want {want}");
    }

    // ---- grids and calibration -------------------------------------------

    #[test]
    fn default_grid_matches_frozen_values() {
        assert_eq!(default_m_grid(50), vec![2, 3, 4, 5, 6, 9, 12, 16, 21, 28, 37, 50]);
        assert_eq!(default_m_grid(8), vec![2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(default_m_grid(2), vec![2]);
        assert_eq!(default_m_grid(1), vec![1]);
    }

    #[test]
    fn default_grid_is_strictly_increasing_and_ends_at_p() {
        for p in 2..200 {
            let g = default_m_grid(p);
            assert!(g.len() <= 12);
            assert_eq!(*g.last().unwrap(), p);
            assert_eq!(g[0], 2);
            for w in g.windows(2) {
                assert!(w[0] < w[1], "p={p}: {g:?}");
            }
        }
    }

    #[test]
    fn noise_calibration_matches_hand_computed_values() {
        // rho = 1/2, ten signal features: signal variance 26.00390625
        // exactly in binary; snr 1/4 quadruples it.
        assert_eq!(calibrate_sigma2(0.5, 10, 1.0).unwrap(), 26.00390625);
        assert_eq!(calibrate_sigma2(0.5, 10, 0.25).unwrap(), 104.015625);
        // Independent features: signal variance is the sparsity.
        assert_eq!(calibrate_sigma2(0.0, 7, 1.0).unwrap(), 7.0);
        assert!(calibrate_sigma2(1.0, 3, 1.0).is_err());
        assert!(calibrate_sigma2(0.5, 0, 1.0).is_err());
        assert!(calibrate_sigma2(0.5, 3, 0.0).is_err());
    }

    // ---- design generator ------------------------------------------------

    #[test]
    fn banded_design_has_unit_scale_and_requested_lag_correlation() {
        let (n, p, rho) = (4000, 4, 0.6);
        let x = gen_banded_gaussian(n, p, rho, 21).unwrap();
        for j in 0..p {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            assert_close(mean, 0.0, 0.08, "column mean");
            assert_close(var, 1.0, 0.12, "column variance");
        }
        for j in 1..p {
            let a = x.column(j - 1);
            let b = x.column(j);
            let corr = a.iter().zip(b).map(|(&u, &v)| u * v).sum::<f64>() / n as f64;
            assert_close(corr, rho, 0.08, "lag-one correlation");
        }
        // Two lags apart: rho^2.
        let corr2 = x
            .column(0)
            .iter()
            .zip(x.column(2))
            .map(|(&u, &v)| u * v)
            .sum::<f64>()
            / n as f64;
        assert_close(corr2, rho * rho, 0.08, "lag-two correlation");
    }

    #[test]
    fn banded_design_is_deterministic_per_seed() {
        let a = gen_banded_gaussian(30, 5, 0.4, 9).unwrap();
        let b = gen_banded_gaussian(30, 5, 0.4, 9).unwrap();
        let c = gen_banded_gaussian(30, 5, 0.4, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(gen_banded_gaussian(10, 3, 1.0, 0).is_err());
    }

    // ---- folds -----------------------------------------------------------

    #[test]
    fn fold_boundaries_partition_evenly() {
        for (n, folds) in [(10, 3), (12, 4), (7, 2), (9, 9)] {
            let bounds = fold_boundaries(n, folds);
            assert_eq!(bounds.len(), folds);
            assert_eq!(bounds[0].0, 0);
            assert_eq!(bounds.last().unwrap().1, n);
            let mut total = 0;
            for (i, &(lo, hi)) in bounds.iter().enumerate() {
                assert!(hi > lo, "empty fold {i}");
                assert!(hi - lo <= n / folds + 1);
                if i > 0 {
                    assert_eq!(lo, bounds[i - 1].1);
                }
                total += hi - lo;
            }
            assert_eq!(total, n);
        }
    }

    // ---- cross-validation ------------------------------------------------

    #[test]
    fn cv_with_singleton_grid_returns_that_size() {
        let x = gen_banded_gaussian(40, 6, 0.3, 2).unwrap();
        let y: Vec<f64> = x.column(0).iter().zip(x.column(1)).map(|(&a, &b)| a + b).collect();
        for k in 1..=3 {
            assert_eq!(cv_select_m(&x, &y, k, &[4], 3, 4, 7).unwrap(), 4);
        }
    }

    #[test]
    fn cv_is_deterministic_and_validates() {
        let x = gen_banded_gaussian(30, 5, 0.2, 3).unwrap();
        let y: Vec<f64> = x.column(0).to_vec();
        let a = cv_curves(&x, &y, 3, &[2, 5], 4, 3, 11).unwrap();
        let b = cv_curves(&x, &y, 3, &[2, 5], 4, 3, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.mse().iter().flatten().all(|v| v.is_finite() && *v >= 0.0));

        assert!(cv_curves(&x, &y, 0, &[2], 4, 3, 11).is_err());
        assert!(cv_curves(&x, &y, 3, &[], 4, 3, 11).is_err());
        assert!(cv_curves(&x, &y, 3, &[5, 2], 4, 3, 11).is_err());
        assert!(cv_curves(&x, &y, 3, &[2, 6], 4, 3, 11).is_err());
        assert!(cv_curves(&x, &y, 3, &[2], 0, 3, 11).is_err());
        assert!(cv_curves(&x, &y, 3, &[2], 4, 1, 11).is_err());

        // Six rows split in two folds leave three training rows: too few
        // for a four-step path.
        let tiny = gen_banded_gaussian(6, 5, 0.2, 3).unwrap();
        let ty: Vec<f64> = tiny.column(0).to_vec();
        assert!(cv_curves(&tiny, &ty, 4, &[2], 4, 2, 11).is_err(), "folds leave too few rows");
    }

    #[test]
    fn cv_depth_columns_are_prefix_consistent() {
        // The depth-k column of a deep pass equals a standalone pass at
        // depth k: selections agree no matter which depth was computed.
        let x = gen_banded_gaussian(36, 8, 0.4, 5).unwrap();
        let y: Vec<f64> = x
            .column(0)
            .iter()
            .zip(x.column(1))
            .enumerate()
            .map(|(i, (&a, &b))| 2.0 * a + b + 0.5 * libm::sin(i as f64))
            .collect();
        let grid = [2, 4, 8];
        let deep = cv_curves(&x, &y, 5, &grid, 3, 4, 13).unwrap();
        for k in 1..=5 {
            let shallow = cv_curves(&x, &y, k, &grid, 3, 4, 13).unwrap();
            for (mi, curve) in shallow.mse().iter().enumerate() {
                assert_eq!(curve[k - 1].to_bits(), deep.mse()[mi][k - 1].to_bits());
            }
            assert_eq!(cv_select_m(&x, &y, k, &grid, 3, 4, 13).unwrap(), deep.select(k));
        }
    }

    #[test]
    fn cv_prefers_full_subsets_on_noiseless_signal() {
        // Without noise, full-subset runs recover the signal exactly and
        // achieve zero held-out error; tiny subsets miss it sometimes.
        let x = gen_banded_gaussian(60, 10, 0.0, 4).unwrap();
        let y: Vec<f64> = x.column(0).iter().zip(x.column(1)).map(|(&a, &b)| 3.0 * a + 2.0 * b).collect();
        let m = cv_select_m(&x, &y, 3, &[2, 10], 8, 3, 1).unwrap();
        assert_eq!(m, 10);
    }

    // ---- the experiment --------------------------------------------------

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            n: 48,
            p: 8,
            rho: 0.3,
            sparsity: 2,
            snr: 1.0,
            k_max: 4,
            b: 6,
            m_grid: None,
            folds: 4,
            seed: 3,
            replicates: 12,
        }
    }

    #[test]
    fn experiment_reports_structured_deterministic_rows() {
        let cfg = small_config();
        let res = run_experiment(&cfg, &Sequential).unwrap();
        assert_eq!(res.sigma2, calibrate_sigma2(cfg.rho, cfg.sparsity, cfg.snr).unwrap());
        assert_eq!(res.m_hat.len(), cfg.k_max);
        assert_eq!(res.rows.len(), 2 * cfg.k_max);
        for k in 1..=cfg.k_max {
            let fs = &res.rows[2 * (k - 1)];
            let efs = &res.rows[2 * k - 1];
            assert_eq!((fs.k, fs.method, fs.chosen_m), (k, Method::Fs, cfg.p));
            assert_eq!((efs.k, efs.method, efs.chosen_m), (k, Method::Efs, res.m_hat[k - 1]));
            for row in [fs, efs] {
                assert!(row.df.is_finite() && row.train_mse >= 0.0);
                assert!(row.df_se >= 0.0 && row.train_mse_se >= 0.0);
            }
        }
        // Plain selection's training error falls with depth replicate by
        // replicate, so the means must too.
        for k in 2..=cfg.k_max {
            assert!(res.rows[2 * (k - 1)].train_mse <= res.rows[2 * (k - 2)].train_mse + 1e-12);
        }
        let again = run_experiment(&cfg, &Sequential).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn experiment_subset_choice_matches_standalone_cv() {
        // The experiment's per-depth choices must be exactly what the
        // public selection routine returns on the calibration response.
        let cfg = small_config();
        let res = run_experiment(&cfg, &Sequential).unwrap();
        let x = gen_banded_gaussian(cfg.n, cfg.p, cfg.rho, cfg.seed).unwrap();
        let sd = libm::sqrt(res.sigma2);
        let mut signal = alloc::vec![0.0; cfg.n];
        for j in 0..cfg.sparsity {
            for (sv, &v) in signal.iter_mut().zip(x.column(j)) {
                *sv += v;
            }
        }
        let mut noise = alloc::vec![0.0; cfg.n];
        let mut crng = rng::stream(cfg.seed, tag::CALIBRATION, 0);
        rng::fill_standard_normal(&mut crng, &mut noise);
        let y_cal: Vec<f64> =
            signal.iter().zip(&noise).map(|(&s, &e)| s + sd * e).collect();
        let grid = default_m_grid(cfg.p);
        for k in 1..=cfg.k_max {
            let standalone =
                cv_select_m(&x, &y_cal, k, &grid, cfg.b, cfg.folds, cfg.seed).unwrap();
            assert_eq!(res.m_hat[k - 1], standalone, "depth {k}");
        }
    }

    #[test]
    fn experiment_with_forced_full_subset_duplicates_plain_rows() {
        let mut cfg = small_config();
        cfg.m_grid = Some(alloc::vec![cfg.p]);
        let res = run_experiment(&cfg, &Sequential).unwrap();
        for k in 1..=cfg.k_max {
            let fs = &res.rows[2 * (k - 1)];
            let efs = &res.rows[2 * k - 1];
            assert_eq!(efs.chosen_m, cfg.p);
            assert_eq!(fs.df.to_bits(), efs.df.to_bits());
            assert_eq!(fs.df_se.to_bits(), efs.df_se.to_bits());
            assert_eq!(fs.train_mse.to_bits(), efs.train_mse.to_bits());
            assert_eq!(fs.train_mse_se.to_bits(), efs.train_mse_se.to_bits());
        }
    }

    #[test]
    fn experiment_validates_configuration() {
        let mut cfg = small_config();
        cfg.sparsity = 9;
        assert!(run_experiment(&cfg, &Sequential).is_err());
        let mut cfg = small_config();
        cfg.replicates = 1;
        assert!(run_experiment(&cfg, &Sequential).is_err());
        let mut cfg = small_config();
        cfg.k_max = 9;
        assert!(run_experiment(&cfg, &Sequential).is_err());
    }
}
