//! Diagnostics built on top of the fitting routines: Monte Carlo degrees
//! of freedom, the weight-based df decomposition, the training-error gap
//! between plain and randomized selection, optimism-corrected prediction
//! error, majorization checks across subset sizes, and the elastic-net
//! comparison map.
//!
//! Everything here is deterministic given a seed and follows the same
//! `1/n` inner-product convention as the fitting code.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::greedy::{DesignMatrix, FeatureOrdering};
use crate::rng::{self, tag};
use crate::weights::WeightTable;
use crate::Result;

/// Monte Carlo estimate of effective degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfEstimate {
    /// Mean of the per-replicate covariance statistic.
    pub df: f64,
    /// Standard error of that mean.
    pub stderr: f64,
    /// Number of noise replicates averaged.
    pub replicates: usize,
}

/// Estimates degrees of freedom of an arbitrary fitting rule by the
/// covariance identity `df = sum_i cov(y_i, fitted_i) / sigma2`.
///
/// Each replicate draws `y = true_f + eps` with `eps ~ N(0, sigma2 I)`
/// from its own substream of `seed`, calls `fitter` on `y`, and records
/// `eps' fitted / sigma2`; the estimate is the mean over replicates with
/// its standard error. The fitter must return fitted values of the same
/// length as `true_f`.
pub fn df_monte_carlo(
    true_f: &[f64],
    sigma2: f64,
    replicates: usize,
    seed: u64,
    fitter: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<DfEstimate> {
    let n = true_f.len();
    if n == 0 {
        return Err(Error::invalid("true_f", format_args!("need at least one observation")));
    }
    if true_f.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("true_f", format_args!("mean values must be finite")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid("sigma2", format_args!("noise variance must be positive, got {sigma2}")));
    }
    if replicates < 2 {
        return Err(Error::invalid(
            "replicates",
            format_args!("need at least two replicates for a standard error, got {replicates}"),
        ));
    }
    let sd = libm::sqrt(sigma2);
    let mut eps = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for r in 0..replicates {
        let mut stream = rng::stream(seed, tag::DF_NOISE, r as u64);
        rng::fill_standard_normal(&mut stream, &mut eps);
        for ((yi, &fi), &ei) in y.iter_mut().zip(true_f).zip(&eps) {
            *yi = fi + sd * ei;
        }
        let fitted = fitter(&y)?;
        if fitted.len() != n {
            return Err(Error::DimensionMismatch { what: "fitted values", expected: n, got: fitted.len() });
        }
        let t = eps.iter().zip(&fitted).map(|(&e, &f)| e * f).sum::<f64>() * sd / sigma2;
        sum += t;
        sumsq += t * t;
    }
    let r = replicates as f64;
    let mean = sum / r;
    let var = ((sumsq / r) - mean * mean).max(0.0) * r / (r - 1.0);
    Ok(DfEstimate { df: mean, stderr: libm::sqrt(var / r), replicates })
}

/// Predicts the randomized ensemble's degrees of freedom from the
/// unrestricted path's df profile and the selection weights.
///
/// `fs_df[j - 1]` must hold the degrees of freedom of plain forward
/// selection stopped after `j` steps, for `j = 1..=p`. The prediction is
/// `sum_j w_j (fs_df[j] - fs_df[j-1])` with `fs_df[0] = 0`: each rank's
/// marginal df contribution enters weighted by how often that rank is
/// selected. Weights sum to the step count, so a linear profile
/// `fs_df[j] = j` predicts exactly `k`.
pub fn df_decomposition(table: &WeightTable, fs_df: &[f64]) -> Result<f64> {
    if fs_df.len() != table.p() {
        return Err(Error::DimensionMismatch {
            what: "df profile",
            expected: table.p(),
            got: fs_df.len(),
        });
    }
    if fs_df.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("fs_df", format_args!("df values must be finite")));
    }
    let mut out = 0.0;
    let mut prev = 0.0;
    for (w, &t) in table.weights().iter().zip(fs_df) {
        out += w * (t - prev);
        prev = t;
    }
    Ok(out)
}

/// Training-error gap between plain selection and the infinite ensemble
/// on an orthonormal design.
///
/// With coefficients ordered by magnitude, plain selection keeps exactly
/// the top `k` while the ensemble average shrinks rank `j` by `w_j`. The
/// difference of their training errors telescopes to
/// `sum_{j > k} b_j^2 (1 - (1 - w_j)^2) - sum_{j <= k} b_j^2 (1 - w_j)^2`:
/// what the ensemble salvages beyond the cut minus what its shrinkage
/// gives up inside it. Zero when `m = p`; positive values mean the
/// averaged predictor fits the training data better than the greedy one.
pub fn training_gap(ordering: &FeatureOrdering, table: &WeightTable) -> Result<f64> {
    if ordering.len() != table.p() {
        return Err(Error::DimensionMismatch {
            what: "ordering",
            expected: table.p(),
            got: ordering.len(),
        });
    }
    let k = table.k();
    let mut gap = 0.0;
    for (idx, (&b, &w)) in ordering.beta_sorted().iter().zip(table.weights()).enumerate() {
        let b2 = b * b;
        let miss = 1.0 - w;
        if idx < k {
            gap -= b2 * miss * miss;
        } else {
            gap += b2 * (1.0 - miss * miss);
        }
    }
    Ok(gap)
}

/// Training error, optimism, and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDecomposition {
    /// In-sample mean squared error.
    pub train_mse: f64,
    /// Expected gap between in-sample and fixed-design prediction error,
    /// `2 sigma2 df / n`.
    pub optimism: f64,
    /// `train_mse + optimism`, the optimism-corrected prediction error.
    pub prediction: f64,
}

/// Corrects a training error for selection optimism via the covariance
/// penalty `2 sigma2 df / n`.
///
/// The returned `prediction` field is exactly `train_mse + optimism`.
pub fn prediction_decomposition(
    train_mse: f64,
    df: f64,
    sigma2: f64,
    n: usize,
) -> Result<ErrorDecomposition> {
    if !(train_mse >= 0.0) || !train_mse.is_finite() {
        return Err(Error::invalid("train_mse", format_args!("training error must be non-negative, got {train_mse}")));
    }
    if !df.is_finite() {
        return Err(Error::invalid("df", format_args!("degrees of freedom must be finite")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid("sigma2", format_args!("noise variance must be positive, got {sigma2}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", format_args!("need at least one observation")));
    }
    let optimism = 2.0 * sigma2 * df / n as f64;
    Ok(ErrorDecomposition { train_mse, optimism, prediction: train_mse + optimism })
}

/// Outcome of checking prefix dominance across a family of weight tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorizationReport {
    /// True when every comparison held within tolerance.
    pub holds: bool,
    /// Largest observed violation of prefix dominance (zero when none).
    pub worst_violation: f64,
    /// Number of table pairs compared.
    pub pairs: usize,
}

/// Checks that larger candidate subsets concentrate selection mass on
/// earlier ranks.
///
/// All tables must share `k` and `p`. For every pair with subset sizes
/// `m_a <= m_b`, each prefix sum of the `m_a` table must not exceed the
/// matching prefix sum of the `m_b` table by more than `tol`; total mass
/// is shared, so this is majorization of the smaller-subset profile by
/// the larger one.
pub fn majorization_check(tables: &[WeightTable], tol: f64) -> Result<MajorizationReport> {
    if tables.len() < 2 {
        return Err(Error::invalid("tables", format_args!("need at least two tables to compare")));
    }
    if !(tol >= 0.0) {
        return Err(Error::invalid("tol", format_args!("tolerance must be non-negative, got {tol}")));
    }
    let (k, p) = (tables[0].k(), tables[0].p());
    for t in tables {
        if t.k() != k || t.p() != p {
            return Err(Error::invalid(
                "tables",
                format_args!("all tables must share k and p; found ({}, {}) next to ({k}, {p})", t.k(), t.p()),
            ));
        }
    }
    let mut order: Vec<usize> = (0..tables.len()).collect();
    order.sort_by_key(|&i| tables[i].m());
    let prefix: Vec<Vec<f64>> = tables
        .iter()
        .map(|t| {
            t.weights()
                .iter()
                .scan(0.0, |acc, &w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for a in 0..order.len() {
        for b in a + 1..order.len() {
            let (small, large) = (&prefix[order[a]], &prefix[order[b]]);
            pairs += 1;
            for j in 0..p {
                let excess = small[j] - large[j];
                if excess > worst {
                    worst = excess;
                }
            }
        }
    }
    Ok(MajorizationReport { holds: worst <= tol, worst_violation: worst, pairs })
}

/// Elastic-net coefficient map for an orthonormal design: soft-threshold
/// each least-squares coefficient at `lambda1 / 2`, then shrink by
/// `1 / (1 + lambda2)`.
pub fn elastic_net_orthogonal(beta_hat: &[f64], lambda1: f64, lambda2: f64) -> Result<Vec<f64>> {
    if beta_hat.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("beta_hat", format_args!("coefficients must be finite")));
    }
    if !(lambda1 >= 0.0) || !lambda1.is_finite() {
        return Err(Error::invalid("lambda1", format_args!("penalty must be non-negative, got {lambda1}")));
    }
    if !(lambda2 >= 0.0) || !lambda2.is_finite() {
        return Err(Error::invalid("lambda2", format_args!("penalty must be non-negative, got {lambda2}")));
    }
    let cut = lambda1 / 2.0;
    let scale = 1.0 / (1.0 + lambda2);
    Ok(beta_hat
        .iter()
        .map(|&b| {
            let mag = (b.abs() - cut).max(0.0);
            b.signum() * mag * scale
        })
        .collect())
}

/// Smallest worst-coordinate distance between a target coefficient vector
/// and the elastic-net family over a penalty grid.
///
/// For each `(lambda1, lambda2)` pair from the supplied grids the
/// elastic-net map is applied to `beta_hat` and compared to `target` in
/// the max norm; the minimum over the grid comes back. A strictly
/// positive floor over a fine grid is evidence the target is outside the
/// family.
pub fn elastic_net_match_gap(
    beta_hat: &[f64],
    target: &[f64],
    lambda1_grid: &[f64],
    lambda2_grid: &[f64],
) -> Result<f64> {
    if target.len() != beta_hat.len() {
        return Err(Error::DimensionMismatch {
            what: "target coefficients",
            expected: beta_hat.len(),
            got: target.len(),
        });
    }
    if lambda1_grid.is_empty() || lambda2_grid.is_empty() {
        return Err(Error::invalid("grid", format_args!("penalty grids must be non-empty")));
    }
    let mut best = f64::INFINITY;
    for &l1 in lambda1_grid {
        for &l2 in lambda2_grid {
            let mapped = elastic_net_orthogonal(beta_hat, l1, l2)?;
            let dev = mapped
                .iter()
                .zip(target)
                .map(|(&a, &b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if dev < best {
                best = dev;
            }
        }
    }
    Ok(best)
}

/// Builds the decoy design on which greedy selection provably wastes its
/// first step.
///
/// Columns `1..p-1` are scaled canonical directions; the last column
/// blends the two signal directions with a fresh one, so it carries the
/// largest response correlation while spanning none of the secondary
/// signal. The response puts weight `beta` on the two true directions and
/// `zeta` on each of columns `3..p-1`. Greedy selection must open with
/// the decoy and then spends three steps covering the main signal;
/// `zeta < beta / sqrt(6)` keeps that ordering strict, and the training
/// error of a `k >= 3`-step greedy fit is exactly `(p - k) zeta^2`.
/// Returns the design and response; requires `n >= p` so all directions
/// are realizable.
pub fn build_escape_design(
    n: usize,
    p: usize,
    beta: f64,
    zeta: f64,
) -> Result<(DesignMatrix, Vec<f64>)> {
    if p < 5 {
        return Err(Error::invalid("p", format_args!("need at least five features, got {p}")));
    }
    if n < p {
        return Err(Error::invalid("n", format_args!("need n >= p, got n = {n}, p = {p}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid("beta", format_args!("signal size must be positive, got {beta}")));
    }
    let limit = beta / libm::sqrt(6.0);
    if !(zeta > 0.0 && zeta < limit) {
        return Err(Error::invalid(
            "zeta",
            format_args!("secondary signal must lie in (0, beta/sqrt(6)) = (0, {limit}), got {zeta}"),
        ));
    }
    let root = libm::sqrt(n as f64);
    let mut values = vec![0.0; n * p];
    for j in 0..p - 1 {
        values[j * n + j] = root;
    }
    // Last column: (x_1 + x_2 + u) / sqrt(3) with u along the p-th axis.
    let inv = root / libm::sqrt(3.0);
    let last = (p - 1) * n;
    values[last] = inv;
    values[last + 1] = inv;
    values[last + p - 1] = inv;
    let x = DesignMatrix::new(n, p, values)?;
    let mut y = vec![0.0; n];
    y[0] = beta * root;
    y[1] = beta * root;
    for j in 2..p - 1 {
        y[j] = zeta * root;
    }
    Ok((x, y))
}
