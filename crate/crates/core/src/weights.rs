//! Selection-probability weights for ensemble forward selection.
//!
//! Setting: features are ranked `1..=p` by decreasing least-squares
//! coefficient magnitude on an orthogonal design. One randomized forward
//! selection run performs `k` steps; each step draws a uniform subset of
//! `m` of the not-yet-selected features and selects the best-ranked feature
//! in that subset. The *weight* `w[j]` is the probability that the feature
//! of rank `j` is selected within the `k` steps. Averaging infinitely many
//! such runs multiplies the rank-`j` coefficient by exactly `w[j]`, so these
//! weights are the whole story of what the ensemble does on orthogonal
//! designs.
//!
//! This module computes the weights four ways, each on its own evidence:
//!
//! - [`exact_weight_table`] — a dynamic program over a two-term recurrence,
//!   exact up to floating-point rounding, `O(k·p)` after per-level `O(p)`
//!   coefficient sweeps;
//! - [`enumerate_weights`] — brute-force enumeration of every possible
//!   sequence of candidate subsets with exact integer counting; exponential,
//!   budget-capped, and entirely independent of the recurrence — the oracle
//!   the dynamic program is tested against;
//! - [`mc_weight_table`] — rank-only Monte Carlo simulation with binomial
//!   standard errors, optionally drawing candidates with replacement;
//! - [`asymptotic_weight`] / [`limit_weight`] — the large-`p` regime with
//!   `m/p → γ`, and its further limit along `j = k + d` as `k → ∞`.
//!
//! [`logistic_approx`] evaluates the closed-form logistic curve that the
//! asymptotic weights are sandwiched around, and [`sandwich_bounds`] /
//! [`limit_sandwich_bounds`] give the exact envelopes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::rng::{self, tag};
use crate::Result;

/// Hard cap on the number of candidate-set sequences [`enumerate_weights`]
/// will walk.
const ENUMERATION_BUDGET: u64 = 10_000_000;

///// Hard cap on series terms in [`limit_weight`]. Generous: for `γ` down to
/// `1e-3`-ish decay rates the alternating series is below `1e-16` within
/// ~270 terms.
const LIMIT_SERIES_CAP: usize = 400;

/// Exact selection weights for one `(k, m, p)` configuration.
///
/// `weights()[j - 1]` is the probability that the rank-`j` feature is
/// selected within `k` steps. Tables produced by this crate satisfy:
/// entries lie in `[0, 1]`, are non-increasing in `j`, and sum to
/// `min(k, p)` (one feature is selected per step).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    k: usize,
    m: usize,
    p: usize,
    weights: Vec<f64>,
}

impl WeightTable {
    /// Wrap an externally computed weight vector.
    ///
    /// Validates the configuration (`1 ≤ m ≤ p`, `k ≤ p`, `weights.len() ==
    /// p`) and that every entry is finite and within `[0, 1]` up to a
    /// `1e-9` slack (Monte Carlo tables may carry estimation noise, so
    /// monotonicity and total mass are *not* enforced here).
    pub fn new(k: usize, m: usize, p: usize, weights: Vec<f64>) -> Result<Self> {
        validate_config(k, m, p)?;
        if weights.len() != p {
            return Err(Error::DimensionMismatch {
                what: "weight vector length",
                expected: p,
                got: weights.len(),
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&w) {
                return Err(Error::invalid(
                    "weights",
                    format_args!("entry {} is {w:?}, outside [0, 1]", i + 1),
                ));
            }
        }
        Ok(WeightTable { k, m, p, weights })
    }

    /// Number of selection steps.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Candidate-subset size.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of ranked features.
    pub fn p(&self) -> usize {
        self.p
    }

    /// All `p` weights, index `0` holding rank `1`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of rank `j` (`1`-based).
    ///
    /// # Panics
    /// If `j` is `0` or exceeds `p`.
    pub fn weight(&self, j: usize) -> f64 {
        assert!(j >= 1 && j <= self.p, "rank {j} outside 1..={}", self.p);
        self.weights[j - 1]
    }
}

/// A Monte Carlo weight estimate with per-rank standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McWeightTable {
    /// The estimated weights.
    pub table: WeightTable,
    /// Binomial standard error of each entry, same order as the weights.
    pub stderr: Vec<f64>,
    /// Number of simulated selection runs behind the estimate.
    pub replicates: usize,
}

/// How candidate subsets are drawn in [`mc_weight_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateSampling {
    /// A uniform `m`-subset of the remaining features (the standard scheme;
    /// shrinks to the remaining-pool size when fewer than `m` are left).
    #[default]
    WithoutReplacement,
    /// `m` independent uniform draws from the remaining features, so the
    /// candidate multiset may contain repeats. A step can then see fewer
    /// than `m` distinct candidates, which mimics a subsample fraction of
    /// `1 - (1 - 1/p)^m` per step.
    WithReplacement,
}

fn validate_config(k: usize, m: usize, p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::invalid("p", format_args!("need at least one feature")));
    }
    if m == 0 || m > p {
        return Err(Error::invalid(
            "m",
            format_args!("subset size must satisfy 1 <= m <= p = {p}, got {m}"),
        ));
    }
    if k > p {
        return Err(Error::invalid(
            "k",
            format_args!("cannot select k = {k} distinct features out of p = {p}"),
        ));
    }
    Ok(())
}

fn validate_gamma(gamma: f64) -> Result<f64> {
    if !gamma.is_finite() || gamma <= 0.0 || gamma >= 1.0 {
        return Err(Error::invalid(
            "gamma",
            format_args!("subset fraction must lie strictly inside (0, 1), got {gamma}"),
        ));
    }
    // Decay rate of the geometric rank distribution: 1 - gamma = e^{-alpha}.
    Ok(-libm::log1p(-gamma))
}

/// Exact probability that rank `j` is selected within `k` steps.
///
/// Convenience wrapper around [`exact_weight_table`]; see there for the
/// semantics and cost.
pub fn exact_weight(j: usize, k: usize, m: usize, p: usize) -> Result<f64> {
    if j == 0 || j > p {
        return Err(Error::invalid(
            "j",
            format_args!("rank must lie in 1..=p = {p}, got {j}"),
        ));
    }
    Ok(exact_weight_table(k, m, p)?.weight(j))
}

/// Exact selection weights for all ranks, by dynamic programming.
///
/// The recurrence runs over `k` levels. At the level with `s` steps to go
/// (pool of `p' = p - k + s` ranked features, effective subset size
/// `min(m, p')`), the first step either picks rank `j` directly, leaves
/// ranks `1..=j` untouched (every candidate ranked worse than `j`), or
/// removes one better-ranked feature so that rank `j` becomes rank `j - 1`
/// of the remaining pool:
///
/// ```text
/// w[j | s, p'] = P(pick j) + P(all candidates > j) · w[j | s-1, p'-1]
///                          + P(pick one of 1..j-1) · w[j-1 | s-1, p'-1]
/// ```
///
/// One-step pick probabilities are hypergeometric-tail ratios, evaluated as
/// running products of small rational factors — every intermediate is a
/// probability, so there is no overflow and no large-term cancellation at
/// any `p` this crate targets. Cost `O(k·p)` time, `O(p)` space.
pub fn exact_weight_table(k: usize, m: usize, p: usize) -> Result<WeightTable> {
    validate_config(k, m, p)?;
    // w[j] holds the previous level's table; index 0 is the permanent
    // boundary w[0] = 0.
    let mut w = vec![0.0f64; p + 1];
    // Per-level one-step probabilities: gt[j] = P(every candidate ranked
    // worse than j), and pick[j] = P(rank j selected at this step).
    let mut gt = vec![0.0f64; p + 1];
    let mut pick = vec![0.0f64; p + 1];
    for s in 1..=k {
        let pool = p - k + s;
        let me = m.min(pool);
        let (pool_f, me_f) = (pool as f64, me as f64);
        gt[0] = 1.0;
        for j in 1..=pool {
            let jf = j as f64;
            // P(candidate set avoids 1..=j) picks up one factor per rank.
            let f = (pool_f - me_f - jf + 1.0) / (pool_f - jf + 1.0);
            gt[j] = if f > 0.0 { gt[j - 1] * f } else { 0.0 };
            // P(pick j) = (m/p') * prod_{i<j} (p'-m-i+1)/(p'-i).
            pick[j] = if j == 1 {
                me_f / pool_f
            } else {
                let g = (pool_f - me_f - jf + 2.0) / (pool_f - jf + 1.0);
                if g > 0.0 {
                    pick[j - 1] * g
                } else {
                    0.0
                }
            };
        }
        // Descending j so w[j - 1] still holds the previous level's value.
        for j in (1..=pool).rev() {
            let lt = (1.0 - gt[j - 1]).clamp(0.0, 1.0);
            w[j] = (pick[j] + gt[j] * w[j] + lt * w[j - 1]).clamp(0.0, 1.0);
        }
    }
    Ok(WeightTable {
        k,
        m,
        p,
        weights: w[1..].to_vec(),
    })
}

/// Number of `r`-subsets of an `n`-set, saturating at `u64::MAX`.
fn binomial_u64(n: usize, r: usize) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Visit every `r`-subset of `0..n` (as ascending index slices).
fn for_each_combination(n: usize, r: usize, f: &mut dyn FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..r).collect();
    if r > n {
        return;
    }
    loop {
        f(&idx);
        // Advance the odometer: rightmost index that can still move up.
        let mut i = r;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - r {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Selection weights by exhaustive enumeration of candidate-set sequences.
///
/// Walks every possible sequence of candidate subsets across the `k` steps
/// (each step's subsets of the *remaining* features are equally likely, so
/// all sequences have equal probability), counts in exact integer
/// arithmetic how many sequences select each rank, and divides once at the
/// end. Shares no logic with [`exact_weight_table`] — this is the oracle
/// that recurrence is validated against.
///
/// The total number of sequences is `prod_s C(p - s + 1, min(m, p - s + 1))`;
/// configurations where it exceeds `1e7` are rejected with
/// [`Error::BudgetExceeded`].
pub fn enumerate_weights(k: usize, m: usize, p: usize) -> Result<WeightTable> {
    validate_config(k, m, p)?;
    // Completions below each level, and the total sequence count.
    let mut completions = vec![1u64; k + 1];
    for s in (1..=k).rev() {
        let pool = p - s + 1;
        let subsets = binomial_u64(pool, m.min(pool));
        completions[s - 1] = completions[s].saturating_mul(subsets);
    }
    let total = completions[0];
    if total > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "candidate-set sequences",
            budget: ENUMERATION_BUDGET,
            required: total,
        });
    }

    let mut counts = vec![0u64; p + 1];
    // Remaining ranks, kept ascending so a subset's best rank is its first.
    let mut avail: Vec<usize> = (1..=p).collect();
    walk_sequences(k, m, 1, &mut avail, &completions, &mut counts, 1);

    let total_f = total as f64;
    let weights = counts[1..].iter().map(|&c| c as f64 / total_f).collect();
    Ok(WeightTable { k, m, p, weights })
}

/// Recursive sequence walk. `mult` is the number of candidate-set prefixes
/// that lead to the current remaining pool; `counts` accumulates, per rank,
/// how many complete sequences select it.
fn walk_sequences(
    k: usize,
    m: usize,
    s: usize,
    avail: &mut Vec<usize>,
    completions: &[u64],
    counts: &mut [u64],
    mult: u64,
) {
    if s > k {
        return;
    }
    let pool = avail.len();
    let me = m.min(pool);
    // Enumerate candidate subsets by position. Positions ascend inside a
    // subset, so the subset's best-ranked member is its first position;
    // tally how many subsets share each leading position.
    let mut runs = vec![0u64; pool];
    for_each_combination(pool, me, &mut |idx| runs[idx[0]] += 1);
    for lead in 0..pool {
        if runs[lead] == 0 {
            continue;
        }
        let chosen = avail[lead];
        // Each of the `runs[lead]` subsets removes the same feature, so
        // everything below this node is shared.
        counts[chosen] += mult * runs[lead] * completions[s];
        if s < k {
            avail.remove(lead);
            walk_sequences(k, m, s + 1, avail, completions, counts, mult * runs[lead]);
            avail.insert(lead, chosen);
        }
    }
}

/// Monte Carlo selection weights with binomial standard errors.
///
/// Simulates `replicates` independent selection runs purely at the rank
/// level (no data involved), counts how often each rank is selected, and
/// reports `count / replicates` with standard error
/// `sqrt(w(1-w)/replicates)`. Candidate subsets are drawn per `sampling`.
/// Determinism: results are a pure function of `(k, m, p, replicates,
/// seed, sampling)`.
pub fn mc_weight_table(
    k: usize,
    m: usize,
    p: usize,
    replicates: usize,
    seed: u64,
    sampling: CandidateSampling,
) -> Result<McWeightTable> {
    validate_config(k, m, p)?;
    if replicates == 0 {
        return Err(Error::invalid("replicates", format_args!("need at least one run")));
    }
    let mut counts = vec![0u64; p];
    for r in 0..replicates {
        let mut rng = rng::stream(seed, tag::MC_WEIGHTS, r as u64);
        // Pool of 0-based ranks; order is scratch space for the sampler.
        let mut pool: Vec<usize> = (0..p).collect();
        for _ in 0..k {
            let chosen_pos = match sampling {
                CandidateSampling::WithoutReplacement => {
                    let me = m.min(pool.len());
                    rng::sample_prefix(&mut rng, &mut pool, me);
                    let mut best = 0;
                    for i in 1..me {
                        if pool[i] < pool[best] {
                            best = i;
                        }
                    }
                    best
                }
                CandidateSampling::WithReplacement => {
                    let mut best = rng::uniform_index(&mut rng, pool.len());
                    for _ in 1..m {
                        let i = rng::uniform_index(&mut rng, pool.len());
                        if pool[i] < pool[best] {
                            best = i;
                        }
                    }
                    best
                }
            };
            counts[pool[chosen_pos]] += 1;
            pool.swap_remove(chosen_pos);
        }
    }
    let rf = replicates as f64;
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / rf).collect();
    let stderr = weights
        .iter()
        .map(|&w| libm::sqrt(w * (1.0 - w) / rf))
        .collect();
    Ok(McWeightTable {
        table: WeightTable { k, m, p, weights },
        stderr,
        replicates,
    })
}

/// Large-`p` selection weight at rank `j`, `k` steps, subset fraction `γ`.
///
/// In the regime `p → ∞`, `m/p → γ`, the one-step pick probabilities become
/// geometric and the weight obeys a two-term recurrence with coefficients
/// built from `e^{-α}` where `α = -ln(1 - γ)`. The recurrence is iterated
/// in whichever direction is contractive:
///
/// - for `j ≥ k`, in the step count at fixed rank (each iteration multiplies
///   the carried value by a factor below one);
/// - for `j < k`, in the rank at fixed step count (factors below `e^{-α}`).
///
/// Iterating the first form past `j < k` would amplify rounding
/// exponentially (the carried `1 - w` term cancels catastrophically as
/// `w → 1`), which is why the split is structural and not an optimization.
/// Cost `O(max(j, k))`.
pub fn asymptotic_weight(j: usize, k: usize, gamma: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::invalid("j", format_args!("rank must be at least 1")));
    }
    let alpha = validate_gamma(gamma)?;
    if k == 0 {
        return Ok(0.0);
    }
    let w = if j >= k {
        asymptotic_by_steps(j, k, alpha)
    } else {
        asymptotic_by_ranks(j, k, alpha)
    };
    Ok(w.clamp(0.0, 1.0))
}

/// Contractive iteration over the step count, valid for `j ≥ k`.
fn asymptotic_by_steps(j: usize, k: usize, alpha: f64) -> f64 {
    let jf = j as f64;
    let mut w = 0.0;
    for kk in 1..=k {
        let kf = kk as f64;
        // e^{-α(j-kk)} - e^{-αj}, in product form to dodge cancellation.
        let c = libm::exp(-alpha * (jf - kf)) * (-libm::expm1(-alpha * kf));
        w = c * (1.0 - w);
    }
    w
}

/// Contractive iteration over the rank, valid for `j ≤ k`.
fn asymptotic_by_ranks(j: usize, k: usize, alpha: f64) -> f64 {
    let kf = k as f64;
    let base = -libm::expm1(-alpha * kf); // 1 - e^{-αk}
    let mut w = 0.0;
    for jj in 1..=j {
        let jf = jj as f64;
        // e^{-α(k-jj+1)} - e^{-αk}, again in product form.
        let b = libm::exp(-alpha * (kf - jf + 1.0)) * (-libm::expm1(-alpha * (jf - 1.0)));
        w = base - b * w;
    }
    w
}

/// Limiting weight at depth `d` inside the selected prefix: the limit of
/// the asymptotic weight at rank `j = k - d` as `k → ∞`.
///
/// Positive `d` reaches down into the reliably selected ranks (weight near
/// one), negative `d` out into the tail (weight near zero); the function is
/// non-decreasing in `d` and satisfies the reflection identity
/// `w(d) + w(-(d+1)) = 1`.
///
/// For `d ≥ 0` the weight is the alternating series with terms
/// `(-1)^i e^{-αi(d + (i+1)/2)}`; for `d < 0` an equivalent alternating
/// series in `e^{αi(d - (i-1)/2)}` whose terms *decay* from the first is
/// used instead (the primary form's terms would grow astronomically before
/// cancelling). Terms are added until one falls below `tol` (`1e-15` is the
/// conventional choice); the alternating structure bounds the truncation
/// error by that final term.
pub fn limit_weight(d: i64, gamma: f64, tol: f64) -> Result<f64> {
    let alpha = validate_gamma(gamma)?;
    if !(tol > 0.0) {
        return Err(Error::invalid(
            "tol",
            format_args!("truncation tolerance must be positive, got {tol}"),
        ));
    }
    let df = d as f64;
    let mut sum = 0.0;
    let mut converged = false;
    if d >= 0 {
        for i in 0..LIMIT_SERIES_CAP {
            let i_f = i as f64;
            let term = libm::exp(-alpha * i_f * (df + (i_f + 1.0) / 2.0));
            sum += if i % 2 == 0 { term } else { -term };
            if term < tol {
                converged = true;
                break;
            }
        }
    } else {
        for i in 1..=LIMIT_SERIES_CAP {
            let i_f = i as f64;
            let term = libm::exp(alpha * i_f * (df - (i_f - 1.0) / 2.0));
            sum += if i % 2 == 1 { term } else { -term };
            if term < tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::BudgetExceeded {
            what: "limit-series terms",
            budget: LIMIT_SERIES_CAP as u64,
            required: LIMIT_SERIES_CAP as u64 + 1,
        });
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// Closed-form logistic approximation to the large-`p` weight.
///
/// `w ≈ 1 / (1 + (1 - m/p)^(k - j + 1/2))`. The rank `j` is real-valued so
/// the curve can be evaluated between integer ranks (e.g. at the midpoint
/// where it crosses one half). Requires `m < p`: at `m = p` selection is
/// deterministic and the curve degenerates to a step.
pub fn logistic_approx(j: f64, k: usize, m: usize, p: usize) -> Result<f64> {
    validate_config(0, m, p)?;
    if m == p {
        return Err(Error::invalid(
            "m",
            format_args!("logistic approximation needs m < p (selection is deterministic at m = p)"),
        ));
    }
    if !j.is_finite() {
        return Err(Error::invalid("j", format_args!("rank must be finite, got {j}")));
    }
    let base = 1.0 - m as f64 / p as f64;
    let expo = k as f64 - j + 0.5;
    Ok(1.0 / (1.0 + libm::pow(base, expo)))
}

/// Exact sandwich envelope around the asymptotic weight at rank `j`.
///
/// Returns `(lower, upper)` with
/// `lower = σ(α(h - j))`, `upper = σ(α(h + 1 - j))` where `σ` is the
/// logistic function and `h = ln(e^{αk} - 1)/α` is the crossover rank. The
/// asymptotic weight lies inside the envelope for every `j ≥ 1`, `k ≥ 1`,
/// attaining the bounds in degenerate corners (e.g. `k = 1` touches the
/// upper bound exactly).
pub fn sandwich_bounds(j: usize, k: usize, gamma: f64) -> Result<(f64, f64)> {
    if j == 0 || k == 0 {
        return Err(Error::invalid(
            if j == 0 { "j" } else { "k" },
            format_args!("rank and step count must be at least 1"),
        ));
    }
    let alpha = validate_gamma(gamma)?;
    let h = libm::log(libm::expm1(alpha * k as f64)) / alpha;
    let jf = j as f64;
    let lower = logistic(alpha * (h - jf));
    let upper = logistic(alpha * (h + 1.0 - jf));
    Ok((lower, upper))
}

/// Sandwich envelope for the limiting weight at depth `d` (`j = k - d`,
/// `k → ∞`).
///
/// Returns `(σ(α(d + 1/2)), σ(α(d + 1)))` for `d ≥ 0` and the reflected
/// envelope `(σ(αd), σ(α(d + 1/2)))` for `d < 0`, where `σ` is the
/// logistic function — the `k → ∞` limit of [`sandwich_bounds`] along
/// `j = k - d`, with each side tightened by the reflection identity on its
/// own half.
pub fn limit_sandwich_bounds(d: i64, gamma: f64) -> Result<(f64, f64)> {
    let alpha = validate_gamma(gamma)?;
    let df = d as f64;
    if d >= 0 {
        Ok((logistic(alpha * (df + 0.5)), logistic(alpha * (df + 1.0))))
    } else {
        Ok((logistic(alpha * df), logistic(alpha * (df + 0.5))))
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}
