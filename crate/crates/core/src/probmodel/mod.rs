//! Recall/complexity analysis of multi-index hashing and parameter selection.

mod occupancy;
pub mod oracle;

use num_bigint::BigUint;
use num_traits::Zero;

pub use occupancy::{p_recall, p_recall_zero, recall_count, single_ball_bin_probability, surjection_count};
pub use oracle::{p_recall_mc, p_recall_oracle, p_recall_positions, McEstimate, MIN_MC_TRIALS};

use crate::descriptor::DEFAULT_BITS;
use crate::error::{Error, Result};
use occupancy::{binomial, ratio_to_f64};

/// How the second parameter of `N(mean, s)` is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Spread {
    #[default]
    StdDev,
    Variance,
}

/// Prior Hamming-distance laws for matching (inlier) and non-matching (outlier) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceModel {
    pub inlier_mean: f64,
    pub inlier_spread: f64,
    pub outlier_mean: f64,
    pub outlier_spread: f64,
    pub spread: Spread,
    pub total_bits: u32,
}

impl Default for DistanceModel {
    fn default() -> Self {
        Self {
            inlier_mean: 32.0,
            inlier_spread: 10.0,
            outlier_mean: 128.0,
            outlier_spread: 20.0,
            spread: Spread::StdDev,
            total_bits: DEFAULT_BITS as u32,
        }
    }
}

impl DistanceModel {
    fn sigma(&self, s: f64) -> f64 {
        match self.spread {
            Spread::StdDev => s,
            Spread::Variance => s.sqrt(),
        }
    }

    pub fn inlier_sigma(&self) -> f64 {
        self.sigma(self.inlier_spread)
    }

    pub fn outlier_sigma(&self) -> f64 {
        self.sigma(self.outlier_spread)
    }
}

/// Gaussian density sampled at `0..=total_bits`, renormalized to sum to one.
fn discretized_normal(mean: f64, sigma: f64, total_bits: u32) -> Vec<f64> {
    let w: Vec<f64> = (0..=total_bits)
        .map(|d| {
            let z = (d as f64 - mean) / sigma;
            (-0.5 * z * z).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|x| x / sum).collect()
}

/// Inlier and outlier distance pmfs over `d = 0..=L`.
pub fn distance_pmfs(model: &DistanceModel) -> Result<(Vec<f64>, Vec<f64>)> {
    if (model.total_bits as f64) < model.outlier_mean {
        return Err(Error::invalid(format!(
            "support 0..={} does not reach the outlier mean {}",
            model.total_bits, model.outlier_mean
        )));
    }
    if !(model.inlier_spread > 0.0 && model.outlier_spread > 0.0) {
        return Err(Error::invalid("distance spreads must be positive"));
    }
    Ok((
        discretized_normal(model.inlier_mean, model.inlier_sigma(), model.total_bits),
        discretized_normal(model.outlier_mean, model.outlier_sigma(), model.total_bits),
    ))
}

/// Recall probability at every distance `0..=total_bits`.
pub fn recall_curve(r: u32, m: u32, total_bits: u32) -> Vec<f64> {
    (0..=total_bits).map(|d| p_recall(r, m, d)).collect()
}

fn expectation(curve: &[f64], pmf: &[f64]) -> f64 {
    curve.iter().zip(pmf).map(|(p, w)| p * w).sum::<f64>().clamp(0.0, 1.0)
}

/// Accuracy: recall averaged over the inlier law.
pub fn accuracy_r(r: u32, m: u32, model: &DistanceModel) -> Result<f64> {
    let (inlier, _) = distance_pmfs(model)?;
    Ok(expectation(&recall_curve(r, m, model.total_bits), &inlier))
}

/// Complexity: recall averaged over the outlier law, i.e. the fraction of
/// unrelated features landing in the candidate set.
pub fn complexity_e(r: u32, m: u32, model: &DistanceModel) -> Result<f64> {
    let (_, outlier) = distance_pmfs(model)?;
    Ok(expectation(&recall_curve(r, m, model.total_bits), &outlier))
}

/// Total hash entries across `m` tables for a balanced split of `total_bits`.
pub fn fixed_overhead(m: u32, total_bits: u32) -> Result<u128> {
    if m == 0 || m > total_bits {
        return Err(Error::invalid(format!("cannot split {total_bits} bits into {m} tables")));
    }
    let q = total_bits / m;
    let rem = total_bits % m;
    let lengths = (0..m).map(|k| if k < rem { q + 1 } else { q });
    fixed_overhead_for_lengths(lengths)
}

/// `sum_k 2^lengths[k]`.
pub fn fixed_overhead_for_lengths(lengths: impl IntoIterator<Item = u32>) -> Result<u128> {
    lengths.into_iter().try_fold(0u128, |acc, l| {
        1u128
            .checked_shl(l)
            .filter(|_| l < 128)
            .and_then(|e| acc.checked_add(e))
            .ok_or_else(|| Error::Capacity("hash-entry count overflows u128".into()))
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRow {
    pub r: u32,
    pub m: u32,
    pub accuracy: f64,
    pub complexity: f64,
    pub fixed_overhead: u128,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchGrid {
    pub max_radius: u32,
    pub min_tables: u32,
    pub max_tables: u32,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            max_radius: 3,
            min_tables: 4,
            max_tables: 32,
        }
    }
}

/// Accuracy, complexity and fixed overhead over the grid, ordered by `r` then `m`.
pub fn analyze_grid(model: &DistanceModel, grid: &SearchGrid) -> Result<Vec<GridRow>> {
    if grid.min_tables == 0 || grid.min_tables > grid.max_tables {
        return Err(Error::invalid("empty table-count range"));
    }
    let (inlier, outlier) = distance_pmfs(model)?;
    let mut rows = Vec::new();
    for r in 0..=grid.max_radius {
        for m in grid.min_tables..=grid.max_tables {
            let curve = recall_curve(r, m, model.total_bits);
            rows.push(GridRow {
                r,
                m,
                accuracy: expectation(&curve, &inlier),
                complexity: expectation(&curve, &outlier),
                fixed_overhead: fixed_overhead(m, model.total_bits)?,
            });
        }
    }
    Ok(rows)
}

/// Smallest `m` reaching `min_accuracy`, for each radius on the grid that has one.
pub fn minimal_tables_per_radius(rows: &[GridRow], min_accuracy: f64) -> Vec<GridRow> {
    let mut out: Vec<GridRow> = Vec::new();
    for row in rows.iter().filter(|row| row.accuracy >= min_accuracy) {
        match out.iter_mut().find(|o| o.r == row.r) {
            Some(o) if row.m < o.m => *o = *row,
            Some(_) => {}
            None => out.push(*row),
        }
    }
    out.sort_by_key(|o| o.r);
    out
}

pub const DEFAULT_MEMORY_BUDGET: u128 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    /// Tables built while streaming; they must fit the entry budget.
    Online { memory_budget: u128 },
    /// Tables built ahead of time; only the candidate fraction matters.
    Offline,
}

impl SelectionMode {
    pub fn online() -> Self {
        SelectionMode::Online {
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRecommendation {
    pub m: u32,
    pub r: u32,
    pub accuracy: f64,
    pub complexity: f64,
    pub fixed_overhead: u128,
}

impl From<GridRow> for ParamRecommendation {
    fn from(row: GridRow) -> Self {
        Self {
            m: row.m,
            r: row.r,
            accuracy: row.accuracy,
            complexity: row.complexity,
            fixed_overhead: row.fixed_overhead,
        }
    }
}

/// Picks the cheapest configuration on precomputed grid rows.
pub fn select_from_rows(
    rows: &[GridRow],
    min_accuracy: f64,
    mode: SelectionMode,
) -> Result<ParamRecommendation> {
    if !(min_accuracy > 0.0 && min_accuracy < 1.0) {
        return Err(Error::invalid(format!(
            "minimum accuracy must lie in (0, 1), got {min_accuracy}"
        )));
    }
    rows.iter()
        .filter(|row| row.accuracy >= min_accuracy)
        .filter(|row| match mode {
            SelectionMode::Online { memory_budget } => row.fixed_overhead <= memory_budget,
            SelectionMode::Offline => true,
        })
        .min_by(|a, b| {
            a.complexity
                .total_cmp(&b.complexity)
                .then(a.m.cmp(&b.m))
                .then(a.r.cmp(&b.r))
        })
        .map(|row| ParamRecommendation::from(*row))
        .ok_or_else(|| {
            Error::NotFound(format!("no grid configuration reaches accuracy {min_accuracy}"))
        })
}

pub fn select_params(
    min_accuracy: f64,
    mode: SelectionMode,
    model: &DistanceModel,
) -> Result<ParamRecommendation> {
    let rows = analyze_grid(model, &SearchGrid::default())?;
    select_from_rows(&rows, min_accuracy, mode)
}

/// Probability that a pair at distance `d` has more than `threshold` differing bits
/// within the first `prefix_bits` of `total_bits`, with the `d` differing positions
/// uniformly placed (hypergeometric law).
pub fn prefix_reject_probability(d: u32, threshold: u32, prefix_bits: u32, total_bits: u32) -> Result<f64> {
    if prefix_bits == 0 || prefix_bits > total_bits || d > total_bits {
        return Err(Error::invalid(format!(
            "need 0 < prefix ({prefix_bits}) <= L ({total_bits}) and d ({d}) <= L"
        )));
    }
    let all = binomial(total_bits as u64, prefix_bits as u64);
    let mut rejected = BigUint::zero();
    for x in (threshold + 1)..=d.min(prefix_bits) {
        rejected += binomial(d as u64, x as u64)
            * binomial((total_bits - d) as u64, (prefix_bits - x) as u64);
    }
    Ok(ratio_to_f64(&rejected, &all))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyTermRates {
    pub inlier_reject: f64,
    pub outlier_reject: f64,
}

/// Rejection rates of the prefix filter marginalized over the inlier and outlier laws.
pub fn early_term_rates(
    partial_threshold: u32,
    prefix_bits: u32,
    model: &DistanceModel,
) -> Result<EarlyTermRates> {
    let (inlier, outlier) = distance_pmfs(model)?;
    let reject = rejection_curve(partial_threshold, prefix_bits, model.total_bits)?;
    Ok(EarlyTermRates {
        inlier_reject: expectation(&reject, &inlier),
        outlier_reject: expectation(&reject, &outlier),
    })
}

fn rejection_curve(threshold: u32, prefix_bits: u32, total_bits: u32) -> Result<Vec<f64>> {
    (0..=total_bits)
        .map(|d| prefix_reject_probability(d, threshold, prefix_bits, total_bits))
        .collect()
}

/// Rejection rate among outliers that actually reach the candidate set of a
/// radius-`r`, `m`-table index and lie above `cutoff`: the outlier law is
/// reweighted by the recall probability before marginalizing.
pub fn candidate_outlier_reject_rate(
    partial_threshold: u32,
    prefix_bits: u32,
    r: u32,
    m: u32,
    cutoff: u32,
    model: &DistanceModel,
) -> Result<f64> {
    let (_, outlier) = distance_pmfs(model)?;
    let reject = rejection_curve(partial_threshold, prefix_bits, model.total_bits)?;
    let recall = recall_curve(r, m, model.total_bits);
    let mut num = 0.0;
    let mut den = 0.0;
    for d in (cutoff as usize + 1)..=model.total_bits as usize {
        let w = outlier[d] * recall[d];
        num += w * reject[d];
        den += w;
    }
    if den == 0.0 {
        return Err(Error::invalid("no outlier mass reaches the candidate set"));
    }
    Ok(num / den)
}
