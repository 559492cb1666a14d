//! One-dimensional k-means over a sorted value list.
//!
//! In one dimension the optimal k-means clusters are contiguous runs of the
//! sorted values, so the exact optimum is a shortest-path style dynamic
//! program over split points. The cost of a run satisfies the quadrangle
//! inequality, which makes the optimal split index monotone and lets each
//! DP layer be filled by divide and conquer in `O(n log n)`.
//!
//! Equal values are collapsed into one weighted point before solving, so
//! duplicates can never be separated and `k` is bounded by the number of
//! distinct values.
//!
//! [`kmeans_1d_lloyd`] is the classic Lloyd iteration with deterministic
//! quantile seeding. It is kept for comparison with published runs that used
//! Lloyd's algorithm; the quantile seeds stand in for a seeding procedure
//! whose exact details are not available.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LLOYD_MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("no values to cluster")]
    Empty,
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("k = {k} exceeds the {distinct} distinct values")]
    Infeasible { k: usize, distinct: usize },
    #[error("values are not sorted ascending at index {0}")]
    Unsorted(usize),
    #[error("value at index {0} is not finite")]
    NonFinite(usize),
    #[error("weights must be positive and finite, one per value")]
    BadWeights,
    #[error("Lloyd iteration did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("Lloyd iteration left cluster {0} empty")]
    EmptyCluster(usize),
}

impl ClusterError {
    pub fn code(&self) -> &'static str {
        match self {
            ClusterError::Empty => "empty-input",
            ClusterError::ZeroClusters => "zero-clusters",
            ClusterError::Infeasible { .. } => "infeasible-k",
            ClusterError::Unsorted(_) => "unsorted-input",
            ClusterError::NonFinite(_) => "non-finite-input",
            ClusterError::BadWeights => "bad-weights",
            ClusterError::NotConverged(_) => "not-converged",
            ClusterError::EmptyCluster(_) => "empty-cluster",
        }
    }
}

/// A partition of sorted values into contiguous classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classing {
    /// `k + 1` class bounds. The outer two are the minimum and maximum value;
    /// interior bounds sit midway between neighbouring classes.
    pub boundaries: Vec<f64>,
    /// Start index of each class in the sorted input, followed by `n`.
    pub starts: Vec<usize>,
    /// Class index of every input value.
    pub assignments: Vec<usize>,
    pub centroids: Vec<f64>,
    /// Sum of (weighted) squared deviations from the class centroids.
    pub within_ss: f64,
}

impl Classing {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Index range of class `j` in the sorted input.
    pub fn range(&self, j: usize) -> std::ops::Range<usize> {
        self.starts[j]..self.starts[j + 1]
    }

    /// Builds a classing from class start indices, computing centroids and
    /// the within-class sum of squares directly from the values.
    pub fn from_starts(values: &[f64], weights: Option<&[f64]>, starts: Vec<usize>) -> Classing {
        let k = starts.len() - 1;
        let n = values.len();
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);
        let mut centroids = Vec::with_capacity(k);
        let mut within_ss = 0.0;
        let mut assignments = vec![0usize; n];
        for j in 0..k {
            let range = starts[j]..starts[j + 1];
            let (mut sw, mut sv) = (0.0, 0.0);
            for i in range.clone() {
                sw += w(i);
                sv += w(i) * values[i];
            }
            let mean = sv / sw;
            for i in range {
                let d = values[i] - mean;
                within_ss += w(i) * d * d;
                assignments[i] = j;
            }
            centroids.push(mean);
        }
        let mut boundaries = Vec::with_capacity(k + 1);
        boundaries.push(values[0]);
        for j in 1..k {
            let s = starts[j];
            boundaries.push(0.5 * (values[s - 1] + values[s]));
        }
        boundaries.push(values[n - 1]);
        Classing { boundaries, starts, assignments, centroids, within_ss }
    }
}

fn check_sorted(values: &[f64]) -> Result<usize, ClusterError> {
    if values.is_empty() {
        return Err(ClusterError::Empty);
    }
    let mut distinct = 1;
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(ClusterError::NonFinite(i));
        }
        if i > 0 {
            if values[i - 1] > *v {
                return Err(ClusterError::Unsorted(i));
            }
            if values[i - 1] < *v {
                distinct += 1;
            }
        }
    }
    Ok(distinct)
}

/// Number of distinct values in a sorted slice.
pub fn distinct_count(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[0] < w[1]).count()
}

/// Prefix sums over weighted distinct points, shifted by a reference value
/// to limit cancellation in `Σw·v² − (Σw·v)²/Σw`.
struct RunCost {
    w: Vec<f64>,
    s: Vec<f64>,
    s2: Vec<f64>,
}

impl RunCost {
    fn new(points: &[(f64, f64)]) -> Self {
        let total_w: f64 = points.iter().map(|p| p.1).sum();
        let shift = points.iter().map(|p| p.0 * p.1).sum::<f64>() / total_w;
        let n = points.len();
        let (mut w, mut s, mut s2) = (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
        w.push(0.0);
        s.push(0.0);
        s2.push(0.0);
        for &(v, wt) in points {
            let c = v - shift;
            w.push(w.last().unwrap() + wt);
            s.push(s.last().unwrap() + wt * c);
            s2.push(s2.last().unwrap() + wt * c * c);
        }
        RunCost { w, s, s2 }
    }

    /// Sum of squared deviations of points `[i, j)` from their mean.
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        let w = self.w[j] - self.w[i];
        let s = self.s[j] - self.s[i];
        let s2 = self.s2[j] - self.s2[i];
        (s2 - s * s / w).max(0.0)
    }
}

/// Collapses sorted values into `(value, weight)` points and the start index
/// of each point's run in the original slice.
fn collapse(values: &[f64], weights: Option<&[f64]>) -> (Vec<(f64, f64)>, Vec<usize>) {
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut offsets = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        match points.last_mut() {
            Some(last) if last.0 == v => last.1 += w,
            _ => {
                points.push((v, w));
                offsets.push(i);
            }
        }
    }
    (points, offsets)
}

/// Fills `cur[s]` for `s` in `[lo, hi)` with the cheapest split of the
/// suffix starting at `s` into a first run `[s, e)` plus `prev[e]`, recording
/// the smallest optimal `e` in `opt`.
#[allow(clippy::too_many_arguments)]
fn fill_layer(
    cost: &RunCost,
    prev: &[f64],
    cur: &mut [f64],
    opt: &mut [u32],
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
    e_max: usize,
) {
    if lo >= hi {
        return;
    }
    let mid = lo + (hi - lo) / 2;
    let first = opt_lo.max(mid + 1);
    let last = opt_hi.min(e_max);
    let mut best = f64::INFINITY;
    let mut best_e = first;
    for e in first..=last {
        let c = cost.cost(mid, e) + prev[e];
        if c < best {
            best = c;
            best_e = e;
        }
    }
    cur[mid] = best;
    opt[mid] = best_e as u32;
    fill_layer(cost, prev, cur, opt, lo, mid, opt_lo, best_e, e_max);
    fill_layer(cost, prev, cur, opt, mid + 1, hi, best_e, opt_hi, e_max);
}

/// Optimal contiguous partition of weighted points into `k` runs; returns the
/// start index of each run.
fn solve_exact(points: &[(f64, f64)], k: usize) -> Vec<usize> {
    let u = points.len();
    let cost = RunCost::new(points);
    if k == 1 {
        return vec![0];
    }
    // prev[e]: cost of points [e, u) split into (m - 1) runs.
    let mut prev: Vec<f64> = (0..=u).map(|e| if e < u { cost.cost(e, u) } else { f64::INFINITY }).collect();
    let mut opts: Vec<Vec<u32>> = Vec::with_capacity(k - 1);
    for m in 2..=k {
        // Suffixes starting at s need at least m points; only s >= k - m can
        // be reached from the front.
        let s_lo = k - m;
        let s_hi = u - m + 1;
        let e_max = u - (m - 1);
        let mut cur = vec![f64::INFINITY; u + 1];
        let mut opt = vec![0u32; u + 1];
        if m == k {
            // Only the full range is needed for the outermost layer.
            fill_layer(&cost, &prev, &mut cur, &mut opt, 0, 1, 1, e_max, e_max);
        } else {
            fill_layer(&cost, &prev, &mut cur, &mut opt, s_lo, s_hi, s_lo + 1, e_max, e_max);
        }
        opts.push(opt);
        prev = cur;
    }
    let mut starts = Vec::with_capacity(k);
    let mut s = 0usize;
    starts.push(0);
    for m in (2..=k).rev() {
        let e = opts[m - 2][s] as usize;
        starts.push(e);
        s = e;
    }
    starts
}

/// Exact 1D k-means (minimum within-class sum of squares) over sorted values.
///
/// Among equally optimal partitions the one with the lexicographically
/// smallest vector of class start indices is returned.
pub fn kmeans_1d_exact(values: &[f64], k: usize) -> Result<Classing, ClusterError> {
    kmeans_1d_exact_weighted(values, None, k)
}

/// Exact 1D k-means with an optional positive weight per value (for example
/// block area).
pub fn kmeans_1d_exact_weighted(values: &[f64], weights: Option<&[f64]>, k: usize) -> Result<Classing, ClusterError> {
    let distinct = check_sorted(values)?;
    if let Some(w) = weights {
        if w.len() != values.len() || w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(ClusterError::BadWeights);
        }
    }
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > distinct {
        return Err(ClusterError::Infeasible { k, distinct });
    }
    let (points, offsets) = collapse(values, weights);
    let mut starts: Vec<usize> = solve_exact(&points, k).into_iter().map(|p| offsets[p]).collect();
    starts.push(values.len());
    Ok(Classing::from_starts(values, weights, starts))
}

/// Outcome of a Lloyd run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydRun {
    pub classing: Classing,
    /// Number of centroid updates performed before assignments stabilised.
    pub iterations: usize,
}

/// Quantile seeds: centroid `i` starts at the value of 1-based rank
/// `ceil((i + 0.5) * n / k)`.
pub fn quantile_seeds(values: &[f64], k: usize) -> Vec<f64> {
    let n = values.len();
    (0..k)
        .map(|i| {
            let rank = ((i as f64 + 0.5) * n as f64 / k as f64).ceil() as usize;
            values[rank.clamp(1, n) - 1]
        })
        .collect()
}

/// Lloyd's algorithm with quantile seeding.
pub fn kmeans_1d_lloyd(values: &[f64], k: usize) -> Result<Classing, ClusterError> {
    let distinct = check_sorted(values)?;
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > distinct {
        return Err(ClusterError::Infeasible { k, distinct });
    }
    Ok(lloyd_from_centroids(values, &quantile_seeds(values, k))?.classing)
}

/// Runs Lloyd iterations from the given initial centroids.
///
/// Values equidistant from two centroids go to the lower class. Convergence
/// is declared when an assignment step reproduces the previous assignment.
pub fn lloyd_from_centroids(values: &[f64], seeds: &[f64]) -> Result<LloydRun, ClusterError> {
    check_sorted(values)?;
    let k = seeds.len();
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mut centroids = seeds.to_vec();
    centroids.sort_by(f64::total_cmp);

    let assign = |centroids: &[f64]| -> Vec<usize> {
        let mut starts = vec![0usize; k + 1];
        for j in 1..k {
            let cut = 0.5 * (centroids[j - 1] + centroids[j]);
            starts[j] = values.partition_point(|v| *v <= cut).max(starts[j - 1]);
        }
        starts[k] = n;
        starts
    };

    let mut starts = assign(&centroids);
    for iteration in 1..=LLOYD_MAX_ITERATIONS {
        for j in 0..k {
            let (a, b) = (starts[j], starts[j + 1]);
            if b > a {
                centroids[j] = (prefix[b] - prefix[a]) / (b - a) as f64;
            }
        }
        let next = assign(&centroids);
        if next == starts {
            if let Some(j) = (0..k).find(|&j| starts[j] == starts[j + 1]) {
                return Err(ClusterError::EmptyCluster(j));
            }
            return Ok(LloydRun { classing: Classing::from_starts(values, None, starts), iterations: iteration });
        }
        starts = next;
    }
    Err(ClusterError::NotConverged(LLOYD_MAX_ITERATIONS))
}
