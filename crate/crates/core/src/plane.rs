//! Ordinary kriging over `(mean density, ds)` and the planning plane built
//! from it.
//!
//! Both axes are z-scored before any distance is taken: mean density spans
//! orders of magnitude more than `ds`, and raw Euclidean distance would
//! collapse the `ds` axis.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_PLANE_SAMPLES: usize = 10;
pub const DEFAULT_GRID: usize = 100;
pub const DEFAULT_LAG_BINS: usize = 12;
pub const GRID_MARGIN: f64 = 0.05;
/// Kriging variances down to this value are treated as rounding noise.
pub const VARIANCE_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlaneError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("sample {0} has a non-finite coordinate or value")]
    NonFiniteSample(usize),
    #[error("query ({0}, {1}) is not finite")]
    NonFiniteQuery(f64, f64),
    #[error("kriging system is singular")]
    Singular,
    #[error("kriging variance {0} is below the numerical floor")]
    NegativeVariance(f64),
    #[error("invalid variogram model: {0}")]
    InvalidModel(String),
    #[error("grid must be at least 2x2, got {0}x{1}")]
    InvalidGrid(usize, usize),
}

impl PlaneError {
    pub fn code(&self) -> &'static str {
        match self {
            PlaneError::InsufficientData { .. } => "insufficient-data",
            PlaneError::NonFiniteSample(_) => "non-finite-sample",
            PlaneError::NonFiniteQuery(..) => "non-finite-query",
            PlaneError::Singular => "singular-kriging-system",
            PlaneError::NegativeVariance(_) => "negative-variance",
            PlaneError::InvalidModel(_) => "invalid-variogram",
            PlaneError::InvalidGrid(..) => "invalid-grid",
        }
    }
}

/// One city on the plane: `x` mean density, `y` ds, `z` the dependent value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl SamplePoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        SamplePoint { x, y, z, label: None }
    }

    pub fn labelled(x: f64, y: f64, z: f64, label: impl Into<String>) -> Self {
        SamplePoint { x, y, z, label: Some(label.into()) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariogramKind {
    #[default]
    Exponential,
    Spherical,
    Gaussian,
}

impl VariogramKind {
    pub const ALL: [VariogramKind; 3] = [VariogramKind::Exponential, VariogramKind::Spherical, VariogramKind::Gaussian];

    pub fn as_str(self) -> &'static str {
        match self {
            VariogramKind::Exponential => "exponential",
            VariogramKind::Spherical => "spherical",
            VariogramKind::Gaussian => "gaussian",
        }
    }

    /// Normalised structure function, 0 at the origin rising to 1.
    fn shape(self, h_over_range: f64) -> f64 {
        let t = h_over_range;
        match self {
            VariogramKind::Exponential => 1.0 - (-t).exp(),
            VariogramKind::Spherical => {
                if t >= 1.0 {
                    1.0
                } else {
                    1.5 * t - 0.5 * t * t * t
                }
            }
            VariogramKind::Gaussian => 1.0 - (-t * t).exp(),
        }
    }
}

impl std::fmt::Display for VariogramKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for VariogramKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariogramKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown variogram `{s}` (expected exponential, spherical or gaussian)"))
    }
}

/// `γ(h) = nugget + sill · shape(h / range)`; `sill` is the partial sill.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub kind: VariogramKind,
    pub nugget: f64,
    pub sill: f64,
    pub range: f64,
    /// Set when fitting failed and default parameters were used.
    #[serde(default)]
    pub fallback: bool,
}

impl VariogramModel {
    pub fn new(kind: VariogramKind, nugget: f64, sill: f64, range: f64) -> Result<Self, PlaneError> {
        let m = VariogramModel { kind, nugget, sill, range, fallback: false };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), PlaneError> {
        let ok = self.nugget >= 0.0
            && self.sill > 0.0
            && self.range > 0.0
            && self.nugget.is_finite()
            && self.sill.is_finite()
            && self.range.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PlaneError::InvalidModel(format!("nugget {} sill {} range {}", self.nugget, self.sill, self.range)))
        }
    }

    pub fn semivariance(&self, h: f64) -> f64 {
        self.nugget + self.sill * self.kind.shape(h / self.range)
    }

    /// Semivariance as used in the kriging system: exactly zero at zero lag,
    /// so kriging honours the data.
    fn kriging_gamma(&self, h: f64) -> f64 {
        if h == 0.0 {
            0.0
        } else {
            self.semivariance(h)
        }
    }
}

/// One lag class of an empirical variogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagBin {
    /// Mean separation of the pairs in the bin.
    pub lag: f64,
    pub semivariance: f64,
    pub pair_count: usize,
}

/// Per-axis z-score parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: f64,
    pub x_std: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Standardization {
    /// Mean and population standard deviation per axis. A constant axis
    /// gets a unit scale.
    pub fn fit(samples: &[SamplePoint]) -> Self {
        let n = samples.len() as f64;
        let (x_mean, y_mean) = (samples.iter().map(|s| s.x).sum::<f64>() / n, samples.iter().map(|s| s.y).sum::<f64>() / n);
        let std = |f: &dyn Fn(&SamplePoint) -> f64, m: f64| {
            let v = (samples.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / n).sqrt();
            if v > 0.0 && v.is_finite() {
                v
            } else {
                1.0
            }
        };
        Standardization { x_mean, x_std: std(&|s| s.x, x_mean), y_mean, y_std: std(&|s| s.y, y_mean) }
    }

    pub fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_mean) / self.x_std, (y - self.y_mean) / self.y_std)
    }

    pub fn inverse(&self, u: f64, v: f64) -> (f64, f64) {
        (self.x_mean + u * self.x_std, self.y_mean + v * self.y_std)
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Matheron estimator over the given coordinates. Pairs are binned into
/// `n_bins` equal-width classes `(lo, hi]` up to `max_lag` (default: the
/// largest separation); empty bins are omitted.
pub fn empirical_variogram_at(coords: &[(f64, f64)], z: &[f64], n_bins: usize, max_lag: Option<f64>) -> Vec<LagBin> {
    let n = coords.len();
    let n_bins = n_bins.max(1);
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((dist(coords[i], coords[j]), (z[i] - z[j]).powi(2)));
        }
    }
    let max_lag = max_lag.unwrap_or_else(|| pairs.iter().map(|p| p.0).fold(0.0, f64::max));
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); n_bins];
    if max_lag > 0.0 {
        let width = max_lag / n_bins as f64;
        for (h, sq) in pairs {
            if h > max_lag {
                continue;
            }
            let idx = ((h / width).ceil() as usize).saturating_sub(1).min(n_bins - 1);
            let bin = &mut sums[idx];
            bin.0 += h;
            bin.1 += sq;
            bin.2 += 1;
        }
    } else if !pairs.is_empty() {
        sums[0] = (0.0, pairs.iter().map(|p| p.1).sum(), pairs.len());
    }
    sums.into_iter()
        .filter(|b| b.2 > 0)
        .map(|(h, sq, count)| LagBin { lag: h / count as f64, semivariance: sq / (2.0 * count as f64), pair_count: count })
        .collect()
}

/// Empirical variogram of plane samples, distances in standardized space.
pub fn empirical_variogram(samples: &[SamplePoint], n_bins: usize) -> Result<Vec<LagBin>, PlaneError> {
    check_samples(samples, MIN_PLANE_SAMPLES)?;
    let st = Standardization::fit(samples);
    let coords: Vec<(f64, f64)> = samples.iter().map(|s| st.forward(s.x, s.y)).collect();
    let z: Vec<f64> = samples.iter().map(|s| s.z).collect();
    Ok(empirical_variogram_at(&coords, &z, n_bins, None))
}

fn check_samples(samples: &[SamplePoint], needed: usize) -> Result<(), PlaneError> {
    if let Some(i) = samples.iter().position(|s| !(s.x.is_finite() && s.y.is_finite() && s.z.is_finite())) {
        return Err(PlaneError::NonFiniteSample(i));
    }
    if samples.len() < needed {
        return Err(PlaneError::InsufficientData { needed, got: samples.len() });
    }
    Ok(())
}

/// Weighted least squares of `γ = nugget + sill · shape` for a fixed range.
/// Returns `(nugget, sill, sse)` or `None` when no positive sill fits.
fn fit_linear_part(bins: &[LagBin], kind: VariogramKind, range: f64) -> Option<(f64, f64, f64)> {
    let f: Vec<f64> = bins.iter().map(|b| kind.shape(b.lag / range)).collect();
    let w: Vec<f64> = bins.iter().map(|b| b.pair_count as f64).collect();
    let g: Vec<f64> = bins.iter().map(|b| b.semivariance).collect();
    let sw: f64 = w.iter().sum();
    let mf = f.iter().zip(&w).map(|(f, w)| f * w).sum::<f64>() / sw;
    let mg = g.iter().zip(&w).map(|(g, w)| g * w).sum::<f64>() / sw;
    let (mut sff, mut sfg) = (0.0, 0.0);
    for i in 0..bins.len() {
        sff += w[i] * (f[i] - mf) * (f[i] - mf);
        sfg += w[i] * (f[i] - mf) * (g[i] - mg);
    }
    let (mut nugget, mut sill) = if sff > 0.0 {
        let s = sfg / sff;
        (mg - s * mf, s)
    } else {
        (0.0, f64::NAN)
    };
    if !(nugget >= 0.0) || !sill.is_finite() {
        // Clamp the nugget and refit the sill through the origin.
        nugget = 0.0;
        let (num, den) = (0..bins.len()).fold((0.0, 0.0), |acc, i| (acc.0 + w[i] * f[i] * g[i], acc.1 + w[i] * f[i] * f[i]));
        sill = if den > 0.0 { num / den } else { f64::NAN };
    }
    if !(sill > 0.0 && sill.is_finite()) {
        return None;
    }
    let sse = (0..bins.len()).map(|i| w[i] * (g[i] - nugget - sill * f[i]).powi(2)).sum();
    Some((nugget, sill, sse))
}

/// Default parameters used when the empirical variogram cannot be fitted:
/// zero nugget, sill equal to the pair-weighted mean semivariance (the sample
/// variance when the bins cover every pair), range half the largest lag.
pub fn fallback_variogram(bins: &[LagBin], kind: VariogramKind) -> VariogramModel {
    let pairs: usize = bins.iter().map(|b| b.pair_count).sum();
    let var = if pairs > 0 {
        bins.iter().map(|b| b.semivariance * b.pair_count as f64).sum::<f64>() / pairs as f64
    } else {
        0.0
    };
    let max_lag = bins.iter().map(|b| b.lag).fold(0.0, f64::max);
    VariogramModel {
        kind,
        nugget: 0.0,
        sill: if var > 0.0 { var } else { 1.0 },
        range: if max_lag > 0.0 { 0.5 * max_lag } else { 1.0 },
        fallback: true,
    }
}

/// Fits nugget, partial sill and range by pair-count weighted least squares.
///
/// For a fixed range the model is linear in nugget and sill, which are
/// solved in closed form (nugget clamped at zero). The range is found by a
/// log-spaced grid search over `[max_lag/100, 100·max_lag]` followed by a
/// golden-section refinement around the best grid node.
pub fn fit_variogram(bins: &[LagBin], kind: VariogramKind) -> VariogramModel {
    let usable: Vec<LagBin> = bins.iter().copied().filter(|b| b.pair_count > 0 && b.lag > 0.0).collect();
    if usable.len() < 3 || usable.iter().all(|b| b.semivariance == 0.0) {
        log::warn!("variogram: {} usable lag bins, using fallback model", usable.len());
        return fallback_variogram(bins, kind);
    }
    let max_lag = usable.iter().map(|b| b.lag).fold(0.0, f64::max);
    let (lo, hi) = ((max_lag / 100.0).ln(), (max_lag * 100.0).ln());
    const GRID: usize = 240;
    let objective = |log_r: f64| fit_linear_part(&usable, kind, log_r.exp()).map_or(f64::INFINITY, |p| p.2);

    let nodes: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
    let scores: Vec<f64> = nodes.iter().map(|&t| objective(t)).collect();
    let best = (0..GRID).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });
    if !scores[best].is_finite() {
        log::warn!("variogram: no admissible fit, using fallback model");
        return fallback_variogram(bins, kind);
    }

    let (mut a, mut b) = (nodes[best.saturating_sub(1)], nodes[(best + 1).min(GRID - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = objective(d);
        }
    }
    let mut log_r = 0.5 * (a + b);
    if objective(log_r) > scores[best] {
        log_r = nodes[best];
    }
    let range = log_r.exp();
    let (nugget, sill, _) = fit_linear_part(&usable, kind, range).expect("best range is admissible");
    VariogramModel { kind, nugget, sill, range, fallback: false }
}

/// A kriging estimate at one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrigingEstimate {
    pub estimate: f64,
    pub variance: f64,
    pub weights: Vec<f64>,
    pub lagrange: f64,
}

/// Ordinary kriging system factorised once for repeated queries.
#[derive(Debug, Clone)]
pub struct Kriger {
    coords: Vec<(f64, f64)>,
    z: Vec<f64>,
    model: VariogramModel,
    matrix: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Merges samples that share a location, averaging their values. First
/// occurrence order is kept.
pub fn merge_duplicates(coords: &[(f64, f64)], z: &[f64]) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut out_c: Vec<(f64, f64)> = Vec::with_capacity(coords.len());
    // (first value, sum of offsets from it, count)
    let mut sums: Vec<(f64, f64, usize)> = Vec::with_capacity(coords.len());
    let mut index = std::collections::HashMap::new();
    for (c, v) in coords.iter().zip(z) {
        // +0.0 normalises the sign of zero so -0.0 and 0.0 merge.
        let key = ((c.0 + 0.0).to_bits(), (c.1 + 0.0).to_bits());
        match index.get(&key) {
            Some(&k) => {
                let s: &mut (f64, f64, usize) = &mut sums[k];
                s.1 += v - s.0;
                s.2 += 1;
            }
            None => {
                index.insert(key, out_c.len());
                out_c.push(*c);
                sums.push((*v, 0.0, 1));
            }
        }
    }
    (out_c, sums.into_iter().map(|(first, offsets, n)| first + offsets / n as f64).collect())
}

impl Kriger {
    /// Builds the system for the given locations. Duplicate locations are
    /// merged first; at least three distinct locations are required.
    pub fn new(coords: &[(f64, f64)], z: &[f64], model: VariogramModel) -> Result<Self, PlaneError> {
        model.validate()?;
        let (coords, z) = merge_duplicates(coords, z);
        let n = coords.len();
        if n < 3 {
            return Err(PlaneError::InsufficientData { needed: 3, got: n });
        }
        let mut matrix = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in i + 1..n {
                let g = model.kriging_gamma(dist(coords[i], coords[j]));
                matrix[(i, j)] = g;
                matrix[(j, i)] = g;
            }
            matrix[(i, n)] = 1.0;
            matrix[(n, i)] = 1.0;
        }
        let lu = matrix.clone().lu();
        if !lu.is_invertible() {
            return Err(PlaneError::Singular);
        }
        Ok(Kriger { coords, z, model, matrix, lu })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn model(&self) -> &VariogramModel {
        &self.model
    }

    pub fn estimate(&self, query: (f64, f64)) -> Result<KrigingEstimate, PlaneError> {
        if !(query.0.is_finite() && query.1.is_finite()) {
            return Err(PlaneError::NonFiniteQuery(query.0, query.1));
        }
        let n = self.coords.len();
        // At a sample location the right-hand side equals that sample's
        // column, so the unit vector solves the system exactly.
        if let Some(i) = self.coords.iter().position(|&c| dist(c, query) == 0.0) {
            let mut weights = vec![0.0; n];
            weights[i] = 1.0;
            return Ok(KrigingEstimate { estimate: self.z[i], variance: 0.0, weights, lagrange: 0.0 });
        }
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            rhs[i] = self.model.kriging_gamma(dist(self.coords[i], query));
        }
        rhs[n] = 1.0;
        let mut sol = self.lu.solve(&rhs).ok_or(PlaneError::Singular)?;
        // One step of iterative refinement.
        let residual = &rhs - &self.matrix * &sol;
        if let Some(correction) = self.lu.solve(&residual) {
            sol += correction;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(PlaneError::Singular);
        }
        let weights: Vec<f64> = sol.iter().take(n).copied().collect();
        let lagrange = sol[n];
        // Offsetting by the first value makes a constant field come back
        // exactly, whatever the rounding in the weights.
        let z0 = self.z[0];
        let estimate = z0 + weights.iter().zip(&self.z).map(|(w, z)| w * (z - z0)).sum::<f64>();
        let mut variance = weights.iter().zip(rhs.iter()).map(|(w, g)| w * g).sum::<f64>() + lagrange;
        if variance < 0.0 {
            if variance < VARIANCE_FLOOR {
                return Err(PlaneError::NegativeVariance(variance));
            }
            variance = 0.0;
        }
        Ok(KrigingEstimate { estimate, variance, weights, lagrange })
    }
}

/// Ordinary kriging of `samples` at `query`, in the samples' own coordinates.
pub fn krige(samples: &[SamplePoint], model: &VariogramModel, query: (f64, f64)) -> Result<KrigingEstimate, PlaneError> {
    check_samples(samples, 3)?;
    let coords: Vec<(f64, f64)> = samples.iter().map(|s| (s.x, s.y)).collect();
    let z: Vec<f64> = samples.iter().map(|s| s.z).collect();
    Kriger::new(&coords, &z, *model)?.estimate(query)
}

/// Leave-one-out cross-validation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvStats {
    pub rmse: f64,
    /// Mean of (estimate − observed).
    pub bias: f64,
    pub n: usize,
    /// Observed z range, for scale.
    pub z_range: f64,
}

pub fn leave_one_out(coords: &[(f64, f64)], z: &[f64], model: &VariogramModel) -> Result<CvStats, PlaneError> {
    let (coords, z) = merge_duplicates(coords, z);
    let n = coords.len();
    let errors: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (c, v): (Vec<_>, Vec<_>) = (0..n).filter(|&j| j != i).map(|j| (coords[j], z[j])).unzip();
            Kriger::new(&c, &v, *model)?.estimate(coords[i]).map(|e| e.estimate - z[i])
        })
        .collect::<Result<_, _>>()?;
    let nf = n as f64;
    let (zmin, zmax) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(*v), a.1.max(*v)));
    Ok(CvStats {
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / nf).sqrt(),
        bias: errors.iter().sum::<f64>() / nf,
        n,
        z_range: zmax - zmin,
    })
}

/// Vertices of the convex hull, counter-clockwise, no collinear points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Point-in-hull test with a small tolerance so sample points on the
/// boundary count as inside.
pub fn hull_contains(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    const EPS: f64 = 1e-9;
    match hull.len() {
        0 => false,
        1 => dist(hull[0], p) <= EPS,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let len = dist(a, b);
            let cross = ((b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)).abs() / len;
            let t = ((p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1)) / (len * len);
            cross <= EPS && (-EPS..=1.0 + EPS).contains(&t)
        }
        n => (0..n).all(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            let len = dist(a, b);
            ((b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)) / len >= -EPS
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneConfig {
    pub nx: usize,
    pub ny: usize,
    pub kind: VariogramKind,
    pub lag_bins: usize,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        PlaneConfig { nx: DEFAULT_GRID, ny: DEFAULT_GRID, kind: VariogramKind::Exponential, lag_bins: DEFAULT_LAG_BINS }
    }
}

/// A kriged surface over standardized `(mean density, ds)`.
///
/// `grid` and `variance` are row-major with `y` outer: node `(ix, iy)` is at
/// index `iy * nx + ix`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanningPlane {
    pub nx: usize,
    pub ny: usize,
    /// Node coordinates in standardized units.
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    /// The same nodes in data units.
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub standardization: Standardization,
    pub grid: Vec<f64>,
    pub variance: Vec<f64>,
    pub z_min: f64,
    pub z_max: f64,
    pub variogram: VariogramModel,
    pub empirical_variogram: Vec<LagBin>,
    pub cv_stats: CvStats,
    /// Input samples in data units.
    pub samples: Vec<SamplePoint>,
    /// Convex hull of the samples, standardized units.
    pub hull: Vec<(f64, f64)>,
    #[serde(skip)]
    kriger: OnceLock<Kriger>,
}

impl PlanningPlane {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.grid[iy * self.nx + ix]
    }

    fn standardized_samples(&self) -> (Vec<(f64, f64)>, Vec<f64>) {
        let coords = self.samples.iter().map(|s| self.standardization.forward(s.x, s.y)).collect();
        (coords, self.samples.iter().map(|s| s.z).collect())
    }

    fn kriger(&self) -> Result<&Kriger, PlaneError> {
        if let Some(k) = self.kriger.get() {
            return Ok(k);
        }
        let (coords, z) = self.standardized_samples();
        let k = Kriger::new(&coords, &z, self.variogram)?;
        Ok(self.kriger.get_or_init(|| k))
    }
}

fn axis(min: f64, max: f64, n: usize) -> Vec<f64> {
    let span = max - min;
    let margin = if span > 0.0 { GRID_MARGIN * span } else { 0.5 };
    let (lo, hi) = (min - margin, max + margin);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Builds a plane with the default lag binning.
pub fn build_plane(samples: &[SamplePoint], nx: usize, ny: usize, kind: VariogramKind) -> Result<PlanningPlane, PlaneError> {
    build_plane_with(samples, &PlaneConfig { nx, ny, kind, ..Default::default() })
}

/// Standardizes the axes, fits the variogram, kriges every grid node and
/// runs leave-one-out cross-validation.
pub fn build_plane_with(samples: &[SamplePoint], config: &PlaneConfig) -> Result<PlanningPlane, PlaneError> {
    check_samples(samples, MIN_PLANE_SAMPLES)?;
    let (nx, ny) = (config.nx, config.ny);
    if nx < 2 || ny < 2 {
        return Err(PlaneError::InvalidGrid(nx, ny));
    }
    let standardization = Standardization::fit(samples);
    let coords: Vec<(f64, f64)> = samples.iter().map(|s| standardization.forward(s.x, s.y)).collect();
    let z: Vec<f64> = samples.iter().map(|s| s.z).collect();
    let (ucoords, uz) = merge_duplicates(&coords, &z);

    let empirical = empirical_variogram_at(&ucoords, &uz, config.lag_bins, None);
    let variogram = fit_variogram(&empirical, config.kind);
    let kriger = Kriger::new(&ucoords, &uz, variogram)?;

    let fold = |(lo, hi): (f64, f64), v: f64| (lo.min(v), hi.max(v));
    let (x_min, x_max) = coords.iter().map(|c| c.0).fold((f64::INFINITY, f64::NEG_INFINITY), fold);
    let (y_min, y_max) = coords.iter().map(|c| c.1).fold((f64::INFINITY, f64::NEG_INFINITY), fold);
    let x_axis = axis(x_min, x_max, nx);
    let y_axis = axis(y_min, y_max, ny);

    let nodes: Vec<(f64, f64)> = y_axis.iter().flat_map(|&v| x_axis.iter().map(move |&u| (u, v))).collect();
    let estimates: Vec<KrigingEstimate> = nodes.par_iter().map(|&q| kriger.estimate(q)).collect::<Result<_, _>>()?;
    let grid: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
    let variance: Vec<f64> = estimates.iter().map(|e| e.variance).collect();
    let (z_min, z_max) = grid.iter().copied().fold((f64::INFINITY, f64::NEG_INFINITY), fold);

    let cv_stats = leave_one_out(&ucoords, &uz, &variogram)?;
    let hull = convex_hull(&ucoords);
    let x_values = x_axis.iter().map(|&u| standardization.inverse(u, 0.0).0).collect();
    let y_values = y_axis.iter().map(|&v| standardization.inverse(0.0, v).1).collect();

    let plane = PlanningPlane {
        nx,
        ny,
        x_axis,
        y_axis,
        x_values,
        y_values,
        standardization,
        grid,
        variance,
        z_min,
        z_max,
        variogram,
        empirical_variogram: empirical,
        cv_stats,
        samples: samples.to_vec(),
        hull,
        kriger: OnceLock::new(),
    };
    let _ = plane.kriger.set(kriger);
    Ok(plane)
}

/// Where a `(mean density, ds)` point lands on the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub estimate: f64,
    pub variance: f64,
    pub inside_hull: bool,
}

/// Kriges the plane's samples at a data-unit query and flags extrapolation
/// beyond the samples' convex hull.
pub fn locate(plane: &PlanningPlane, x: f64, y: f64) -> Result<Location, PlaneError> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(PlaneError::NonFiniteQuery(x, y));
    }
    let q = plane.standardization.forward(x, y);
    let est = plane.kriger()?.estimate(q)?;
    Ok(Location { estimate: est.estimate, variance: est.variance, inside_hull: hull_contains(&plane.hull, q) })
}
