//! Least squares and correlation helpers.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("x values are all equal")]
    DegenerateX,
    #[error("{0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

impl StatsError {
    pub fn code(&self) -> &'static str {
        match self {
            StatsError::InsufficientData { .. } => "insufficient-data",
            StatsError::DegenerateX => "degenerate-x",
            StatsError::ZeroVariance(_) => "zero-variance",
            StatsError::LengthMismatch(..) => "length-mismatch",
            StatsError::NonFinite(_) => "non-finite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    /// `1 − SS_res/SS_tot`, or 0 when the response is constant.
    pub r_squared: f64,
    pub n: usize,
    pub residuals: Vec<f64>,
    /// Set when `SS_tot = 0`.
    pub degenerate: bool,
}

fn check_pairs(xs: &[f64], ys: &[f64]) -> Result<(), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if let Some(i) = xs.iter().zip(ys).position(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    Ok(())
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<RegressionFit, StatsError> {
    weighted_ols(xs, ys, None)
}

/// Weighted least squares; `None` weights every point equally.
pub fn weighted_ols(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<RegressionFit, StatsError> {
    check_pairs(xs, ys)?;
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: n });
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(StatsError::LengthMismatch(n, w.len()));
        }
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(w).sum();
    let mean = |v: &[f64]| {
        if v.iter().all(|a| *a == v[0]) {
            v[0]
        } else {
            (0..n).map(|i| w(i) * v[i]).sum::<f64>() / sw
        }
    };
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += w(i) * dx * dx;
        sxy += w(i) * dx * dy;
        syy += w(i) * dy * dy;
    }
    if sxx == 0.0 || xs.iter().all(|x| *x == xs[0]) {
        return Err(StatsError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    let ss_res: f64 = residuals.iter().enumerate().map(|(i, r)| w(i) * r * r).sum();
    let degenerate = syy == 0.0;
    let r_squared = if degenerate { 0.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(RegressionFit { slope, intercept, r_squared, n, residuals, degenerate })
}

/// Pearson correlation coefficient.
///
/// Pairs are summed in a canonical (sorted) order so the result is
/// bit-identical under any permutation of the input.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check_pairs(xs, ys)?;
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: n });
    }
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-city variables available for correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Ds,
    MeanDensity,
    GasPerArea,
    Co2PerCapita,
}

impl Field {
    pub fn label(self) -> &'static str {
        match self {
            Field::Ds => "ds",
            Field::MeanDensity => "mean_density",
            Field::GasPerArea => "gas_per_area",
            Field::Co2PerCapita => "co2_per_capita",
        }
    }

    fn get(self, row: &CityRow) -> Option<f64> {
        match self {
            Field::Ds => Some(row.ds),
            Field::MeanDensity => Some(row.mean_density),
            Field::GasPerArea => row.gas_per_area,
            Field::Co2PerCapita => row.co2_per_capita,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Linear,
    LogX,
    LogY,
    LogLog,
}

impl Transform {
    pub const ALL: [Transform; 4] = [Transform::Linear, Transform::LogX, Transform::LogY, Transform::LogLog];

    fn logs(self) -> (bool, bool) {
        match self {
            Transform::Linear => (false, false),
            Transform::LogX => (true, false),
            Transform::LogY => (false, true),
            Transform::LogLog => (true, true),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Transform::Linear => "linear",
            Transform::LogX => "log_x",
            Transform::LogY => "log_y",
            Transform::LogLog => "log_log",
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Transform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Transform::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown transform `{s}` (expected linear, log_x, log_y or log_log)"))
    }
}

/// One city's row in the cross-city table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityRow {
    pub city_id: String,
    pub ds: f64,
    pub mean_density: f64,
    pub gas_per_area: Option<f64>,
    pub co2_per_capita: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub pearson_r: f64,
    pub n: usize,
    pub x_label: String,
    pub y_label: String,
    pub transform: Transform,
    /// Least-squares line on the transformed pairs.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub skipped_missing: usize,
    pub skipped_nonpositive: usize,
}

/// Correlates two per-city fields, optionally on log₁₀ axes.
///
/// Rows with an absent field are skipped; rows with a non-positive value on
/// a log axis are skipped with a warning.
pub fn correlate_cities(rows: &[CityRow], x: Field, y: Field, transform: Transform) -> Result<CorrelationResult, StatsError> {
    let (log_x, log_y) = transform.logs();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let (mut skipped_missing, mut skipped_nonpositive) = (0, 0);
    for row in rows {
        let (Some(mut xv), Some(mut yv)) = (x.get(row), y.get(row)) else {
            skipped_missing += 1;
            continue;
        };
        if (log_x && xv <= 0.0) || (log_y && yv <= 0.0) {
            log::warn!("{}: non-positive value under {} transform, skipped", row.city_id, transform);
            skipped_nonpositive += 1;
            continue;
        }
        if log_x {
            xv = xv.log10();
        }
        if log_y {
            yv = yv.log10();
        }
        xs.push(xv);
        ys.push(yv);
    }
    if xs.len() < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: xs.len() });
    }
    let pearson_r = pearson(&xs, &ys)?;
    let fit = ols(&xs, &ys)?;
    Ok(CorrelationResult {
        pearson_r,
        n: xs.len(),
        x_label: x.label().to_string(),
        y_label: y.label().to_string(),
        transform,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        skipped_missing,
        skipped_nonpositive,
    })
}
