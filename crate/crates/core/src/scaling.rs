//! The scaling indicator `ds`.
//!
//! Populated blocks are sorted by density and grouped into `c` classes. For
//! each class `j` the total area `a_j`, population `p_j` and class density
//! `ρ_j = p_j / a_j` are formed, and `ds` is the least-squares slope of
//! `log₁₀ a_j` against `log₁₀ (1/ρ_j)`. Because `a_j` is in km² and `ρ_j`
//! in km⁻², a change of area unit shifts both coordinates by the same
//! constant and leaves the slope untouched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster1d::{self, distinct_count, Classing, ClusterError};
use crate::ingest::{Block, CityDataset};
use crate::stats::{self, StatsError};

pub const MIN_REGRESSION_CLASSES: usize = 3;

/// Default number of colour bins in a fractal spectrum.
pub const DEFAULT_SPECTRUM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("need at least {needed} usable density classes, got {got}")]
    InsufficientClasses { needed: usize, got: usize },
    #[error("all class densities are equal; there is no spectrum to scale")]
    DegenerateSpectrum,
    #[error("classing covers {classing} values but the city has {blocks} populated blocks")]
    ClassingMismatch { classing: usize, blocks: usize },
    #[error("box-count class {0} is invalid: coverage must lie in (0, 1] and count must be positive")]
    InvalidBoxCount(usize),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl ScalingError {
    pub fn code(&self) -> &'static str {
        match self {
            ScalingError::InsufficientClasses { .. } => "insufficient-classes",
            ScalingError::DegenerateSpectrum => "degenerate-spectrum",
            ScalingError::ClassingMismatch { .. } => "classing-mismatch",
            ScalingError::InvalidBoxCount(_) => "invalid-box-count",
            ScalingError::Cluster(e) => e.code(),
            ScalingError::Stats(e) => e.code(),
        }
    }
}

/// How block densities are weighted when clustering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterWeighting {
    /// Every distinct density counts once, so splitting a block into
    /// blocks of the same density changes nothing.
    #[default]
    Distinct,
    /// Every block counts once.
    PerBlock,
    /// Blocks are weighted by their area.
    Area,
}

/// How class points are weighted in the log-log regression.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionWeighting {
    #[default]
    Unweighted,
    /// Each class weighted by its population.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorOptions {
    pub classes: usize,
    pub cluster_weighting: ClusterWeighting,
    pub regression_weighting: RegressionWeighting,
}

impl Default for IndicatorOptions {
    fn default() -> Self {
        IndicatorOptions {
            classes: crate::DEFAULT_CLASSES,
            cluster_weighting: ClusterWeighting::Distinct,
            regression_weighting: RegressionWeighting::Unweighted,
        }
    }
}

impl IndicatorOptions {
    pub fn with_classes(classes: usize) -> Self {
        IndicatorOptions { classes, ..Default::default() }
    }
}

/// Populated blocks of a city sorted by increasing density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpectrum {
    blocks: Vec<Block>,
    densities: Vec<f64>,
    excluded_zero_population: usize,
}

impl DensitySpectrum {
    /// Drops zero-population blocks (their density has no logarithm) and
    /// sorts the rest by density; equal densities keep file order.
    pub fn from_dataset(dataset: &CityDataset) -> Self {
        Self::from_blocks(dataset.blocks())
    }

    pub fn from_blocks(blocks: &[Block]) -> Self {
        let mut populated: Vec<Block> = blocks.iter().filter(|b| b.population > 0).cloned().collect();
        let excluded_zero_population = blocks.len() - populated.len();
        populated.sort_by(|a, b| a.density().total_cmp(&b.density()));
        let densities = populated.iter().map(Block::density).collect();
        DensitySpectrum { blocks: populated, densities, excluded_zero_population }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn areas(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.area_km2).collect()
    }

    pub fn excluded_zero_population(&self) -> usize {
        self.excluded_zero_population
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn distinct_densities(&self) -> usize {
        distinct_count(&self.densities)
    }

    /// Population per km² over all populated blocks.
    pub fn mean_density(&self) -> f64 {
        let p: u64 = self.blocks.iter().map(|b| b.population).sum();
        let a: f64 = self.blocks.iter().map(|b| b.area_km2).sum();
        p as f64 / a
    }

    /// Clusters the densities into `k` classes with the exact solver.
    pub fn classify(&self, k: usize, weighting: ClusterWeighting) -> Result<Classing, ClusterError> {
        match weighting {
            ClusterWeighting::Distinct => {
                let mut distinct = self.densities.clone();
                distinct.dedup();
                let classing = cluster1d::kmeans_1d_exact(&distinct, k)?;
                let starts = classing
                    .starts
                    .iter()
                    .map(|&s| distinct.get(s).map_or(self.densities.len(), |d| self.densities.partition_point(|x| x < d)))
                    .collect();
                Ok(Classing::from_starts(&self.densities, None, starts))
            }
            ClusterWeighting::PerBlock => cluster1d::kmeans_1d_exact(&self.densities, k),
            ClusterWeighting::Area => cluster1d::kmeans_1d_exact_weighted(&self.densities, Some(&self.areas()), k),
        }
    }
}

/// Totals for one density class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub class_index: usize,
    /// `a_j`, km²
    pub area_km2: f64,
    /// `p_j`
    pub population: u64,
    /// `ρ_j = p_j / a_j`, km⁻²
    pub density: f64,
}

impl ClassAggregate {
    pub fn new(class_index: usize, area_km2: f64, population: u64) -> Self {
        ClassAggregate { class_index, area_km2, population, density: population as f64 / area_km2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub classes: Vec<ClassAggregate>,
    /// Indices of classes dropped for having no population.
    pub dropped: Vec<usize>,
}

/// Sums block areas and populations over each class of `classing`.
pub fn aggregate_classes(spectrum: &DensitySpectrum, classing: &Classing) -> Result<Aggregation, ScalingError> {
    let n = spectrum.blocks.len();
    if classing.starts.last() != Some(&n) {
        return Err(ScalingError::ClassingMismatch { classing: classing.starts.last().copied().unwrap_or(0), blocks: n });
    }
    let mut classes = Vec::with_capacity(classing.k());
    let mut dropped = Vec::new();
    for j in 0..classing.k() {
        let members = &spectrum.blocks[classing.range(j)];
        let area: f64 = members.iter().map(|b| b.area_km2).sum();
        let population: u64 = members.iter().map(|b| b.population).sum();
        if population == 0 || !(area > 0.0) {
            dropped.push(j);
            continue;
        }
        classes.push(ClassAggregate::new(j, area, population));
    }
    Ok(Aggregation { classes, dropped })
}

/// One regression point, `(log₁₀ 1/ρ_j, log₁₀ a_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPoint {
    pub log_inv_density: f64,
    pub log_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub ds: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<LogPoint>,
    pub n_classes_used: usize,
}

/// Fits `ds` over class aggregates with an unweighted regression.
pub fn scaling_indicator(aggregates: &[ClassAggregate]) -> Result<ScalingResult, ScalingError> {
    scaling_indicator_weighted(aggregates, RegressionWeighting::Unweighted)
}

pub fn scaling_indicator_weighted(
    aggregates: &[ClassAggregate],
    weighting: RegressionWeighting,
) -> Result<ScalingResult, ScalingError> {
    let usable: Vec<&ClassAggregate> = aggregates
        .iter()
        .filter(|a| a.area_km2 > 0.0 && a.density > 0.0 && a.area_km2.is_finite() && a.density.is_finite())
        .collect();
    if let Some(first) = usable.first() {
        if usable.iter().all(|a| a.density == first.density) {
            return Err(ScalingError::DegenerateSpectrum);
        }
    }
    if usable.len() < MIN_REGRESSION_CLASSES {
        return Err(ScalingError::InsufficientClasses { needed: MIN_REGRESSION_CLASSES, got: usable.len() });
    }
    let points: Vec<LogPoint> = usable
        .iter()
        .map(|a| LogPoint { log_inv_density: -a.density.log10(), log_area: a.area_km2.log10() })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.log_inv_density).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.log_area).collect();
    let weights: Option<Vec<f64>> = match weighting {
        RegressionWeighting::Unweighted => None,
        RegressionWeighting::Population => Some(usable.iter().map(|a| a.population as f64).collect()),
    };
    let fit = stats::weighted_ols(&xs, &ys, weights.as_deref())?;
    Ok(ScalingResult { ds: fit.slope, intercept: fit.intercept, r_squared: fit.r_squared, n_classes_used: points.len(), points })
}

/// Everything computed for one city on the way to `ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityIndicator {
    pub city_id: String,
    pub result: ScalingResult,
    /// Σp / Σa over populated blocks, km⁻²
    pub mean_density: f64,
    pub classes_requested: usize,
    pub classes_used: usize,
    pub excluded_zero_population: usize,
    pub boundaries: Vec<f64>,
    pub aggregates: Vec<ClassAggregate>,
    pub dropped_classes: Vec<usize>,
    pub warnings: Vec<String>,
}

/// `ds` and mean density for a city using `c` classes.
pub fn city_indicator(dataset: &CityDataset, c: usize) -> Result<CityIndicator, ScalingError> {
    city_indicator_with(dataset, &IndicatorOptions::with_classes(c))
}

pub fn city_indicator_with(dataset: &CityDataset, options: &IndicatorOptions) -> Result<CityIndicator, ScalingError> {
    let spectrum = DensitySpectrum::from_dataset(dataset);
    if spectrum.is_empty() {
        return Err(ScalingError::InsufficientClasses { needed: MIN_REGRESSION_CLASSES, got: 0 });
    }
    let distinct = spectrum.distinct_densities();
    if distinct == 1 {
        return Err(ScalingError::DegenerateSpectrum);
    }
    let mut warnings = Vec::new();
    let classes = options.classes.min(distinct);
    if classes < options.classes {
        warnings.push(format!(
            "only {distinct} distinct block densities; using {classes} classes instead of {}",
            options.classes
        ));
    }
    if classes < MIN_REGRESSION_CLASSES {
        return Err(ScalingError::InsufficientClasses { needed: MIN_REGRESSION_CLASSES, got: classes });
    }
    if spectrum.excluded_zero_population() > 0 {
        log::debug!("{}: {} zero-population blocks excluded", dataset.city_id(), spectrum.excluded_zero_population());
    }
    let classing = spectrum.classify(classes, options.cluster_weighting)?;
    let aggregation = aggregate_classes(&spectrum, &classing)?;
    if !aggregation.dropped.is_empty() {
        warnings.push(format!("{} empty classes dropped", aggregation.dropped.len()));
    }
    let result = scaling_indicator_weighted(&aggregation.classes, options.regression_weighting)?;
    Ok(CityIndicator {
        city_id: dataset.city_id().to_string(),
        result,
        mean_density: spectrum.mean_density(),
        classes_requested: options.classes,
        classes_used: classes,
        excluded_zero_population: spectrum.excluded_zero_population(),
        boundaries: classing.boundaries,
        aggregates: aggregation.classes,
        dropped_classes: aggregation.dropped,
        warnings,
    })
}

/// Grid box-counting dimension: slope of `log₁₀ N_x` on `log₁₀ (1/x)` over
/// `(coverage fraction x, box count N_x)` classes.
pub fn box_counting_dimension(classes: &[(f64, u64)]) -> Result<f64, ScalingError> {
    for (i, &(x, n)) in classes.iter().enumerate() {
        if !(x > 0.0 && x <= 1.0) || n == 0 {
            return Err(ScalingError::InvalidBoxCount(i));
        }
    }
    if classes.len() < 2 {
        return Err(ScalingError::InsufficientClasses { needed: 2, got: classes.len() });
    }
    let xs: Vec<f64> = classes.iter().map(|c| -c.0.log10()).collect();
    let ys: Vec<f64> = classes.iter().map(|c| (c.1 as f64).log10()).collect();
    match stats::ols(&xs, &ys) {
        Ok(fit) => Ok(fit.slope),
        Err(StatsError::DegenerateX) => Err(ScalingError::DegenerateSpectrum),
        Err(e) => Err(e.into()),
    }
}

/// One coloured square of a fractal spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBand {
    pub class_index: usize,
    pub density: f64,
    pub area_km2: f64,
    /// Index into the spectrum palette; larger areas get higher bins.
    pub color_bin: usize,
}

/// Bands ordered by density, coloured by the quantile of their area.
///
/// A band's bin is `⌊r · bins / n⌋` where `r` counts the bands with a
/// strictly smaller area, so equal areas always share a colour.
pub fn fractal_spectrum(aggregates: &[ClassAggregate], bins: usize) -> Vec<SpectrumBand> {
    let n = aggregates.len();
    let bins = bins.max(1);
    let mut bands: Vec<SpectrumBand> = aggregates
        .iter()
        .map(|a| {
            let rank = aggregates.iter().filter(|b| b.area_km2 < a.area_km2).count();
            SpectrumBand {
                class_index: a.class_index,
                density: a.density,
                area_km2: a.area_km2,
                color_bin: (rank * bins / n).min(bins - 1),
            }
        })
        .collect();
    bands.sort_by(|a, b| a.density.total_cmp(&b.density).then(a.class_index.cmp(&b.class_index)));
    bands
}

/// Spectrum for a city without requiring a regression: works for cities
/// with fewer than three distinct densities.
pub fn city_spectrum(dataset: &CityDataset, c: usize, bins: usize) -> Result<Vec<SpectrumBand>, ScalingError> {
    let spectrum = DensitySpectrum::from_dataset(dataset);
    if spectrum.is_empty() {
        return Err(ScalingError::InsufficientClasses { needed: 1, got: 0 });
    }
    let classes = c.max(1).min(spectrum.distinct_densities());
    let classing = spectrum.classify(classes, ClusterWeighting::Distinct)?;
    let aggregation = aggregate_classes(&spectrum, &classing)?;
    Ok(fractal_spectrum(&aggregation.classes, bins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::CityObservables;
    use proptest::prelude::*;

    fn agg(j: usize, density: f64, area: f64) -> ClassAggregate {
        ClassAggregate { class_index: j, area_km2: area, population: (density * area).round() as u64, density }
    }

    fn city(blocks: Vec<Block>) -> CityDataset {
        let total = blocks.iter().map(|b| b.population).sum();
        CityDataset::new("t", blocks, total, CityObservables::default()).unwrap()
    }

    #[test]
    fn class_sums() {
        let blocks = vec![Block::new("a", 2.0, 100).unwrap(), Block::new("b", 3.0, 200).unwrap()];
        let spectrum = DensitySpectrum::from_blocks(&blocks);
        let classing = Classing::from_starts(spectrum.densities(), None, vec![0, 2]);
        let agg = aggregate_classes(&spectrum, &classing).unwrap();
        assert_eq!(agg.classes, vec![ClassAggregate { class_index: 0, area_km2: 5.0, population: 300, density: 60.0 }]);
    }

    #[test]
    fn identity_partition_reproduces_blocks() {
        let blocks = vec![
            Block::new("a", 2.0, 100).unwrap(),
            Block::new("b", 3.0, 900).unwrap(),
            Block::new("c", 1.0, 10).unwrap(),
        ];
        let spectrum = DensitySpectrum::from_blocks(&blocks);
        let classing = cluster1d::kmeans_1d_exact(spectrum.densities(), 3).unwrap();
        let agg = aggregate_classes(&spectrum, &classing).unwrap();
        let pairs: Vec<(f64, u64)> = agg.classes.iter().map(|c| (c.area_km2, c.population)).collect();
        assert_eq!(pairs, vec![(1.0, 10), (2.0, 100), (3.0, 900)]);
    }

    #[test]
    fn mismatched_classing_rejected() {
        let spectrum = DensitySpectrum::from_blocks(&[Block::new("a", 1.0, 1).unwrap()]);
        let classing = Classing::from_starts(&[1.0, 2.0], None, vec![0, 2]);
        assert_eq!(aggregate_classes(&spectrum, &classing).unwrap_err().code(), "classing-mismatch");
    }

    #[test]
    fn hand_slope_one() {
        let aggs = [agg(0, 100.0, 100.0), agg(1, 316.227766, 31.6227766), agg(2, 1000.0, 10.0)];
        let r = scaling_indicator(&aggs).unwrap();
        assert!((r.ds - 1.0).abs() < 1e-12, "{}", r.ds);
        assert_eq!(r.n_classes_used, 3);
    }

    #[test]
    fn ten_class_power_law() {
        let aggs: Vec<_> = (0..10)
            .map(|j| {
                let rho = 10f64.powf(1.0 + 0.35 * j as f64);
                agg(j, rho, 5.0e4 * rho.powf(-1.7))
            })
            .collect();
        let r = scaling_indicator(&aggs).unwrap();
        assert!((r.ds - 1.7).abs() < 1e-9);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_areas_give_zero() {
        let aggs: Vec<_> = (0..5).map(|j| agg(j, 10.0 * (j + 1) as f64, 7.0)).collect();
        assert_eq!(scaling_indicator(&aggs).unwrap().ds, 0.0);
    }

    #[test]
    fn regression_preconditions() {
        let two = [agg(0, 1.0, 1.0), agg(1, 2.0, 1.0)];
        assert_eq!(scaling_indicator(&two).unwrap_err().code(), "insufficient-classes");
        let same = [agg(0, 5.0, 1.0), agg(1, 5.0, 2.0), agg(2, 5.0, 3.0)];
        assert_eq!(scaling_indicator(&same).unwrap_err(), ScalingError::DegenerateSpectrum);
    }

    #[test]
    fn identical_density_city_is_degenerate() {
        let blocks = (0..20).map(|i| Block::new(format!("b{i}"), 1.0 + i as f64, 50 * (1 + i as u64)).unwrap()).collect();
        assert_eq!(city_indicator(&city(blocks), 10).unwrap_err(), ScalingError::DegenerateSpectrum);
    }

    #[test]
    fn classes_lowered_to_distinct_count() {
        let blocks = (0..12).map(|i| Block::new(format!("b{i}"), 1.0, 10 * (1 + (i % 4) as u64)).unwrap()).collect();
        let ind = city_indicator(&city(blocks), 10).unwrap();
        assert_eq!(ind.classes_used, 4);
        assert_eq!(ind.warnings.len(), 1);
    }

    #[test]
    fn zero_population_blocks_excluded() {
        let mut blocks: Vec<Block> =
            (0..12).map(|i| Block::new(format!("b{i}"), 1.0 + i as f64, 100 + 37 * i as u64).unwrap()).collect();
        blocks.push(Block::new("empty", 500.0, 0).unwrap());
        let ind = city_indicator(&city(blocks.clone()), 5).unwrap();
        assert_eq!(ind.excluded_zero_population, 1);
        blocks.pop();
        assert_eq!(city_indicator(&city(blocks), 5).unwrap().result, ind.result);
    }

    #[test]
    fn box_counting_hand_cases() {
        assert!((box_counting_dimension(&[(0.1, 100), (0.01, 10_000)]).unwrap() - 2.0).abs() < 1e-12);
        assert!((box_counting_dimension(&[(0.1, 10), (0.01, 100)]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(box_counting_dimension(&[(0.5, 7), (0.25, 7), (0.125, 7)]).unwrap(), 0.0);
        assert_eq!(box_counting_dimension(&[(0.5, 7), (0.5, 9)]).unwrap_err(), ScalingError::DegenerateSpectrum);
        assert_eq!(box_counting_dimension(&[(1.5, 7), (0.5, 9)]).unwrap_err(), ScalingError::InvalidBoxCount(0));
        assert!(box_counting_dimension(&[(0.5, 7)]).is_err());
    }

    #[test]
    fn spectrum_bins() {
        let one = fractal_spectrum(&[agg(0, 10.0, 4.0)], 3);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].color_bin, 0);

        let equal = fractal_spectrum(&[agg(0, 10.0, 4.0), agg(1, 20.0, 4.0)], 10);
        assert_eq!(equal[0].color_bin, equal[1].color_bin);

        let three = fractal_spectrum(&[agg(0, 300.0, 1.0), agg(1, 200.0, 10.0), agg(2, 100.0, 100.0)], 3);
        let by_area: Vec<(f64, usize)> = three.iter().map(|b| (b.area_km2, b.color_bin)).collect();
        assert_eq!(by_area, vec![(100.0, 2), (10.0, 1), (1.0, 0)]);
        assert!(three.windows(2).all(|w| w[0].density < w[1].density));
    }

    #[test]
    fn spectrum_area_is_populated_area() {
        let blocks: Vec<Block> = (0..30)
            .map(|i| Block::new(format!("b{i}"), 0.5 + (i % 7) as f64, if i % 5 == 0 { 0 } else { 10 + 13 * i as u64 }).unwrap())
            .collect();
        let ds = city(blocks);
        let bands = city_spectrum(&ds, 10, DEFAULT_SPECTRUM_BINS).unwrap();
        let total: f64 = bands.iter().map(|b| b.area_km2).sum();
        assert!((total - ds.populated_area()).abs() < 1e-9);
    }

    #[test]
    fn single_density_city_has_one_band() {
        let blocks = (0..4).map(|i| Block::new(format!("b{i}"), 2.0, 20).unwrap()).collect();
        let bands = city_spectrum(&city(blocks), 10, DEFAULT_SPECTRUM_BINS).unwrap();
        assert_eq!(bands.len(), 1);
        assert_eq!(bands[0].area_km2, 8.0);
    }

    #[test]
    fn population_weighting_option() {
        let aggs: Vec<_> = (0..6)
            .map(|j| {
                let rho = 10f64.powi(j as i32 + 1);
                agg(j, rho, 1e3 * rho.powf(-0.8))
            })
            .collect();
        let w = scaling_indicator_weighted(&aggs, RegressionWeighting::Population).unwrap();
        assert!((w.ds - 0.8).abs() < 1e-9);
    }

    proptest! {
        // Two-class family plus a fixed midpoint: growing the low-density
        // area steepens the line.
        #[test]
        fn more_low_density_area_raises_ds(a1 in 1.0f64..1e4, bump in 0.01f64..10.0) {
            let make = |a1: f64| [agg(0, 10.0, a1), agg(1, 100.0, 5.0), agg(2, 1000.0, 1.0)];
            let lo = scaling_indicator(&make(a1)).unwrap().ds;
            let hi = scaling_indicator(&make(a1 * (1.0 + bump))).unwrap().ds;
            prop_assert!(hi > lo);
        }

        #[test]
        fn collinear_points_have_unit_r_squared(d in 0.1f64..3.0, c in 0.1f64..1e5, step in 0.05f64..0.7) {
            let aggs: Vec<_> = (0..8).map(|j| {
                let rho = 10f64.powf(0.5 + step * j as f64);
                agg(j, rho, c * rho.powf(-d))
            }).collect();
            let r = scaling_indicator(&aggs).unwrap();
            prop_assert!((r.r_squared - 1.0).abs() < 1e-12);
            prop_assert!((r.ds - d).abs() < 1e-9);
        }

        // Areas are multiples of 1/128 so every sum below is exact.
        #[test]
        fn splitting_blocks_keeps_aggregates(
            raw in prop::collection::vec((1u64..6, 1u32..40), 3..40),
            mask in prop::collection::vec(any::<bool>(), 40),
            k in 1usize..6,
        ) {
            let whole: Vec<Block> = raw.iter().enumerate()
                .map(|(i, &(p, a))| Block::new(format!("b{i}"), a as f64 / 64.0, 2 * p).unwrap())
                .collect();
            let mut split = Vec::new();
            for (i, b) in whole.iter().enumerate() {
                if mask[i] {
                    for part in ["x", "y"] {
                        split.push(Block::new(format!("{}{part}", b.block_id), b.area_km2 / 2.0, b.population / 2).unwrap());
                    }
                } else {
                    split.push(b.clone());
                }
            }
            let aggregates = |blocks: &[Block]| {
                let spectrum = DensitySpectrum::from_blocks(blocks);
                let k = k.min(spectrum.distinct_densities());
                let classing = spectrum.classify(k, ClusterWeighting::Distinct).unwrap();
                aggregate_classes(&spectrum, &classing).unwrap().classes
            };
            prop_assert_eq!(aggregates(&whole), aggregates(&split));
        }
    }
}
