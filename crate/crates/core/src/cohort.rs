//! A directory of per-city block files plus the shared observables table,
//! scored city by city.
//!
//! Layout: `<blocks_dir>/<city_id>.csv` per city, and one observables CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, CityDataset, IngestError, ValidationReport, ValidationStatus};
use crate::plane::SamplePoint;
use crate::scaling::{self, CityIndicator, IndicatorOptions, ScalingError};
use crate::stats::CityRow;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no city block files (*.csv) in {0}")]
    NoCities(PathBuf),
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: IngestError },
    #[error("city `{city_id}` has more than one block file ({first} and {second})")]
    DuplicateCityFile { city_id: String, first: PathBuf, second: PathBuf },
    #[error("city `{0}` has no row in the observables table")]
    MissingObservables(String),
}

impl CohortError {
    /// True for malformed or inconsistent data, false for missing inputs.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, CohortError::Io { .. } | CohortError::NoCities(_))
    }
}

/// Which area the gasoline sales are divided by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaBasis {
    /// Blocks with at least one resident.
    #[default]
    Populated,
    AllBlocks,
}

/// Dependent variable of a planning plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependent {
    GasPerArea,
    Co2PerCapita,
}

impl Dependent {
    pub const ALL: [Dependent; 2] = [Dependent::GasPerArea, Dependent::Co2PerCapita];

    pub fn as_str(self) -> &'static str {
        match self {
            Dependent::GasPerArea => "gas_per_area",
            Dependent::Co2PerCapita => "co2_per_capita",
        }
    }
}

impl std::fmt::Display for Dependent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dependent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dependent::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown dependent `{s}` (expected gas_per_area or co2_per_capita)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortOptions {
    pub indicator: IndicatorOptions,
    pub tolerance: f64,
    pub area_basis: AreaBasis,
}

impl Default for CohortOptions {
    fn default() -> Self {
        CohortOptions { indicator: IndicatorOptions::default(), tolerance: crate::DEFAULT_TOLERANCE, area_basis: AreaBasis::Populated }
    }
}

/// One scored city.
#[derive(Debug, Clone)]
pub struct CityEntry {
    pub dataset: CityDataset,
    pub validation: ValidationReport,
    pub indicator: Result<CityIndicator, ScalingError>,
    /// 2010 estimate, USD.
    pub gas_sales_2010: Option<f64>,
    /// USD per km².
    pub gas_per_area: Option<f64>,
    pub co2_per_capita: Option<f64>,
}

impl CityEntry {
    pub fn score(dataset: CityDataset, options: &CohortOptions) -> CityEntry {
        let validation = ingest::validate_city(&dataset, options.tolerance);
        let indicator = scaling::city_indicator_with(&dataset, &options.indicator);
        let gas_sales_2010 = ingest::extrapolate_sales(dataset.observables()).ok();
        let area = match options.area_basis {
            AreaBasis::Populated => dataset.populated_area(),
            AreaBasis::AllBlocks => dataset.total_area(),
        };
        let gas_per_area = gas_sales_2010.filter(|_| area > 0.0).map(|s| s / area);
        let co2_per_capita = dataset.observables().co2_road_per_capita;
        CityEntry { dataset, validation, indicator, gas_sales_2010, gas_per_area, co2_per_capita }
    }

    pub fn city_id(&self) -> &str {
        self.dataset.city_id()
    }

    pub fn is_included(&self) -> bool {
        self.validation.status == ValidationStatus::Included
    }

    pub fn dependent(&self, dependent: Dependent) -> Option<f64> {
        match dependent {
            Dependent::GasPerArea => self.gas_per_area,
            Dependent::Co2PerCapita => self.co2_per_capita,
        }
    }

    pub fn row(&self) -> IndicatorRow {
        let ind = self.indicator.as_ref().ok();
        IndicatorRow {
            city_id: self.city_id().to_string(),
            status: self.validation.status,
            computed_population: self.validation.computed_population,
            reported_population: self.validation.reported_population,
            relative_error: self.validation.relative_error,
            ds: ind.map(|i| i.result.ds),
            intercept: ind.map(|i| i.result.intercept),
            r_squared: ind.map(|i| i.result.r_squared),
            n_classes_used: ind.map(|i| i.result.n_classes_used),
            mean_density: ind.map(|i| i.mean_density),
            excluded_zero_population: ind.map(|i| i.excluded_zero_population),
            gas_sales_2010: self.gas_sales_2010,
            gas_per_area: self.gas_per_area,
            co2_per_capita: self.co2_per_capita,
            error: self.indicator.as_ref().err().map(|e| e.code().to_string()),
        }
    }
}

/// Flat per-city output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub city_id: String,
    pub status: ValidationStatus,
    pub computed_population: u64,
    pub reported_population: u64,
    pub relative_error: f64,
    pub ds: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub n_classes_used: Option<usize>,
    pub mean_density: Option<f64>,
    pub excluded_zero_population: Option<usize>,
    pub gas_sales_2010: Option<f64>,
    pub gas_per_area: Option<f64>,
    pub co2_per_capita: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Cohort {
    cities: Vec<CityEntry>,
    options: CohortOptions,
}

fn read(path: &Path) -> Result<String, CohortError> {
    fs::read_to_string(path).map_err(|source| CohortError::Io { path: path.to_path_buf(), source })
}

/// `(city_id, path)` for every `*.csv` in `dir`, sorted by city id.
pub fn city_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, CohortError> {
    let entries = fs::read_dir(dir).map_err(|source| CohortError::Io { path: dir.to_path_buf(), source })?;
    let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|source| CohortError::Io { path: dir.to_path_buf(), source })?.path();
        let is_csv = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if !is_csv || !path.is_file() {
            continue;
        }
        let Some(city_id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
            continue;
        };
        if let Some(first) = files.get(&city_id) {
            let (first, second) = if *first < path { (first.clone(), path) } else { (path, first.clone()) };
            return Err(CohortError::DuplicateCityFile { city_id, first, second });
        }
        files.insert(city_id, path);
    }
    if files.is_empty() {
        return Err(CohortError::NoCities(dir.to_path_buf()));
    }
    Ok(files.into_iter().collect())
}

impl Cohort {
    /// Reads every city file, attaches its observables row and scores all
    /// cities in parallel on the current rayon pool.
    pub fn load(blocks_dir: &Path, observables: &Path, options: CohortOptions) -> Result<Cohort, CohortError> {
        let files = city_files(blocks_dir)?;
        let table = ingest::parse_observables(&read(observables)?)
            .map_err(|source| CohortError::Parse { path: observables.to_path_buf(), source })?;
        let texts = files
            .into_iter()
            .map(|(id, path)| read(&path).map(|text| (id, path, text)))
            .collect::<Result<Vec<_>, _>>()?;
        let datasets = texts
            .into_par_iter()
            .map(|(id, path, text)| {
                let record = table.get(&id).ok_or_else(|| CohortError::MissingObservables(id.clone()))?;
                ingest::parse_city(&text, &id)
                    .map(|d| d.with_record(record))
                    .map_err(|source| CohortError::Parse { path, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Cohort::from_datasets(datasets, options))
    }

    pub fn from_datasets(mut datasets: Vec<CityDataset>, options: CohortOptions) -> Cohort {
        datasets.sort_by(|a, b| a.city_id().cmp(b.city_id()));
        let cities = datasets.into_par_iter().map(|d| CityEntry::score(d, &options)).collect();
        Cohort { cities, options }
    }

    pub fn options(&self) -> &CohortOptions {
        &self.options
    }

    /// All cities, sorted by id.
    pub fn cities(&self) -> &[CityEntry] {
        &self.cities
    }

    pub fn city(&self, city_id: &str) -> Option<&CityEntry> {
        self.cities.binary_search_by(|c| c.city_id().cmp(city_id)).ok().map(|i| &self.cities[i])
    }

    pub fn indicator_table(&self) -> Vec<IndicatorRow> {
        self.cities.iter().map(CityEntry::row).collect()
    }

    /// Correlation rows for included cities with a computed indicator.
    pub fn correlation_rows(&self) -> Vec<CityRow> {
        self.cities
            .iter()
            .filter(|c| c.is_included())
            .filter_map(|c| {
                let ind = c.indicator.as_ref().ok()?;
                Some(CityRow {
                    city_id: c.city_id().to_string(),
                    ds: ind.result.ds,
                    mean_density: ind.mean_density,
                    gas_per_area: c.gas_per_area,
                    co2_per_capita: c.co2_per_capita,
                })
            })
            .collect()
    }

    /// Plane samples `(mean density, ds, dependent)` for included cities
    /// that have the dependent value.
    pub fn plane_samples(&self, dependent: Dependent) -> Vec<SamplePoint> {
        self.cities
            .iter()
            .filter(|c| c.is_included())
            .filter_map(|c| {
                let ind = c.indicator.as_ref().ok()?;
                let z = c.dependent(dependent)?;
                Some(SamplePoint::labelled(ind.mean_density, ind.result.ds, z, c.city_id()))
            })
            .collect()
    }
}
