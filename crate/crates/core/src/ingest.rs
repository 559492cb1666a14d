//! Parsing and validation of per-city census block files and the shared
//! city observables table.
//!
//! Block CSV (UTF-8, header required):
//!
//! ```text
//! block_id,area_km2,population
//! ```
//!
//! Observables CSV:
//!
//! ```text
//! city_id,reported_population,gas_sales_2007_usd,payroll_2007_usd,payroll_2010_usd,co2_road_tpc
//! ```
//!
//! An empty observable field means "absent", never zero.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BLOCK_HEADER: [&str; 3] = ["block_id", "area_km2", "population"];

pub const OBSERVABLES_HEADER: [&str; 6] = [
    "city_id",
    "reported_population",
    "gas_sales_2007_usd",
    "payroll_2007_usd",
    "payroll_2010_usd",
    "co2_road_tpc",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("missing or wrong header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: duplicate block id `{block_id}`")]
    DuplicateBlock { line: u64, block_id: String },
    #[error("line {line}: duplicate city id `{city_id}`")]
    DuplicateCity { line: u64, city_id: String },
    #[error("line {line}: block `{block_id}` has non-positive area {area}")]
    NonPositiveArea { line: u64, block_id: String, area: f64 },
    #[error("line {line}: block `{block_id}` has negative population {population}")]
    NegativePopulation { line: u64, block_id: String, population: i64 },
    #[error("city `{0}` has no blocks")]
    EmptyCity(String),
    #[error("sales extrapolation undefined: {0}")]
    ExtrapolationUndefined(&'static str),
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::BadHeader { .. } => "bad-header",
            IngestError::Malformed { .. } => "malformed-row",
            IngestError::DuplicateBlock { .. } => "duplicate-block",
            IngestError::DuplicateCity { .. } => "duplicate-city",
            IngestError::NonPositiveArea { .. } => "non-positive-area",
            IngestError::NegativePopulation { .. } => "negative-population",
            IngestError::EmptyCity(_) => "empty-city",
            IngestError::ExtrapolationUndefined(_) => "extrapolation-undefined",
        }
    }
}

/// One census block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub block_id: String,
    /// km²
    pub area_km2: f64,
    pub population: u64,
}

impl Block {
    /// Builds a block, rejecting non-positive or non-finite areas.
    pub fn new(block_id: impl Into<String>, area_km2: f64, population: u64) -> Result<Self, IngestError> {
        let block_id = block_id.into();
        if !(area_km2 > 0.0 && area_km2.is_finite()) {
            return Err(IngestError::NonPositiveArea { line: 0, block_id, area: area_km2 });
        }
        Ok(Block { block_id, area_km2, population })
    }

    /// Persons per km².
    pub fn density(&self) -> f64 {
        self.population as f64 / self.area_km2
    }
}

/// City-level observables. Every field may be absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CityObservables {
    pub gas_sales_2007: Option<f64>,
    pub payroll_2007: Option<f64>,
    pub payroll_2010: Option<f64>,
    /// tCO₂ per person per year, road transport only.
    pub co2_road_per_capita: Option<f64>,
}

impl CityObservables {
    /// True when the gasoline sales extrapolation inputs are all present.
    pub fn has_energy(&self) -> bool {
        self.gas_sales_2007.is_some() && self.payroll_2007.is_some() && self.payroll_2010.is_some()
    }
}

/// One row of the observables table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityRecord {
    pub city_id: String,
    pub reported_population: u64,
    pub observables: CityObservables,
}

/// Validated blocks of a single city plus its reported totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityDataset {
    city_id: String,
    blocks: Vec<Block>,
    reported_population: u64,
    observables: CityObservables,
}

impl CityDataset {
    pub fn new(
        city_id: impl Into<String>,
        blocks: Vec<Block>,
        reported_population: u64,
        observables: CityObservables,
    ) -> Result<Self, IngestError> {
        let city_id = city_id.into();
        if blocks.is_empty() {
            return Err(IngestError::EmptyCity(city_id));
        }
        let mut seen = HashSet::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            let line = i as u64 + 2;
            if !seen.insert(b.block_id.as_str()) {
                return Err(IngestError::DuplicateBlock { line, block_id: b.block_id.clone() });
            }
            if !(b.area_km2 > 0.0 && b.area_km2.is_finite()) {
                return Err(IngestError::NonPositiveArea { line, block_id: b.block_id.clone(), area: b.area_km2 });
            }
        }
        Ok(CityDataset { city_id, blocks, reported_population, observables })
    }

    pub fn city_id(&self) -> &str {
        &self.city_id
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn reported_population(&self) -> u64 {
        self.reported_population
    }

    pub fn observables(&self) -> &CityObservables {
        &self.observables
    }

    /// Sum of all block populations, zero-population blocks included.
    pub fn computed_population(&self) -> u64 {
        self.blocks.iter().map(|b| b.population).sum()
    }

    /// Total area of blocks with at least one resident.
    pub fn populated_area(&self) -> f64 {
        self.blocks.iter().filter(|b| b.population > 0).map(|b| b.area_km2).sum()
    }

    pub fn total_area(&self) -> f64 {
        self.blocks.iter().map(|b| b.area_km2).sum()
    }

    /// Replaces the reported population and observables with a table row.
    pub fn with_record(mut self, record: &CityRecord) -> Self {
        self.reported_population = record.reported_population;
        self.observables = record.observables.clone();
        self
    }

    pub(crate) fn with_blocks(&self, blocks: Vec<Block>) -> Self {
        CityDataset {
            city_id: self.city_id.clone(),
            blocks,
            reported_population: self.reported_population,
            observables: self.observables.clone(),
        }
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    let matches = found.len() == expected.len() && found.iter().zip(expected).all(|(f, e)| f.trim() == *e);
    if matches {
        Ok(())
    } else {
        Err(IngestError::BadHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn reader(contents: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(contents.as_bytes())
}

fn row_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn malformed(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::Malformed { line, reason: reason.into() }
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    malformed(line, e.to_string())
}

/// Parses a block CSV, preserving row order.
pub fn parse_blocks(contents: &str) -> Result<Vec<Block>, IngestError> {
    let mut rdr = reader(contents);
    let header = rdr.headers().map_err(csv_error)?.clone();
    check_header(&header, &BLOCK_HEADER)?;

    let mut blocks = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = row_line(&record);
        let block_id = record[0].to_string();
        if block_id.is_empty() {
            return Err(malformed(line, "empty block_id"));
        }
        let area: f64 = record[1]
            .parse()
            .map_err(|_| malformed(line, format!("area_km2 `{}` is not a number", &record[1])))?;
        if !(area > 0.0 && area.is_finite()) {
            return Err(IngestError::NonPositiveArea { line, block_id, area });
        }
        let population: i64 = record[2]
            .parse()
            .map_err(|_| malformed(line, format!("population `{}` is not an integer", &record[2])))?;
        if population < 0 {
            return Err(IngestError::NegativePopulation { line, block_id, population });
        }
        if !seen.insert(block_id.clone()) {
            return Err(IngestError::DuplicateBlock { line, block_id });
        }
        blocks.push(Block { block_id, area_km2: area, population: population as u64 });
    }
    Ok(blocks)
}

/// Parses a block file into a dataset.
///
/// The reported population defaults to the computed total and observables
/// are all absent; attach the observables table row with
/// [`CityDataset::with_record`].
pub fn parse_city(contents: &str, city_id: &str) -> Result<CityDataset, IngestError> {
    let blocks = parse_blocks(contents)?;
    let total = blocks.iter().map(|b| b.population).sum();
    CityDataset::new(city_id, blocks, total, CityObservables::default())
}

/// Writes blocks in the block CSV schema. `parse_blocks` inverts it exactly.
pub fn blocks_to_csv(blocks: &[Block]) -> String {
    let mut out = String::from("block_id,area_km2,population\n");
    for b in blocks {
        out.push_str(&format!("{},{},{}\n", csv_field(&b.block_id), b.area_km2, b.population));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn optional_amount(record: &csv::StringRecord, idx: usize, line: u64) -> Result<Option<f64>, IngestError> {
    let raw = &record[idx];
    if raw.is_empty() {
        return Ok(None);
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| malformed(line, format!("{} `{raw}` is not a number", OBSERVABLES_HEADER[idx])))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(malformed(line, format!("{} must be non-negative, got {raw}", OBSERVABLES_HEADER[idx])));
    }
    Ok(Some(v))
}

/// Parses the shared observables table, keyed by city id.
pub fn parse_observables(contents: &str) -> Result<BTreeMap<String, CityRecord>, IngestError> {
    let mut rdr = reader(contents);
    let header = rdr.headers().map_err(csv_error)?.clone();
    check_header(&header, &OBSERVABLES_HEADER)?;

    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = row_line(&record);
        let city_id = record[0].to_string();
        if city_id.is_empty() {
            return Err(malformed(line, "empty city_id"));
        }
        let reported_population: u64 = match record[1].parse() {
            Ok(p) if p > 0 => p,
            _ => return Err(malformed(line, format!("reported_population `{}` must be a positive integer", &record[1]))),
        };
        let observables = CityObservables {
            gas_sales_2007: optional_amount(&record, 2, line)?,
            payroll_2007: optional_amount(&record, 3, line)?,
            payroll_2010: optional_amount(&record, 4, line)?,
            co2_road_per_capita: optional_amount(&record, 5, line)?,
        };
        if out.contains_key(&city_id) {
            return Err(IngestError::DuplicateCity { line, city_id });
        }
        out.insert(city_id.clone(), CityRecord { city_id, reported_population, observables });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    Included,
    ExcludedPopulationMismatch,
    ExcludedMissingEnergy,
}

impl ValidationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidationStatus::Included => "included",
            ValidationStatus::ExcludedPopulationMismatch => "excluded_population_mismatch",
            ValidationStatus::ExcludedMissingEnergy => "excluded_missing_energy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub city_id: String,
    pub computed_population: u64,
    pub reported_population: u64,
    pub relative_error: f64,
    pub status: ValidationStatus,
}

/// Compares the block-summed population against the reported figure and
/// checks that the energy observables are present.
///
/// A population mismatch takes precedence over missing observables.
pub fn validate_city(dataset: &CityDataset, tolerance: f64) -> ValidationReport {
    let computed = dataset.computed_population();
    let reported = dataset.reported_population();
    let relative_error = if reported == 0 {
        f64::INFINITY
    } else {
        computed.abs_diff(reported) as f64 / reported as f64
    };
    let status = if !(relative_error <= tolerance) {
        ValidationStatus::ExcludedPopulationMismatch
    } else if !dataset.observables().has_energy() {
        ValidationStatus::ExcludedMissingEnergy
    } else {
        ValidationStatus::Included
    };
    ValidationReport {
        city_id: dataset.city_id().to_string(),
        computed_population: computed,
        reported_population: reported,
        relative_error,
        status,
    }
}

/// 2010 gasoline sales estimate: 2007 sales scaled by the payroll ratio.
pub fn extrapolate_sales(obs: &CityObservables) -> Result<f64, IngestError> {
    let sales = obs.gas_sales_2007.ok_or(IngestError::ExtrapolationUndefined("gas_sales_2007 absent"))?;
    let p07 = obs.payroll_2007.ok_or(IngestError::ExtrapolationUndefined("payroll_2007 absent"))?;
    let p10 = obs.payroll_2010.ok_or(IngestError::ExtrapolationUndefined("payroll_2010 absent"))?;
    if p07 <= 0.0 {
        return Err(IngestError::ExtrapolationUndefined("payroll_2007 is zero"));
    }
    Ok(sales * (p10 / p07))
}
