//! What-if development scenarios.
//!
//! A [`ScenarioDelta`] adds, re-populates and removes blocks of a base
//! city. The modified city is scored with the same indicator pipeline and
//! both points are read off a fixed planning plane; the plane itself is not
//! rebuilt.
//!
//! JSON schema (`--delta-file`, `POST /api/scenario`):
//!
//! ```json
//! {
//!   "added_blocks": [{"block_id": "N1", "area_km2": 1.5, "population": 4200}],
//!   "modified": [{"block_id": "B7", "population": 0}],
//!   "removed": ["B9"]
//! }
//! ```
//!
//! Every list may be omitted. A block id that is both removed and added is
//! replaced in place; other added blocks are appended in block id order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Block, CityDataset};
use crate::plane::{self, PlaneError, PlanningPlane};
use crate::scaling::{self, IndicatorOptions, ScalingError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("block `{0}` does not exist in the city")]
    UnknownBlock(String),
    #[error("block `{0}` already exists in the city")]
    IdCollision(String),
    #[error("block `{0}` appears more than once in the same list")]
    DuplicateId(String),
    #[error("block `{block_id}` would have negative population {population}")]
    NegativePopulation { block_id: String, population: i64 },
    #[error("block `{block_id}` has non-positive area {area}")]
    NonPositiveArea { block_id: String, area: f64 },
    #[error("scenario removes every block")]
    EmptyCity,
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Plane(#[from] PlaneError),
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::UnknownBlock(_) => "unknown-block",
            ScenarioError::IdCollision(_) => "id-collision",
            ScenarioError::DuplicateId(_) => "duplicate-id",
            ScenarioError::NegativePopulation { .. } => "negative-population",
            ScenarioError::NonPositiveArea { .. } => "non-positive-area",
            ScenarioError::EmptyCity => "empty-city",
            ScenarioError::Scaling(e) => e.code(),
            ScenarioError::Plane(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewBlock {
    pub block_id: String,
    pub area_km2: f64,
    pub population: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationChange {
    pub block_id: String,
    pub population: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDelta {
    #[serde(default)]
    pub added_blocks: Vec<NewBlock>,
    #[serde(default)]
    pub modified: Vec<PopulationChange>,
    #[serde(default)]
    pub removed: Vec<String>,
}

impl ScenarioDelta {
    pub fn is_empty(&self) -> bool {
        self.added_blocks.is_empty() && self.modified.is_empty() && self.removed.is_empty()
    }
}

fn non_negative(block_id: &str, population: i64) -> Result<u64, ScenarioError> {
    u64::try_from(population)
        .map_err(|_| ScenarioError::NegativePopulation { block_id: block_id.to_string(), population })
}

/// Applies a delta, returning a new dataset; `dataset` is left untouched.
pub fn apply_delta(dataset: &CityDataset, delta: &ScenarioDelta) -> Result<CityDataset, ScenarioError> {
    let index: HashMap<&str, usize> = dataset.blocks().iter().enumerate().map(|(i, b)| (b.block_id.as_str(), i)).collect();

    let mut removed = BTreeSet::new();
    for id in &delta.removed {
        if !index.contains_key(id.as_str()) {
            return Err(ScenarioError::UnknownBlock(id.clone()));
        }
        if !removed.insert(id.as_str()) {
            return Err(ScenarioError::DuplicateId(id.clone()));
        }
    }

    let mut changes = HashMap::new();
    for m in &delta.modified {
        if !index.contains_key(m.block_id.as_str()) || removed.contains(m.block_id.as_str()) {
            return Err(ScenarioError::UnknownBlock(m.block_id.clone()));
        }
        let population = non_negative(&m.block_id, m.population)?;
        if changes.insert(m.block_id.as_str(), population).is_some() {
            return Err(ScenarioError::DuplicateId(m.block_id.clone()));
        }
    }

    let mut replacements: HashMap<&str, Block> = HashMap::new();
    let mut appended: BTreeMap<&str, Block> = BTreeMap::new();
    for nb in &delta.added_blocks {
        let population = non_negative(&nb.block_id, nb.population)?;
        if !(nb.area_km2 > 0.0 && nb.area_km2.is_finite()) {
            return Err(ScenarioError::NonPositiveArea { block_id: nb.block_id.clone(), area: nb.area_km2 });
        }
        let block = Block { block_id: nb.block_id.clone(), area_km2: nb.area_km2, population };
        let id = nb.block_id.as_str();
        let target = if removed.contains(id) {
            &mut replacements
        } else if index.contains_key(id) {
            return Err(ScenarioError::IdCollision(nb.block_id.clone()));
        } else {
            if appended.contains_key(id) {
                return Err(ScenarioError::DuplicateId(nb.block_id.clone()));
            }
            appended.insert(id, block);
            continue;
        };
        if target.insert(id, block).is_some() {
            return Err(ScenarioError::DuplicateId(nb.block_id.clone()));
        }
    }

    let mut blocks = Vec::with_capacity(dataset.blocks().len() + appended.len());
    for b in dataset.blocks() {
        let id = b.block_id.as_str();
        if removed.contains(id) {
            if let Some(r) = replacements.remove(id) {
                blocks.push(r);
            }
            continue;
        }
        let mut b = b.clone();
        if let Some(&p) = changes.get(id) {
            b.population = p;
        }
        blocks.push(b);
    }
    blocks.extend(appended.into_values());
    if blocks.is_empty() {
        return Err(ScenarioError::EmptyCity);
    }
    Ok(dataset.with_blocks(blocks))
}

/// One city's position on the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub ds: f64,
    pub mean_density: f64,
    pub plane_estimate: f64,
    pub kriging_variance: f64,
    pub inside_hull: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDelta {
    pub ds: f64,
    pub mean_density: f64,
    pub plane_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub city_id: String,
    pub base: PlanePoint,
    pub scenario: PlanePoint,
    /// `scenario − base`, per field.
    pub delta: PointDelta,
}

fn place(dataset: &CityDataset, plane: &PlanningPlane, options: &IndicatorOptions) -> Result<PlanePoint, ScenarioError> {
    let ind = scaling::city_indicator_with(dataset, options)?;
    let loc = plane::locate(plane, ind.mean_density, ind.result.ds)?;
    Ok(PlanePoint {
        ds: ind.result.ds,
        mean_density: ind.mean_density,
        plane_estimate: loc.estimate,
        kriging_variance: loc.variance,
        inside_hull: loc.inside_hull,
    })
}

/// Scores the base and modified city and places both on `plane`.
pub fn evaluate_scenario(
    base: &CityDataset,
    delta: &ScenarioDelta,
    plane: &PlanningPlane,
    c: usize,
) -> Result<ScenarioOutcome, ScenarioError> {
    evaluate_scenario_with(base, delta, plane, &IndicatorOptions::with_classes(c))
}

pub fn evaluate_scenario_with(
    base: &CityDataset,
    delta: &ScenarioDelta,
    plane: &PlanningPlane,
    options: &IndicatorOptions,
) -> Result<ScenarioOutcome, ScenarioError> {
    let modified = apply_delta(base, delta)?;
    let base_point = place(base, plane, options)?;
    let scenario_point = place(&modified, plane, options)?;
    let delta = PointDelta {
        ds: scenario_point.ds - base_point.ds,
        mean_density: scenario_point.mean_density - base_point.mean_density,
        plane_estimate: scenario_point.plane_estimate - base_point.plane_estimate,
    };
    Ok(ScenarioOutcome { city_id: base.city_id().to_string(), base: base_point, scenario: scenario_point, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::CityObservables;

    fn two_block_city() -> CityDataset {
        let blocks = vec![Block::new("A", 2.0, 100).unwrap(), Block::new("B", 1.0, 300).unwrap()];
        CityDataset::new("c", blocks, 400, CityObservables::default()).unwrap()
    }

    fn add(id: &str, area: f64, population: i64) -> NewBlock {
        NewBlock { block_id: id.into(), area_km2: area, population }
    }

    #[test]
    fn empty_delta_is_identity() {
        let city = two_block_city();
        assert_eq!(apply_delta(&city, &ScenarioDelta::default()).unwrap(), city);
    }

    #[test]
    fn remove_and_readd_restores() {
        let city = two_block_city();
        let delta = ScenarioDelta { added_blocks: vec![add("A", 2.0, 100)], removed: vec!["A".into()], ..Default::default() };
        assert_eq!(apply_delta(&city, &delta).unwrap(), city);
    }

    #[test]
    fn added_block_extends_city() {
        let city = two_block_city();
        let delta = ScenarioDelta { added_blocks: vec![add("N", 1.0, 5000)], ..Default::default() };
        let out = apply_delta(&city, &delta).unwrap();
        assert_eq!(out.blocks().len(), 3);
        assert_eq!(out.computed_population(), city.computed_population() + 5000);
        assert_eq!(city.blocks().len(), 2);
    }

    #[test]
    fn invalid_deltas() {
        let city = two_block_city();
        let cases = [
            (ScenarioDelta { removed: vec!["Z".into()], ..Default::default() }, "unknown-block"),
            (
                ScenarioDelta { modified: vec![PopulationChange { block_id: "Z".into(), population: 1 }], ..Default::default() },
                "unknown-block",
            ),
            (ScenarioDelta { added_blocks: vec![add("A", 1.0, 1)], ..Default::default() }, "id-collision"),
            (ScenarioDelta { added_blocks: vec![add("N", 1.0, -1)], ..Default::default() }, "negative-population"),
            (ScenarioDelta { added_blocks: vec![add("N", 0.0, 1)], ..Default::default() }, "non-positive-area"),
            (
                ScenarioDelta { modified: vec![PopulationChange { block_id: "A".into(), population: -5 }], ..Default::default() },
                "negative-population",
            ),
            (ScenarioDelta { added_blocks: vec![add("N", 1.0, 1), add("N", 2.0, 1)], ..Default::default() }, "duplicate-id"),
            (ScenarioDelta { removed: vec!["A".into(), "B".into()], ..Default::default() }, "empty-city"),
        ];
        for (delta, code) in cases {
            assert_eq!(apply_delta(&city, &delta).unwrap_err().code(), code, "{delta:?}");
        }
    }

    #[test]
    fn list_order_does_not_matter() {
        let city = two_block_city();
        let a = ScenarioDelta {
            added_blocks: vec![add("X", 1.0, 10), add("Y", 3.0, 20)],
            modified: vec![
                PopulationChange { block_id: "A".into(), population: 7 },
                PopulationChange { block_id: "B".into(), population: 9 },
            ],
            removed: vec![],
        };
        let mut b = a.clone();
        b.added_blocks.reverse();
        b.modified.reverse();
        assert_eq!(apply_delta(&city, &a).unwrap(), apply_delta(&city, &b).unwrap());
    }

    #[test]
    fn delta_json_schema() {
        let d: ScenarioDelta = serde_json::from_str(r#"{"removed": ["B9"]}"#).unwrap();
        assert_eq!(d.removed, vec!["B9".to_string()]);
        assert!(d.added_blocks.is_empty());
        assert!(serde_json::from_str::<ScenarioDelta>(r#"{"remove": ["B9"]}"#).is_err());
        let back: ScenarioDelta = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
