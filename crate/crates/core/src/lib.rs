//! Urban scaling indicator toolkit.
//!
//! Census blocks for a city are sorted by population density, grouped into
//! density classes with an exact 1D k-means, and the slope of class area
//! against inverse class density on log-log axes gives the scaling indicator
//! `ds`. Across a cohort of cities the indicator is correlated with energy and
//! emissions observables, and a kriged planning plane maps
//! `(mean density, ds)` to a dependent variable so that what-if development
//! scenarios can be read off it.
//!
//! Module map:
//!
//! * [`ingest`]: block and observables CSV parsing, population validation.
//! * [`cluster1d`]: exact and Lloyd 1D k-means over sorted densities.
//! * [`scaling`]: class aggregates, the scaling indicator, box counting,
//!   fractal spectra.
//! * [`stats`]: least squares and cross-city correlation.
//! * [`plane`]: variograms, ordinary kriging and the planning plane.
//! * [`scenario`]: scenario deltas and their evaluation against a plane.
//! * [`cohort`]: loading a directory of cities and deriving per-city rows.
//! * [`render`]: SVG/PNG/CSV exports.

pub mod cluster1d;
pub mod cohort;
pub mod ingest;
pub mod plane;
pub mod render;
pub mod scaling;
pub mod scenario;
pub mod stats;

pub use cluster1d::{kmeans_1d_exact, kmeans_1d_lloyd, Classing, ClusterError};
pub use ingest::{Block, CityDataset, CityObservables, IngestError, ValidationReport, ValidationStatus};
pub use plane::{build_plane, locate, PlaneError, PlanningPlane, SamplePoint, VariogramKind, VariogramModel};
pub use scaling::{city_indicator, scaling_indicator, ClassAggregate, CityIndicator, ScalingError, ScalingResult};
pub use scenario::{apply_delta, evaluate_scenario, ScenarioDelta, ScenarioError, ScenarioOutcome};
pub use stats::{ols, RegressionFit, StatsError};

/// Default number of density classes.
pub const DEFAULT_CLASSES: usize = 10;

/// Default relative population-mismatch tolerance for city validation.
pub const DEFAULT_TOLERANCE: f64 = 0.01;
