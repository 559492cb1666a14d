//! Synthetic cities shared by the integration tests and the fixture
//! generator.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use urbscale_core::ingest::{Block, CityDataset, CityObservables};
use urbscale_core::scaling::city_indicator;

/// Ten density classes whose aggregates satisfy `a = C·ρ^(−d)` exactly up
/// to rounding. Each class is split into three blocks of equal density
/// (population and area in ratio 1:2:3).
pub fn power_law_blocks(d: f64) -> Vec<Block> {
    let c: f64 = 50.0;
    let mut blocks = Vec::new();
    for j in 0..10u64 {
        let (p, a) = if d == 1.0 {
            (6_000u64, 0.1 * 1.5f64.powi(j as i32))
        } else {
            let p = 6 * (100 + 37 * j * j);
            (p, (c * (p as f64).powf(-d)).powf(1.0 / (1.0 - d)))
        };
        let m = p / 6;
        for (part, share) in [1u64, 2, 3].into_iter().enumerate() {
            let id = format!("c{j}_{part}");
            blocks.push(Block::new(id, a * share as f64 / 6.0, m * share).unwrap());
        }
    }
    blocks
}

pub fn dataset(id: &str, blocks: Vec<Block>) -> CityDataset {
    let total = blocks.iter().map(|b| b.population).sum();
    CityDataset::new(id, blocks, total, CityObservables::default()).unwrap()
}

/// Blocks with log-uniform densities whose areas fall off as `ρ^(−gamma)`
/// with lognormal noise; about 3% of blocks are unpopulated.
pub fn synth_blocks(rng: &mut ChaCha8Rng, n: usize, gamma: f64) -> Vec<Block> {
    let noise = Normal::new(0.0, 0.4).unwrap();
    (0..n)
        .map(|i| {
            let id = format!("b{i:04}");
            let log_rho: f64 = rng.random_range(1.0..3.8);
            let area = 0.05 * (-gamma * (log_rho - 2.0) * std::f64::consts::LN_10 + noise.sample(rng)).exp();
            let area = (area * 1e6).round().max(1.0) / 1e6;
            let population = if rng.random_bool(0.03) { 0 } else { ((10f64.powf(log_rho) * area).round() as u64).max(1) };
            Block::new(id, area, population).unwrap()
        })
        .collect()
}

/// Observables for a city whose gasoline use per populated km² and road
/// emissions per capita both rise with `ds`.
pub fn synth_observables(rng: &mut ChaCha8Rng, ds: f64, populated_area: f64) -> CityObservables {
    let noise = Normal::new(0.0, 0.05).unwrap();
    let gas_per_area = 1e5 * 10f64.powf(0.8 * ds + noise.sample(rng));
    let payroll_2007 = (rng.random_range(1e8..5e9f64)).round();
    let payroll_2010 = (payroll_2007 * rng.random_range(0.95..1.1)).round();
    let sales_2010 = gas_per_area * populated_area;
    let co2 = 1.5 + 2.0 * ds + Normal::new(0.0, 0.2).unwrap().sample(rng);
    CityObservables {
        gas_sales_2007: Some((sales_2010 * payroll_2007 / payroll_2010).round()),
        payroll_2007: Some(payroll_2007),
        payroll_2010: Some(payroll_2010),
        co2_road_per_capita: Some((co2 * 1000.0).round() / 1000.0),
    }
}

/// A complete city that passes validation.
pub fn synth_city(rng: &mut ChaCha8Rng, id: &str, n_blocks: usize) -> CityDataset {
    let gamma = rng.random_range(0.2..1.0);
    let blocks = synth_blocks(rng, n_blocks, gamma);
    let base = dataset(id, blocks.clone());
    let ds = city_indicator(&base, urbscale_core::DEFAULT_CLASSES).unwrap().result.ds;
    let obs = synth_observables(rng, ds, base.populated_area());
    CityDataset::new(id, blocks, base.computed_population(), obs).unwrap()
}

pub fn synth_cohort(rng: &mut ChaCha8Rng, n_cities: usize) -> Vec<CityDataset> {
    (0..n_cities)
        .map(|i| {
            let n_blocks = rng.random_range(150..400);
            synth_city(rng, &format!("city{i:02}"), n_blocks)
        })
        .collect()
}
