//! Regenerates the bundled fixture cohort under `fixtures/cohort`.
//!
//! ```text
//! cargo run -p urbscale-core --example make_fixtures [out_dir]
//! ```

#[path = "../tests/common/mod.rs"]
mod common;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use urbscale_core::ingest::{blocks_to_csv, Block, CityDataset, CityObservables, OBSERVABLES_HEADER};

const CITIES: [&str; 15] = [
    "alderton",
    "birchfield",
    "cedarport",
    "dunmore",
    "elmstead",
    "fairhaven",
    "glenrock",
    "harlow",
    "ironbridge",
    "juniper_falls",
    "kestrel_bay",
    "lakemont",
    "millbrook",
    "northgate",
    "oakridge",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/cohort")
    });
    let blocks_dir = out.join("blocks");
    if blocks_dir.exists() {
        fs::remove_dir_all(&blocks_dir).unwrap();
    }
    fs::create_dir_all(&blocks_dir).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(20_100_401);
    let mut table = OBSERVABLES_HEADER.join(",");
    table.push('\n');
    for name in CITIES {
        let city = match name {
            // One density everywhere: a single-band spectrum and no indicator.
            "oakridge" => {
                let blocks = (0..20).map(|i| Block::new(format!("b{i:04}"), 0.5, 1_000).unwrap()).collect();
                let base = common::dataset(name, blocks);
                let obs = common::synth_observables(&mut rng, 1.0, base.populated_area());
                CityDataset::new(name, base.blocks().to_vec(), base.computed_population(), obs).unwrap()
            }
            _ => {
                let n_blocks = rand::Rng::random_range(&mut rng, 150..400);
                common::synth_city(&mut rng, name, n_blocks)
            }
        };
        let computed = city.computed_population();
        let (reported, obs) = match name {
            "harlow" => (computed + computed * 4 / 1000, city.observables().clone()),
            "millbrook" => (computed + computed / 20, city.observables().clone()),
            "northgate" => {
                let obs = CityObservables { co2_road_per_capita: city.observables().co2_road_per_capita, ..Default::default() };
                (computed, obs)
            }
            _ => (computed, city.observables().clone()),
        };
        fs::write(blocks_dir.join(format!("{name}.csv")), blocks_to_csv(city.blocks())).unwrap();
        let _ = writeln!(
            table,
            "{name},{reported},{},{},{},{}",
            opt(obs.gas_sales_2007),
            opt(obs.payroll_2007),
            opt(obs.payroll_2010),
            opt(obs.co2_road_per_capita)
        );
    }
    fs::write(out.join("observables.csv"), table).unwrap();

    let delta = r#"{
  "added_blocks": [
    {"block_id": "dev_1", "area_km2": 2.5, "population": 40},
    {"block_id": "dev_2", "area_km2": 3.0, "population": 55},
    {"block_id": "dev_3", "area_km2": 1.75, "population": 30}
  ],
  "modified": [
    {"block_id": "b0002", "population": 500}
  ],
  "removed": ["b0001"]
}
"#;
    fs::write(out.join("alderton_sprawl.json"), delta).unwrap();
    println!("wrote {}", out.display());
}
