use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use urbscale_core::cohort::{Cohort, CohortError, CohortOptions, Dependent};
use urbscale_core::plane::{build_plane_with, CvStats, LagBin, PlaneConfig, PlaneError, PlanningPlane, VariogramModel};
use urbscale_core::render;
use urbscale_core::scaling::{city_spectrum, IndicatorOptions, DEFAULT_SPECTRUM_BINS};
use urbscale_core::scenario::{evaluate_scenario_with, ScenarioDelta};
use urbscale_core::stats::{correlate_cities, CorrelationResult, Field, StatsError};
use urbscale_service::{ServiceConfig, SessionState};

use crate::{Command, Common, DependentArg};

#[derive(Debug)]
pub struct CliError {
    pub exit_code: u8,
    pub message: String,
}

impl CliError {
    fn missing(message: impl Into<String>) -> Self {
        CliError { exit_code: 1, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError { exit_code: 2, message: message.into() }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        if e.is_data_error() {
            CliError::data(e.to_string())
        } else {
            CliError::missing(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Indicator(c) => with_pool(&c, || indicator(&c)),
        Command::Spectrum { common, city_id } => with_pool(&common, || spectrum(&common, &city_id)),
        Command::Correlate(c) => with_pool(&c, || correlate(&c)),
        Command::Plane { common, dependent } => with_pool(&common, || plane(&common, dependent)),
        Command::Scenario { common, city_id, delta_file, dependent } => {
            with_pool(&common, || scenario(&common, &city_id, &delta_file, dependent))
        }
        Command::Serve { common, port, host, static_dir } => serve(&common, &host, port, static_dir),
    }
}

fn with_pool(common: &Common, f: impl FnOnce() -> CliResult + Send) -> CliResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = common.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder.build().map_err(|e| CliError::missing(format!("cannot start worker threads: {e}")))?;
    pool.install(f)
}

fn options(common: &Common) -> CohortOptions {
    CohortOptions {
        indicator: IndicatorOptions::with_classes(common.classes),
        tolerance: common.tolerance,
        ..Default::default()
    }
}

fn load(common: &Common) -> CliResult<Cohort> {
    Ok(Cohort::load(&common.blocks_dir, &common.observables, options(common))?)
}

/// Writes named outputs under `--out`, then echoes the first one to stdout
/// if `--stdout` was given.
struct Outputs<'a> {
    common: &'a Common,
    files: Vec<(String, Vec<u8>)>,
}

impl<'a> Outputs<'a> {
    fn new(common: &'a Common) -> Self {
        Outputs { common, files: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: impl Into<String>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.add(name, text);
    }

    fn finish(self) -> CliResult {
        let out = match (&self.common.out, self.common.stdout) {
            (Some(out), _) => Some(out),
            (None, true) => None,
            (None, false) => return Err(CliError::missing("--out is required unless --stdout is given")),
        };
        if let Some(dir) = out {
            fs::create_dir_all(dir).map_err(|e| CliError::missing(format!("cannot create {}: {e}", dir.display())))?;
            for (name, bytes) in &self.files {
                let path = dir.join(name);
                fs::write(&path, bytes).map_err(|e| CliError::missing(format!("cannot write {}: {e}", path.display())))?;
                log::info!("wrote {}", path.display());
            }
        }
        if self.common.stdout {
            if let Some((_, bytes)) = self.files.first() {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| CliError::missing(e.to_string()))?;
            }
        }
        Ok(())
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("csv serialization to memory");
    }
    w.into_inner().expect("in-memory writer")
}

fn indicator(common: &Common) -> CliResult {
    let cohort = load(common)?;
    let rows = cohort.indicator_table();
    for entry in cohort.cities() {
        if let Ok(ind) = &entry.indicator {
            for warning in &ind.warnings {
                log::warn!("{}: {warning}", entry.city_id());
            }
        }
    }
    let mut out = Outputs::new(common);
    out.add("indicators.csv", csv_bytes(&rows));
    out.json("indicators.json", &rows);
    out.finish()
}

fn file_stem(city_id: &str) -> String {
    city_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn spectrum(common: &Common, city_id: &str) -> CliResult {
    let cohort = load(common)?;
    let entry = cohort.city(city_id).ok_or_else(|| CliError::missing(format!("no city `{city_id}`")))?;
    let bands = city_spectrum(&entry.dataset, common.classes, DEFAULT_SPECTRUM_BINS)
        .map_err(|e| CliError::data(format!("{city_id}: {e}")))?;
    let stem = file_stem(city_id);
    let mut out = Outputs::new(common);
    out.add(format!("spectrum_{stem}.svg"), render::spectrum_svg(city_id, &bands, DEFAULT_SPECTRUM_BINS));
    out.json(format!("spectrum_{stem}.json"), &bands);
    out.finish()
}

/// Field pairs reported by `correlate`.
pub const CORRELATION_PAIRS: [(Field, Field); 4] = [
    (Field::Ds, Field::GasPerArea),
    (Field::Ds, Field::Co2PerCapita),
    (Field::MeanDensity, Field::GasPerArea),
    (Field::MeanDensity, Field::Co2PerCapita),
];

fn correlate(common: &Common) -> CliResult {
    let cohort = load(common)?;
    let rows = cohort.correlation_rows();
    let mut results: Vec<CorrelationResult> = Vec::new();
    for transform in common.transform.transforms() {
        for (x, y) in CORRELATION_PAIRS {
            match correlate_cities(&rows, x, y, transform) {
                Ok(r) => {
                    if r.skipped_missing + r.skipped_nonpositive > 0 {
                        log::warn!(
                            "{} vs {} ({transform}): skipped {} missing and {} non-positive",
                            x.label(),
                            y.label(),
                            r.skipped_missing,
                            r.skipped_nonpositive
                        );
                    }
                    results.push(r);
                }
                Err(e @ StatsError::InsufficientData { .. }) => {
                    return Err(CliError::missing(format!("{} vs {} ({transform}): {e}", x.label(), y.label())))
                }
                Err(e) => return Err(CliError::data(format!("{} vs {} ({transform}): {e}", x.label(), y.label()))),
            }
        }
    }
    let mut out = Outputs::new(common);
    out.add("correlations.csv", csv_bytes(&results));
    out.json("correlations.json", &results);
    out.finish()
}

fn plane_error(e: PlaneError) -> CliError {
    match e {
        PlaneError::InsufficientData { .. } => CliError::missing(e.to_string()),
        _ => CliError::data(e.to_string()),
    }
}

fn build(common: &Common, cohort: &Cohort, dependent: Dependent) -> CliResult<PlanningPlane> {
    let samples = cohort.plane_samples(dependent);
    let config = PlaneConfig { nx: common.grid, ny: common.grid, kind: common.variogram.into(), ..Default::default() };
    build_plane_with(&samples, &config).map_err(plane_error)
}

#[derive(Serialize)]
struct CvReport<'a> {
    dependent: Dependent,
    samples: usize,
    variogram: &'a VariogramModel,
    cv_stats: &'a CvStats,
    empirical_variogram: &'a [LagBin],
}

fn plane(common: &Common, dependent: DependentArg) -> CliResult {
    let dependent = Dependent::from(dependent);
    let cohort = load(common)?;
    let plane = build(common, &cohort, dependent)?;
    let png = render::plane_png(&plane).map_err(|e| CliError::missing(format!("png encoding: {e}")))?;
    let title = format!("{dependent} over mean density and ds");
    let report = CvReport {
        dependent,
        samples: plane.samples.len(),
        variogram: &plane.variogram,
        cv_stats: &plane.cv_stats,
        empirical_variogram: &plane.empirical_variogram,
    };
    let mut out = Outputs::new(common);
    out.add(format!("plane_{dependent}.csv"), render::plane_csv(&plane));
    out.json(format!("plane_{dependent}.json"), &plane);
    out.add(format!("plane_{dependent}.svg"), render::plane_svg(&plane, &title, dependent.as_str()));
    out.add(format!("plane_{dependent}.png"), png);
    out.json(format!("plane_{dependent}_cv.json"), &report);
    out.finish()
}

fn scenario(common: &Common, city_id: &str, delta_file: &Path, dependent: DependentArg) -> CliResult {
    let text = fs::read_to_string(delta_file)
        .map_err(|e| CliError::missing(format!("cannot read {}: {e}", delta_file.display())))?;
    let delta: ScenarioDelta =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", delta_file.display())))?;
    let cohort = load(common)?;
    let entry = cohort.city(city_id).ok_or_else(|| CliError::missing(format!("no city `{city_id}`")))?;
    let plane = build(common, &cohort, dependent.into())?;
    let outcome = evaluate_scenario_with(&entry.dataset, &delta, &plane, &cohort.options().indicator)
        .map_err(|e| CliError::data(format!("{city_id}: {e}")))?;
    let mut out = Outputs::new(common);
    out.json(format!("scenario_{}.json", file_stem(city_id)), &outcome);
    out.finish()
}

fn serve(common: &Common, host: &str, port: u16, static_dir: Option<PathBuf>) -> CliResult {
    let mut runtime = tokio::runtime::Builder::new_multi_thread();
    if let Some(jobs) = common.jobs {
        runtime.worker_threads(jobs.max(1));
    }
    let runtime = runtime.enable_all().build().map_err(|e| CliError::missing(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| CliError::missing(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::missing(e.to_string()))?;
        eprintln!("listening on http://{addr}");

        let config = ServiceConfig { variogram: common.variogram.into(), grid: common.grid, static_dir };
        let state = Arc::new(SessionState::new(config));
        let (fail_tx, mut fail_rx) = tokio::sync::mpsc::channel::<CliError>(1);
        {
            let state = state.clone();
            let common = common.clone();
            tokio::task::spawn_blocking(move || match load(&common) {
                Ok(cohort) => {
                    log::info!("loaded {} cities", cohort.cities().len());
                    state.load(cohort);
                }
                Err(e) => {
                    let _ = fail_tx.blocking_send(e);
                }
            });
        }

        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(urbscale_service::serve(listener, state, async {
            let _ = stop_rx.await;
        }));
        let result = tokio::select! {
            _ = shutdown_signal() => Ok(()),
            Some(e) = fail_rx.recv() => Err(e),
        };
        let _ = stop_tx.send(());
        match server.await {
            Ok(Ok(())) => {}
            Ok(Err(e)) => return Err(CliError::missing(format!("server error: {e}"))),
            Err(e) => return Err(CliError::missing(format!("server task failed: {e}"))),
        }
        eprintln!("shut down");
        result
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}
