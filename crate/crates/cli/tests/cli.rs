use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_urbscale");
const OBS_HEADER: &str = "city_id,reported_population,gas_sales_2007_usd,payroll_2007_usd,payroll_2010_usd,co2_road_tpc\n";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/cohort")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("URBSCALE_LOG", "error").output().unwrap()
}

fn with_data(cmd: &str, blocks: &Path, obs: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--blocks-dir",
        blocks.to_str().unwrap(),
        "--observables",
        obs.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn fixture_run(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let f = fixtures();
    with_data(cmd, &f.join("blocks"), &f.join("observables.csv"), out, extra)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A city of ten single-block classes with `area = (c·p^(−d))^(1/(1−d))`,
/// so its indicator is exactly `d`.
fn power_law_csv(d: f64) -> (String, u64, f64) {
    let mut s = String::from("block_id,area_km2,population\n");
    let (mut total, mut area) = (0, 0.0);
    for j in 0..10u64 {
        let p = 100 + 40 * j * j;
        let a = (50.0 * (p as f64).powf(-d)).powf(1.0 / (1.0 - d));
        s.push_str(&format!("b{j},{a},{p}\n"));
        total += p;
        area += a;
    }
    (s, total, area)
}

struct Cohort {
    _dir: tempfile::TempDir,
    blocks: PathBuf,
    obs: PathBuf,
    out: PathBuf,
}

/// Writes one power-law city per `(id, d, gas_per_area, co2)`; cities whose
/// id starts with `bad` report a population 10% too high.
fn cohort(cities: &[(&str, f64, f64, Option<f64>)]) -> Cohort {
    let dir = tempfile::tempdir().unwrap();
    let blocks = dir.path().join("blocks");
    fs::create_dir(&blocks).unwrap();
    let mut obs = String::from(OBS_HEADER);
    for &(id, d, gas_per_area, co2) in cities {
        let (csv, total, area) = power_law_csv(d);
        fs::write(blocks.join(format!("{id}.csv")), csv).unwrap();
        let reported = if id.starts_with("bad") { total + total / 10 } else { total };
        let co2 = co2.map(|c| c.to_string()).unwrap_or_default();
        obs.push_str(&format!("{id},{reported},{},1000,1000,{co2}\n", gas_per_area * area));
    }
    let obs_path = dir.path().join("obs.csv");
    fs::write(&obs_path, obs).unwrap();
    let out = dir.path().join("out");
    Cohort { blocks, obs: obs_path, out, _dir: dir }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn indicator_three_city_table() {
    let c = cohort(&[("alpha", 0.5, 1.0, Some(1.0)), ("beta", 1.7, 2.0, Some(2.0)), ("bad_gamma", 1.2, 3.0, None)]);
    let o = with_data("indicator", &c.blocks, &c.obs, &c.out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(c.out.join("indicators.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().next().unwrap().starts_with("city_id,status,"));
    let rows = read_json(&c.out.join("indicators.json"));
    let rows = rows.as_array().unwrap();
    let ids: Vec<&str> = rows.iter().map(|r| r["city_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["alpha", "bad_gamma", "beta"]);
    assert!((rows[0]["ds"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!((rows[2]["ds"].as_f64().unwrap() - 1.7).abs() < 1e-9);
    assert_eq!(rows[1]["status"], "excluded_population_mismatch");
    assert_eq!(rows[0]["status"], "included");
}

#[test]
fn input_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = dir.path().join("blocks");
    fs::create_dir(&blocks).unwrap();
    let obs = dir.path().join("obs.csv");
    fs::write(&obs, format!("{OBS_HEADER}a,3,,,,\n")).unwrap();
    let out = dir.path().join("out");

    let o = with_data("indicator", &blocks, &obs, &out, &[]);
    assert_eq!(code(&o), 1, "empty blocks dir: {}", stderr(&o));

    let o = with_data("indicator", &blocks, &dir.path().join("missing.csv"), &out, &[]);
    assert_eq!(code(&o), 1);

    fs::write(blocks.join("a.csv"), "block_id,area_km2,population\nx,1,3\n").unwrap();
    fs::write(blocks.join("a.CSV"), "block_id,area_km2,population\nx,1,3\n").unwrap();
    let o = with_data("indicator", &blocks, &obs, &out, &[]);
    assert_eq!(code(&o), 2, "duplicate city file: {}", stderr(&o));

    fs::remove_file(blocks.join("a.CSV")).unwrap();
    fs::write(blocks.join("a.csv"), "block_id,area_km2,population\nx,zero,3\n").unwrap();
    let o = with_data("indicator", &blocks, &obs, &out, &[]);
    assert_eq!(code(&o), 2, "malformed row: {}", stderr(&o));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = run(&["indicator", "--blocks-dir", blocks.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "missing flag");
}

#[test]
fn spectrum_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixture_run("spectrum", dir.path(), &["--city", "alderton"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("spectrum_alderton.svg")).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/spectrum_alderton.svg");
    if std::env::var_os("URBSCALE_BLESS").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &svg).unwrap();
    }
    assert_eq!(svg, fs::read_to_string(&golden).unwrap(), "rerun with URBSCALE_BLESS=1 after an intended change");
    assert_eq!(svg.matches("data-class=").count(), 10);
}

#[test]
fn spectrum_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixture_run("spectrum", dir.path(), &["--city", "atlantis"]);
    assert_eq!(code(&o), 1);

    let o = fixture_run("spectrum", dir.path(), &["--city", "oakridge"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("spectrum_oakridge.svg")).unwrap();
    assert_eq!(svg.matches("data-class=").count(), 1);
}

#[test]
fn correlate_monotone_set() {
    let ids: Vec<(String, f64)> = (0..6).map(|i| (format!("c{i}"), 0.55 + 0.2 * i as f64)).collect();
    let table: Vec<(&str, f64, f64, Option<f64>)> = ids
        .iter()
        .enumerate()
        .map(|(i, (id, d))| (id.as_str(), *d, 1000.0 + 500.0 * d, if i == 0 { None } else { Some(1.0 + d) }))
        .collect();
    let c = cohort(&table);
    let o = with_data("correlate", &c.blocks, &c.obs, &c.out, &["--transform", "all"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_json(&c.out.join("correlations.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 16);
    let gas = rows.iter().find(|r| r["x_label"] == "ds" && r["y_label"] == "gas_per_area" && r["transform"] == "linear").unwrap();
    assert!(gas["pearson_r"].as_f64().unwrap() > 0.99);
    let co2 = rows.iter().find(|r| r["x_label"] == "ds" && r["y_label"] == "co2_per_capita").unwrap();
    assert_eq!(co2["skipped_missing"], 1);
    assert_eq!(co2["n"], 5);

    let few = cohort(&[("a", 0.5, 1.0, None), ("b", 0.9, 2.0, None)]);
    let o = with_data("correlate", &few.blocks, &few.obs, &few.out, &[]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn plane_outputs_and_limits() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixture_run("plane", dir.path(), &["--dependent", "co2_per_capita", "--grid", "30"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for ext in ["csv", "json", "svg", "png"] {
        assert!(dir.path().join(format!("plane_co2_per_capita.{ext}")).exists(), "{ext}");
    }
    let csv = fs::read_to_string(dir.path().join("plane_co2_per_capita.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 30 * 30);
    let cv = read_json(&dir.path().join("plane_co2_per_capita_cv.json"));
    assert_eq!(cv["samples"], 12);

    let nine: Vec<(String, f64)> = (0..9).map(|i| (format!("c{i}"), 0.5 + 0.15 * i as f64)).collect();
    let table: Vec<_> = nine.iter().map(|(id, d)| (id.as_str(), *d, 1.0 + d, Some(2.0))).collect();
    let c = cohort(&table);
    let o = with_data("plane", &c.blocks, &c.obs, &c.out, &[]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn constant_plane_is_flat() {
    let ids: Vec<(String, f64)> = (0..10).map(|i| (format!("c{i}"), 0.5 + 0.13 * i as f64)).collect();
    let table: Vec<_> = ids.iter().map(|(id, d)| (id.as_str(), *d, 1.0, Some(7.0))).collect();
    let c = cohort(&table);
    let o = with_data("plane", &c.blocks, &c.obs, &c.out, &["--dependent", "co2_per_capita", "--grid", "12"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(c.out.join("plane_co2_per_capita.svg")).unwrap();
    assert!(!svg.contains("<path"));
    let fills: std::collections::BTreeSet<&str> =
        svg.lines().filter(|l| l.contains(r#"width="6""#)).filter_map(|l| l.split("fill=\"").nth(1)).collect();
    assert_eq!(fills.len(), 1);
}

#[test]
fn scenario_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "{}").unwrap();
    let o = fixture_run("scenario", dir.path(), &["--city", "alderton", "--delta-file", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&dir.path().join("scenario_alderton.json"));
    assert_eq!(v["delta"]["ds"], 0.0);
    assert_eq!(v["delta"]["plane_estimate"], 0.0);

    // Doubling every block's population leaves ds where it was.
    let blocks = fs::read_to_string(fixtures().join("blocks/glenrock.csv")).unwrap();
    let modified: Vec<String> = blocks
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!(r#"{{"block_id": "{}", "population": {}}}"#, f[0], 2 * f[2].parse::<u64>().unwrap())
        })
        .collect();
    let doubled = dir.path().join("doubled.json");
    fs::write(&doubled, format!(r#"{{"modified": [{}]}}"#, modified.join(","))).unwrap();
    let o = fixture_run("scenario", dir.path(), &["--city", "glenrock", "--delta-file", doubled.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&dir.path().join("scenario_glenrock.json"));
    assert!(v["delta"]["ds"].as_f64().unwrap().abs() < 1e-12);
    assert!(v["delta"]["mean_density"].as_f64().unwrap() > 0.0);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"added_blocks": [{"block_id": 3}"#).unwrap();
    let o = fixture_run("scenario", dir.path(), &["--city", "alderton", "--delta-file", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = fixture_run("scenario", dir.path(), &["--city", "alderton", "--delta-file", "/nonexistent/delta.json"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn stdout_flag_echoes_main_output() {
    let f = fixtures();
    let o = run(&[
        "indicator",
        "--blocks-dir",
        f.join("blocks").to_str().unwrap(),
        "--observables",
        f.join("observables.csv").to_str().unwrap(),
        "--stdout",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 16);
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, jobs) in [(a.path(), "1"), (b.path(), "4")] {
        for (cmd, extra) in [("indicator", vec![]), ("correlate", vec!["--transform", "all"]), ("plane", vec!["--grid", "40"])] {
            let mut args = extra.clone();
            args.extend(["--jobs", jobs]);
            let o = fixture_run(cmd, dir, &args);
            assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
        }
    }
    let (da, db) = (dir_contents(a.path()), dir_contents(b.path()));
    assert_eq!(da.len(), 9);
    for ((na, ba), (nb, bb)) in da.iter().zip(&db) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
}

struct Server {
    child: std::process::Child,
    addr: String,
}

fn start_server(port: u16) -> Server {
    let f = fixtures();
    let mut child = Command::new(BIN)
        .args([
            "serve",
            "--blocks-dir",
            f.join("blocks").to_str().unwrap(),
            "--observables",
            f.join("observables.csv").to_str().unwrap(),
            "--grid",
            "20",
            "--port",
            &port.to_string(),
        ])
        .env("URBSCALE_LOG", "error")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let addr = first.strip_prefix("listening on http://").unwrap_or_else(|| panic!("unexpected: {first}")).to_string();
    std::thread::spawn(move || for _ in lines {});
    Server { child, addr }
}

fn http_get(addr: &str, path: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let status = response.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, response)
}

fn wait_for_exit(child: &mut std::process::Child, limit: Duration) -> Option<std::process::ExitStatus> {
    let start = Instant::now();
    while start.elapsed() < limit {
        if let Some(status) = child.try_wait().unwrap() {
            return Some(status);
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    None
}

#[test]
fn serve_health_and_sigterm() {
    let mut server = start_server(0);
    let (status, response) = http_get(&server.addr, "/api/health");
    assert_eq!(status, 200);
    assert!(response.to_ascii_lowercase().contains("x-urbscale-version: 1"));

    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let (status, body) = http_get(&server.addr, "/api/cities");
        if status == 200 {
            assert!(body.contains("alderton"));
            break;
        }
        assert_eq!(status, 503);
        assert!(Instant::now() < deadline, "cohort never loaded");
        std::thread::sleep(Duration::from_millis(50));
    }

    unsafe {
        libc::kill(server.child.id() as i32, libc::SIGTERM);
    }
    let status = wait_for_exit(&mut server.child, Duration::from_secs(10)).expect("server did not stop on SIGTERM");
    assert!(status.success(), "{status:?}");
}

#[test]
fn serve_port_in_use() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let f = fixtures();
    let mut child = Command::new(BIN)
        .args([
            "serve",
            "--blocks-dir",
            f.join("blocks").to_str().unwrap(),
            "--observables",
            f.join("observables.csv").to_str().unwrap(),
            "--port",
            &port,
        ])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let status = wait_for_exit(&mut child, Duration::from_secs(10)).unwrap_or_else(|| {
        let _ = child.kill();
        panic!("server did not exit");
    });
    assert_eq!(status.code(), Some(1));
}
