use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use tempfile::TempDir;
use topostudio::export::{density_to_mesh, extract_contours, write_stl, DEFAULT_ISO};
use topostudio::sketch::draw::{self, VectorSketch};
use topostudio::{fixtures, BackendKind, DensityField, GridDims, ProblemSpec};
use topostudio_cli::bench::Row;
use topostudio_service::artifacts;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topostudio"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_spec(dir: &Path, name: &str, spec: &ProblemSpec) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec(spec).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_the_library_artifacts() {
    let dir = TempDir::new().unwrap();
    let spec = fixtures::cantilever(30, 10, 0.5);
    let file = write_spec(dir.path(), "spec.json", &spec);
    let out = dir.path().join("out");
    let o = run(&["solve", "--spec", s(&file), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("compliance"));

    let (_, expected) = artifacts::run(&spec, &BackendKind::Deterministic, None, 10.0).unwrap();
    for a in expected {
        let written = std::fs::read(out.join(a.name)).unwrap();
        assert_eq!(written, a.bytes, "{} differs from the library output", a.name);
    }
}

#[test]
fn solve_overrides_and_base() {
    let dir = TempDir::new().unwrap();
    let spec = fixtures::cantilever(24, 8, 0.5);
    let file = write_spec(dir.path(), "spec.json", &spec);
    let first = dir.path().join("first");
    let o = run(&["solve", "--spec", s(&file), "--volfrac", "0.4", "--out", s(&first)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics: artifacts::Metrics =
        serde_json::from_slice(&std::fs::read(first.join("metrics.json")).unwrap()).unwrap();
    assert!((metrics.achieved_volfrac - 0.4).abs() <= 1e-3);

    // strength 0 from a base returns the base
    let second = dir.path().join("second");
    let base = first.join("density.json");
    let o = run(&[
        "solve", "--spec", s(&file), "--volfrac", "0.4", "--backend", "stoch", "--strength", "0",
        "--base", s(&base), "--out", s(&second),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a: DensityField = serde_json::from_slice(&std::fs::read(&base).unwrap()).unwrap();
    let b: DensityField = serde_json::from_slice(&std::fs::read(second.join("density.json")).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn solve_exit_codes() {
    let dir = TempDir::new().unwrap();
    let mut loose = fixtures::cantilever(12, 4, 0.5);
    loose.supports.clear();
    let file = write_spec(dir.path(), "loose.json", &loose);
    let o = run(&["solve", "--spec", s(&file), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unconstrained rigid body motion"), "{}", stderr(&o));
    assert!(!dir.path().join("x").exists());

    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/api/v1", dead.local_addr().unwrap());
    drop(dead);
    let good = write_spec(dir.path(), "good.json", &fixtures::cantilever(12, 4, 0.5));
    let o = run(&["solve", "--spec", s(&good), "--backend", "remote", "--remote-url", &url, "--out", s(&dir.path().join("y"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("remote backend unavailable"), "{}", stderr(&o));

    let png = dir.path().join("blank.png");
    std::fs::write(&png, VectorSketch::new(GridDims::new(8, 8).unwrap()).render(4).to_png()).unwrap();
    let o = run(&["solve", "--sketch", s(&png), "--spec", s(&good), "--out", s(&dir.path().join("z"))]);
    assert_eq!(o.status.code(), Some(2), "both inputs is a usage error");
    let o = run(&["solve", "--sketch", s(&png), "--nelx", "8", "--nely", "8", "--out", s(&dir.path().join("z"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty shape"));

    let o = run(&["solve", "--spec", s(&dir.path().join("missing.json")), "--out", s(&dir.path().join("z"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solve_from_sketch() {
    let dir = TempDir::new().unwrap();
    let dims = GridDims::new(32, 16).unwrap();
    // random samples may be under-constrained; take the first well-posed one
    let sketch = (0..)
        .map(|seed| draw::sample(dims, seed))
        .find(|sk| topostudio::validate_problem(&sk.to_problem(0.4)).is_empty())
        .unwrap();
    let png = dir.path().join("sketch.png");
    std::fs::write(&png, sketch.render(6).to_png()).unwrap();
    let out = dir.path().join("out");
    let o = run(&["solve", "--sketch", s(&png), "--nelx", "32", "--nely", "16", "--volfrac", "0.4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let density: DensityField = serde_json::from_slice(&std::fs::read(out.join("density.json")).unwrap()).unwrap();
    let expected = sketch.to_problem(0.4);
    assert!((density.volume_fraction(&expected.shape) - 0.4).abs() <= 1e-3);
}

#[test]
fn export_stl_volume() {
    let dir = TempDir::new().unwrap();
    let spec = fixtures::cantilever(30, 10, 0.5);
    let (result, _) = artifacts::run(&spec, &BackendKind::Deterministic, None, 10.0).unwrap();
    let path = dir.path().join("density.json");
    std::fs::write(&path, serde_json::to_vec(&result.density).unwrap()).unwrap();

    let o = run(&["export-stl", s(&path), "--height", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stl = std::fs::read(dir.path().join("density.stl")).unwrap();
    let mesh = density_to_mesh(&result.density, DEFAULT_ISO, 10.0).unwrap();
    assert_eq!(stl, write_stl(&mesh));

    let area = extract_contours(&result.density, DEFAULT_ISO).unwrap().net_area();
    let volume = stl_volume(&stl);
    assert!((volume - area * 10.0).abs() <= 1e-4 * area * 10.0, "{volume} vs {}", area * 10.0);

    let obj = dir.path().join("part.obj");
    let o = run(&["export-stl", s(&path), "--format", "obj", "-o", s(&obj)]);
    assert!(o.status.success());
    let back = topostudio::export::read_obj(&std::fs::read_to_string(&obj).unwrap()).unwrap();
    assert!((back.volume() - mesh.volume()).abs() <= 1e-6 * mesh.volume());

    std::fs::write(&path, b"{\"dims\": [2, 2], \"density\": [0.5]}").unwrap();
    assert_eq!(run(&["export-stl", s(&path)]).status.code(), Some(2));
}

/// Signed volume straight from the STL's f32 triangles.
fn stl_volume(stl: &[u8]) -> f64 {
    let n = u32::from_le_bytes(stl[80..84].try_into().unwrap()) as usize;
    assert_eq!(stl.len(), 84 + 50 * n);
    (0..n)
        .map(|t| {
            let rec = &stl[84 + 50 * t..];
            let v = |k: usize| -> [f64; 3] {
                std::array::from_fn(|c| {
                    let o = 12 + 12 * k + 4 * c;
                    f64::from(f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()))
                })
            };
            let (a, b, c) = (v(0), v(1), v(2));
            (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]))
                / 6.0
        })
        .sum()
}

#[test]
fn klm_outputs() {
    let line = |args: &[&str]| {
        let o = run(args);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o).trim().to_string()
    };
    assert_eq!(line(&["klm", "--workflow", "drawer", "--iterations", "0"]), "99.50");
    assert_eq!(line(&["klm", "--workflow", "geo", "--iterations", "2"]), "213.45");
    assert_eq!(line(&["klm", "--workflow", "DRAWER", "-n", "3"]), "200.60");
    assert!(line(&["klm", "--table"]).contains("  1    133.20    172.50"));
    assert!(line(&["klm", "--workflow", "geo", "-n", "1", "--breakdown"]).contains("M           54     72.90"));

    let dir = TempDir::new().unwrap();
    let ops = dir.path().join("ops.json");
    std::fs::write(&ops, r#"{"M": 0.0}"#).unwrap();
    let o = run(&["klm", "--workflow", "geo", "--operators", s(&ops)]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&ops, r#"{"R2": 20.0}"#).unwrap();
    // one R2 in the base sequence: +10 s
    assert_eq!(line(&["klm", "--workflow", "drawer", "--operators", s(&ops)]), "109.50");

    assert_eq!(run(&["klm", "--workflow", "rhino"]).status.code(), Some(2));
    assert_eq!(run(&["klm"]).status.code(), Some(2));
}

fn read_rows(path: &Path) -> Vec<Row> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn bench_deterministic_suite() {
    let dir = TempDir::new().unwrap();
    let suite = dir.path().join("suite.json");
    std::fs::write(&suite, r#"{"tasks": ["task1", "task2", "task3"], "backends": ["det"]}"#).unwrap();
    let out = dir.path().join("report.csv");
    let o = run(&["bench", "--suite", s(&suite), "--samples", "20", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let header = std::fs::read_to_string(&out).unwrap();
    assert!(header.starts_with("task,backend,mean_compliance,std_compliance,mean_vf,std_vf\n"));
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 3);
    for (row, task) in rows.iter().zip(["task1", "task2", "task3"]) {
        assert_eq!(row.task, task);
        assert_eq!(row.backend, "det");
        assert_eq!(row.std_compliance, 0.0);
        assert_eq!(row.std_vf, 0.0);
        let target = fixtures::by_name(task).unwrap().volfrac;
        assert!((row.mean_vf - target).abs() <= 1e-3);
    }

    std::fs::write(&suite, r#"{"tasks": ["task9"]}"#).unwrap();
    assert_eq!(run(&["bench", "--suite", s(&suite), "--out", s(&out)]).status.code(), Some(2));
    std::fs::write(&suite, r#"{"tasks": "task1"}"#).unwrap();
    assert_eq!(run(&["bench", "--suite", s(&suite), "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn bench_shipped_suite_stochastic_bound() {
    let dir = TempDir::new().unwrap();
    let suite = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("suites/tasks.json");
    let out = dir.path().join("report.csv");
    let o = run(&["bench", "--suite", s(&suite), "--samples", "20", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 6);
    for pair in rows.chunks(2) {
        let (det, stoch) = (&pair[0], &pair[1]);
        assert_eq!((det.backend.as_str(), stoch.backend.as_str()), ("det", "stoch"));
        assert!(stoch.std_compliance > 0.0, "{stoch:?}");
        assert!(stoch.std_vf >= 0.0);
        let ratio = stoch.mean_compliance / det.mean_compliance;
        assert!(ratio <= 2.0, "{}: stochastic/deterministic = {ratio}", det.task);
    }
}

#[test]
fn serve_reads_env_and_answers() {
    let dir = TempDir::new().unwrap();
    let mut child = bin()
        .arg("serve")
        .env("TOPOSTUDIO_PORT", "0")
        .env("TOPOSTUDIO_DATA_DIR", dir.path())
        .env("TOPOSTUDIO_WORKERS", "1")
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut first).unwrap();
    let base = first.trim().strip_prefix("listening on ").expect("address line").to_string();

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .into();
    let health: serde_json::Value = agent
        .get(&format!("{base}/api/v1/health"))
        .call()
        .unwrap()
        .into_body()
        .read_json()
        .unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(health["workers"], 1);
    assert!(dir.path().join("jobs.log").exists());
}

#[test]
fn help_lists_commands() {
    let o = run(&["--help"]);
    let text = stdout(&o);
    for cmd in ["solve", "bench", "klm", "export-stl", "serve"] {
        assert!(text.contains(cmd), "{text}");
    }
    let o = run(&["serve", "--help"]);
    assert!(stdout(&o).contains("TOPOSTUDIO_DATA_DIR"));
}
