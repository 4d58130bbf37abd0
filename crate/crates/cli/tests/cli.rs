use std::fs;
use std::path::Path;
use std::process::Command;

use qdcav_cli::{load_config, parse_config, run, ConfigError, RunConfig, CSV_HEADER, KEYS};
use qdcav_core::Scenario;

fn qdcav(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qdcav"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn small(dir: &Path) -> RunConfig {
    let text = format!(
        "sweep.start = -1.0\nsweep.stop = 1.0\nsweep.n_steps = 9\noutput.dir = \"{}\"\n",
        dir.display()
    );
    parse_config(&text, Scenario::Fig3a).unwrap()
}

#[test]
fn default_run_writes_one_row_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qdcav(&["--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 121);
    assert!(tmp.path().join("config-echo.json").exists());
}

#[test]
fn emit_spectra_writes_every_point() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.output.emit_spectra = true;
    let summary = run(&cfg, Some(1)).unwrap();
    assert_eq!(summary.points, 9);
    let spectra: Vec<_> = fs::read_dir(tmp.path().join("spectra")).unwrap().collect();
    assert_eq!(spectra.len(), 9);
    let first = fs::read_to_string(tmp.path().join("spectra/point_0000.csv")).unwrap();
    assert_eq!(first.lines().next(), Some("energy_meV,density"));
    assert_eq!(first.lines().count(), 1 + cfg.grid.n_points);
}

#[test]
fn config_echo_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(&tmp.path().join("a"));
    run(&cfg, Some(1)).unwrap();
    let echo = tmp.path().join("a/config-echo.json");
    let mut again = load_config(&echo, Scenario::Fig2ghi).unwrap();
    assert_eq!(again, cfg);
    again.output.dir = tmp.path().join("b");
    run(&again, Some(1)).unwrap();
    let a = fs::read(tmp.path().join("a/sweep.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/sweep.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(&tmp.path().join("one"));
    cfg.run.noise = 0.01;
    cfg.run.seed = 7;
    run(&cfg, Some(1)).unwrap();
    cfg.output.dir = tmp.path().join("three");
    run(&cfg, Some(3)).unwrap();
    let a = fs::read(tmp.path().join("one/sweep.csv")).unwrap();
    let b = fs::read(tmp.path().join("three/sweep.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn several_quality_factors_get_their_own_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "[sweep]\nstart = 0.5\nstop = 1.0\nn_steps = 2\n[output]\ndir = \"{}\"\nformats = [\"csv\", \"json\"]\n",
        tmp.path().display()
    );
    let cfg = parse_config(&text, Scenario::Fig3bcd).unwrap();
    run(&cfg, Some(1)).unwrap();
    let stacked = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(stacked.lines().count(), 1 + 3 * 2);
    for q in [1000, 3000, 5000] {
        let single = fs::read_to_string(tmp.path().join(format!("sweep_q{q}.csv"))).unwrap();
        assert_eq!(single.lines().count(), 3);
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);
}

#[test]
fn unknown_key_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "cavity.q = [1000]\ncavity.colour = 3\n").unwrap();
    let out = qdcav(&["--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cavity.colour"));
}

#[test]
fn invalid_values_are_all_reported() {
    let err = parse_config("cavity.q = [-1]\nsweep.n_steps = 1\nlines.weights = [0.5]\n", Scenario::Fig3a).unwrap_err();
    let keys: Vec<_> = err.issues().iter().map(|i| i.key.as_str()).collect();
    assert!(keys.contains(&"cavity.q"), "{keys:?}");
    assert!(keys.contains(&"sweep.n_steps"), "{keys:?}");
    assert!(keys.contains(&"lines.weights"), "{keys:?}");
}

#[test]
fn syntax_error_reports_line() {
    match parse_config("sweep.start = 1\nsweep.stop = = 2\n", Scenario::Fig3a) {
        Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn reference_documents_every_key() {
    let doc = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config-reference.md")).unwrap();
    for key in KEYS {
        assert!(doc.contains(&format!("`{key}`")), "{key} is undocumented");
    }
}
