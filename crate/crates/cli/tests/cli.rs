use std::fs;
use std::path::Path;
use std::process::Command;

use pdha_core::automaton::discretize_model;
use pdha_core::executor::{simulate, Integrator, SimOptions};
use pdha_core::models::{heater_description, traffic_description, HeaterConfig, TrafficConfig};
use pdha_sim::export::{read_interval_bounds, read_transitions};
use pdha_sim::model_file::{load_model, load_model_file, parse_model, LoadError, ModelFile, Resolution};
use pdha_sim::{run, EXIT_DIVERGED, EXIT_INVALID, EXIT_OK};
use serde_json::Value;
use tempfile::TempDir;

fn sim(args: &[&str]) -> i32 {
    let mut full = vec!["pdha-sim", "simulate"];
    full.extend_from_slice(args);
    run(full)
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn transitions_at(summary: &Value, x: f64) -> u64 {
    summary["transitions_per_point"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| (p["x"].as_f64().unwrap() - x).abs() < 1e-9)
        .map(|p| p["transitions"].as_u64().unwrap())
        .unwrap()
}

fn out_arg(dir: &TempDir) -> String {
    dir.path().to_str().unwrap().to_string()
}

#[test]
fn heater_builtin_runs() {
    let dir = TempDir::new().unwrap();
    let code = sim(&["--builtin", "heater", "--t-end", "50", "--dt", "0.01", "--out", &out_arg(&dir)]);
    assert_eq!(code, EXIT_OK);
    let s = summary(dir.path());
    assert_eq!(s["integrator"], "euler");
    assert_eq!(s["classification"], "finite");
    assert!(s["transition_count"].as_u64().unwrap() >= 3);
    // the boundary-adjacent heater keeps cycling
    assert!(transitions_at(&s, 1.0) >= 3);
    assert!(dir.path().join("trajectory.csv").exists());
    assert!(dir.path().join("transitions.csv").exists());
}

#[test]
fn coarse_heater_cycles_at_two() {
    let dir = TempDir::new().unwrap();
    let code = sim(&["--builtin", "heater", "--m", "6", "--t-end", "50", "--dt", "0.01", "--out", &out_arg(&dir)]);
    assert_eq!(code, EXIT_OK);
    let s = summary(dir.path());
    assert_eq!(s["h"], 2.0);
    assert!(transitions_at(&s, 2.0) >= 3);
}

#[test]
fn traffic_builtin_empties() {
    let dir = TempDir::new().unwrap();
    let code = sim(&["--builtin", "traffic", "--t-end", "5", "--dt", "0.1", "--out", &out_arg(&dir)]);
    assert_eq!(code, EXIT_OK);
    let s = summary(dir.path());
    assert_eq!(s["integrator"], "characteristic");
    let counts = s["final_mode_counts"].as_array().unwrap();
    let congested = counts.iter().find(|c| c[0] == "congested").unwrap();
    assert_eq!(congested[1], 0);
    assert_eq!(s["final_nonzero_cells"], 0);
    assert!(s["collision_count"].as_u64().unwrap() > 0);
}

#[test]
fn cfl_violation_exits_2() {
    let bin = env!("CARGO_BIN_EXE_pdha-sim");
    let dir = TempDir::new().unwrap();
    let out = Command::new(bin)
        .args(["simulate", "--builtin", "heater", "--t-end", "1", "--dt", "0.6", "--out", &out_arg(&dir)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("CFL"), "{stderr}");
}

#[test]
fn bad_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(sim(&["--builtin", "nope", "--t-end", "1", "--dt", "0.1", "--out", &out_arg(&dir)]), EXIT_INVALID);
    assert_eq!(sim(&["--builtin", "heater", "--t-end", "1", "--out", &out_arg(&dir)]), EXIT_INVALID);
    assert_eq!(
        sim(&["--builtin", "heater", "--integrator", "leapfrog", "--t-end", "1", "--dt", "0.1", "--out", &out_arg(&dir)]),
        EXIT_INVALID
    );
    assert_eq!(
        sim(&["--builtin", "heater", "--integrator", "characteristic", "--t-end", "1", "--dt", "0.1", "--out", &out_arg(&dir)]),
        EXIT_INVALID
    );
}

const GROWTH: &str = r#"{
    "schema": 1,
    "name": "growth",
    "domain": { "lower": 0.0, "upper": 1.0 },
    "modes": [{ "name": "hot", "flow": { "kind": "diffusion", "alpha": 1.0, "source": { "tabulated": [1e300, 1e300, 1e300] } } }],
    "boundary": { "left": "mirror", "right": "mirror" },
    "regions": [{ "interval": [0.0, 1.0], "closed_right": true, "mode": "hot" }],
    "init": { "constant": 1e308 },
    "discretization": { "m": 3 }
}"#;

#[test]
fn divergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("growth.json");
    fs::write(&model, GROWTH).unwrap();
    let out = dir.path().join("out");
    let code = sim(&[
        "--model",
        model.to_str().unwrap(),
        "--t-end",
        "1",
        "--dt",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_DIVERGED);
}

#[test]
fn semantic_errors_exit_2_and_name_the_mode() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("bad.json");
    fs::write(&model, GROWTH.replace("\"mode\": \"hot\"", "\"mode\": \"cold\"")).unwrap();
    match load_model(&model) {
        Err(LoadError::Semantic(problems)) => assert!(problems.iter().any(|p| p.contains("'cold'"))),
        other => panic!("{other:?}"),
    }
    let out = dir.path().join("out");
    let code = sim(&["--model", model.to_str().unwrap(), "--t-end", "1", "--dt", "0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
}

#[test]
fn builtin_descriptions_round_trip_through_files() {
    let dir = TempDir::new().unwrap();
    let heater = heater_description(&HeaterConfig::default()).unwrap();
    let traffic = traffic_description(&TrafficConfig::default()).unwrap();
    for (model, res) in [(heater, Resolution::Spacing(1.0)), (traffic, Resolution::Points(101))] {
        let file = ModelFile::from_model(&model, Some(res), None).unwrap();
        let path = dir.path().join(format!("{}.json", model.name));
        fs::write(&path, file.to_json()).unwrap();
        let loaded = load_model_file(&path).unwrap();
        assert_eq!(loaded.model, model);
        assert_eq!(loaded.resolution, Some(res));
        // and once more through text
        let again = ModelFile::from_model(&loaded.model, loaded.resolution, None).unwrap();
        assert_eq!(parse_model(&again.to_json()).unwrap(), loaded);
    }
}

#[test]
fn model_file_matches_builtin_run() {
    let dir = TempDir::new().unwrap();
    let heater = heater_description(&HeaterConfig::default()).unwrap();
    let path = dir.path().join("heater.json");
    fs::write(&path, ModelFile::from_model(&heater, Some(Resolution::Spacing(1.0)), None).unwrap().to_json()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(sim(&["--model", path.to_str().unwrap(), "--t-end", "3", "--dt", "0.01", "--out", a.to_str().unwrap()]), EXIT_OK);
    assert_eq!(sim(&["--builtin", "heater", "--t-end", "3", "--dt", "0.01", "--out", b.to_str().unwrap()]), EXIT_OK);
    for f in ["trajectory.csv", "transitions.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exports_are_byte_stable() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let code = sim(&["--builtin", "heater", "--t-end", "5", "--dt", "0.01", "--sample-every", "3", "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
    }
    for f in ["trajectory.csv", "transitions.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exported_boundaries_match_the_execution() {
    let dir = TempDir::new().unwrap();
    let code = sim(&["--builtin", "heater", "--t-end", "5", "--dt", "0.01", "--sample-every", "10", "--out", &out_arg(&dir)]);
    assert_eq!(code, EXIT_OK);

    let model = heater_description(&HeaterConfig::default()).unwrap();
    let a = discretize_model(&model, 11).unwrap();
    let (x, _) = simulate(&a, &SimOptions::new(0.01, Integrator::Euler, 5.0)).unwrap();

    let bounds = read_interval_bounds(fs::File::open(dir.path().join("trajectory.csv")).unwrap()).unwrap();
    assert_eq!(bounds, x.trajectory().intervals);
    let rows = read_transitions(fs::File::open(dir.path().join("transitions.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), x.transitions.len());
    for (row, tr) in rows.iter().zip(&x.transitions) {
        assert_eq!(row.tau_prime, tr.time);
        assert_eq!(row.indices, tr.event.indices);
    }
    let header = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(header.starts_with("t,x,u,mode,interval_index\n"));
}

#[test]
fn sweep_writes_one_directory_per_grid() {
    let dir = TempDir::new().unwrap();
    let code = sim(&["--builtin", "heater", "--sweep", "6,11,21", "--t-end", "2", "--dt", "0.001", "--out", &out_arg(&dir)]);
    assert_eq!(code, EXIT_OK);
    for m in [6, 11, 21] {
        let s = summary(&dir.path().join(format!("m{m}")));
        assert_eq!(s["m"], m);
    }
}

#[test]
fn sweep_reports_the_failing_grid() {
    let dir = TempDir::new().unwrap();
    // dt = 0.01 breaks the CFL bound once h = 0.1
    let code = sim(&["--builtin", "heater", "--sweep", "11,101", "--t-end", "0.1", "--dt", "0.01", "--out", &out_arg(&dir)]);
    assert_eq!(code, EXIT_INVALID);
    assert!(dir.path().join("m11").join("summary.json").exists());
    assert!(!dir.path().join("m101").exists());
}
