use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modquad::commands::{self, EXIT_FAILURE, EXIT_INAPPLICABLE, EXIT_OK, EXIT_SCHEMA};
use modquad::config::{parse_config, StructureConfig};
use modquad::metrics;
use modquad::telemetry::{self, TelemetryRow};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.cfg"))
}

fn modquad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modquad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn load(name: &str) -> StructureConfig {
    parse_config(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn shortened(name: &str, duration: f64) -> StructureConfig {
    let mut c = load(name);
    let s = c.scenario.as_mut().unwrap();
    s.duration_s = duration;
    s.skip_s = s.skip_s.min(duration);
    c
}

fn read_csv(path: &Path) -> Vec<TelemetryRow> {
    telemetry::read_rows(std::fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn analyze_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.cfg");
    std::fs::write(&broken, "[[module]]\nkind = \"R\"\ncell = [0, 0]\n").unwrap();

    let ok = modquad(&["analyze", fixture("exp1").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("controllable DOF: 4"));

    let bad_design = modquad(&["analyze", fixture("fig5d").to_str().unwrap()]);
    assert_eq!(bad_design.status.code(), Some(EXIT_INAPPLICABLE));
    assert!(String::from_utf8_lossy(&bad_design.stderr).contains("inapplicable"));

    assert_eq!(
        modquad(&["analyze", broken.to_str().unwrap()]).status.code(),
        Some(EXIT_SCHEMA)
    );
    assert_eq!(
        modquad(&["analyze", "/nonexistent/x.cfg"]).status.code(),
        Some(EXIT_FAILURE)
    );
}

#[test]
fn batch_exit_code_is_the_worst_outcome() {
    let out = modquad(&[
        "--jobs",
        "2",
        "analyze",
        fixture("exp1").to_str().unwrap(),
        fixture("fig5d").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_INAPPLICABLE));
}

#[test]
fn analyze_json_is_parseable() {
    let out = modquad(&["--format", "json", "analyze", fixture("exp2").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["dof"], 5);
}

#[test]
fn simulate_without_scenario_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("static.cfg");
    let mut c = load("quad2x2");
    c.scenario = None;
    std::fs::write(&cfg, modquad::config::render(&c)).unwrap();
    let out = modquad(&[
        "simulate",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("t.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_SCHEMA));
}

#[test]
fn zero_duration_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.cfg");
    std::fs::write(&cfg, modquad::config::render(&shortened("exp1", 0.0))).unwrap();
    let csv = dir.path().join("zero.csv");
    let out = modquad(&["simulate", cfg.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(EXIT_OK),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_csv(&csv);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].t, 0.0);
}

#[test]
fn repeated_cli_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp3.cfg");
    std::fs::write(&cfg, modquad::config::render(&shortened("exp3", 3.0))).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        assert_eq!(
            modquad(&["simulate", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()])
                .status
                .code(),
            Some(0)
        );
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn metrics_command_matches_in_process_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp2.cfg");
    let config = shortened("exp2", 8.0);
    std::fs::write(&cfg, modquad::config::render(&config)).unwrap();
    let csv = dir.path().join("exp2.csv");
    let run = commands::simulate(&config).unwrap();
    assert_eq!(
        modquad(&["simulate", cfg.to_str().unwrap(), "-o", csv.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let from_csv = commands::cmd_metrics(&csv, config.scenario.as_ref().unwrap().skip_s, Some(&cfg)).unwrap();
    assert_eq!(from_csv.position_max_m, run.metrics.position_max_m);
    // The logged quaternion rounds the attitude, so allow a few ulps of drift.
    for k in 0..3 {
        assert!((from_csv.attitude_max_deg[k] - run.metrics.attitude_max_deg[k]).abs() < 1e-9);
    }
    assert_eq!(from_csv.samples, run.metrics.samples);
}

#[test]
fn duplicated_rows_leave_metrics_unchanged() {
    let run = commands::simulate(&shortened("exp1", 6.0)).unwrap();
    let rows = telemetry::rows(&run.telemetry);
    let doubled: Vec<_> = rows.iter().flat_map(|r| [r.clone(), r.clone()]).collect();
    let one = metrics::compute(&rows, 1.0, None);
    let two = metrics::compute(&doubled, 1.0, None);
    assert_eq!(one.position_max_m, two.position_max_m);
    assert_eq!(one.attitude_max_deg, two.attitude_max_deg);
    assert_eq!(one.saturation_fraction, two.saturation_fraction);
    for k in 0..3 {
        assert!((one.position_rms_m[k] - two.position_rms_m[k]).abs() <= 1e-12 * (1.0 + one.position_rms_m[k]));
    }
}

#[test]
fn halving_the_integration_step_barely_moves_the_final_state() {
    for name in ["exp1", "exp3", "exp4"] {
        let coarse = shortened(name, 4.0);
        let mut fine = coarse.clone();
        fine.scenario.as_mut().unwrap().dt_sim_s /= 2.0;
        let a = commands::simulate(&coarse).unwrap().telemetry;
        let b = commands::simulate(&fine).unwrap().telemetry;
        let (sa, sb) = (&a.samples.last().unwrap().state, &b.samples.last().unwrap().state);
        let dr = (sa.position - sb.position).norm();
        let dv = (sa.velocity - sb.velocity).norm();
        assert!(dr < 1e-5 && dv < 1e-5, "{name}: |dr| = {dr:e}, |dv| = {dv:e}");
    }
}

#[test]
fn saturation_does_not_grow_with_thrust_limit() {
    for name in ["exp1", "exp4"] {
        let mut previous = f64::INFINITY;
        for f_max in [0.5, 0.645, 1.0] {
            let mut c = shortened(name, 10.0);
            c.defaults.f_max_n = f_max;
            let fraction = match commands::simulate(&c) {
                Ok(run) => run.metrics.saturation_fraction,
                // A limit too low to hover counts as saturated throughout.
                Err(_) => 1.0,
            };
            assert!(fraction <= previous, "{name}: {fraction} at {f_max} N after {previous}");
            previous = fraction;
        }
    }
}
