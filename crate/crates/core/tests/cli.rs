mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::manifest_path;
use nash_seek::cli::{
    cmd_check, cmd_simulate, cmd_solve, cmd_sweep, SweepParam, EXIT_IO, EXIT_NUMERIC, EXIT_OK,
    EXIT_VALIDATION,
};
use nash_seek::exec::Execution;
use nash_seek::output::RunSummary;
use nash_seek::scenario;
use serde_json::{json, Value};

fn write_variant(dir: &Path, name: &str, base: &str, f: impl FnOnce(&mut Value)) -> String {
    let mut doc: Value = serde_json::from_str(scenario::bundled_source(base).unwrap()).unwrap();
    f(&mut doc);
    let path = dir.join(name);
    fs::write(&path, doc.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn round1(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 10.0).round() / 10.0).collect()
}

#[test]
fn check_reports_margin_and_passes() {
    let o = cmd_check("table1_inner");
    assert_eq!(o.code, EXIT_OK, "{}", o.report);
    assert!(o.report.contains("uniqueness margin: 0.96"), "{}", o.report);
    assert!(o.report.contains("fiedler: 1.38196601125"));
    assert!(o.checks.iter().all(|c| c.passed));
}

#[test]
fn check_rejects_invalid_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let disconnected = write_variant(dir.path(), "d.json", "table1_inner", |d| {
        d["graph"] = json!({"edges": [[0, 1], [2, 3], [3, 4]]})
    });
    let o = cmd_check(&disconnected);
    assert_eq!(o.code, EXIT_VALIDATION);
    assert!(o.report.contains("graph not connected"), "{}", o.report);

    let steep = write_variant(dir.path(), "a.json", "table1_inner", |d| {
        d["pricing"]["a"] = json!(1.5)
    });
    let o = cmd_check(&steep);
    assert_eq!(o.code, EXIT_VALIDATION);
    assert!(
        o.report.contains("uniqueness bound violated"),
        "{}",
        o.report
    );

    fs::write(dir.path().join("bad.json"), "{").unwrap();
    let o = cmd_check(&dir.path().join("bad.json").to_string_lossy());
    assert_eq!(o.code, EXIT_VALIDATION);
    assert_eq!(cmd_check("no_such_scenario").code, EXIT_IO);
}

#[test]
fn solve_bundled_scenarios() {
    let o = cmd_solve("table1_constrained", true);
    assert_eq!(o.code, EXIT_OK, "{}", o.report);
    let eq = o.equilibrium.unwrap();
    assert_eq!(round1(&eq.l_star), vec![45.0, 46.4, 51.3, 56.2, 61.1]);
    assert_eq!(eq.active_lower, vec![0]);
    assert!(o.report.contains("verify_nash"));

    let eq = cmd_solve("table1_inner", false).equilibrium.unwrap();
    assert_eq!(round1(&eq.l_star), vec![41.5, 46.4, 51.3, 56.2, 61.1]);

    let eq = cmd_solve("table1_stubborn", true).equilibrium.unwrap();
    assert_eq!(round1(&eq.l_star[..4]), vec![40.8, 45.7, 50.6, 55.5]);
    assert_eq!((eq.aggregate * 10.0).round() / 10.0, 292.7);
}

#[test]
fn solve_requires_linear_pricing() {
    let path = manifest_path("scenarios/general_quartic.json");
    assert_eq!(
        cmd_solve(&path.to_string_lossy(), false).code,
        EXIT_VALIDATION
    );
}

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("inner");
    let o = cmd_simulate("table1_inner", &out);
    assert_eq!(o.code, EXIT_OK, "{}", o.report);
    let s = &o.runs[0];
    assert_eq!(s.stop_reason, "CONVERGED");
    assert!(s.max_component_error().unwrap() < 0.05);
    assert!(s.consensus_error < 1e-4);
    let on_disk: RunSummary =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(&on_disk, s);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), s.samples + 1);
    let mut names: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, vec!["summary.json", "trajectory.csv"]);
}

#[test]
fn simulate_constrained_is_practically_convergent() {
    let dir = tempfile::tempdir().unwrap();
    let o = cmd_simulate("table1_constrained", dir.path());
    assert_eq!(o.code, EXIT_OK, "{}", o.report);
    assert!(o.runs[0].max_component_error().unwrap() < 0.1);
    assert!(o.runs[0].min_eta.unwrap() > 0.0);
}

#[test]
fn zero_horizon_echoes_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), "z.json", "table1_inner", |d| {
        d["integrator"] = json!({"t_max": 0.0})
    });
    let o = cmd_simulate(&path, &dir.path().join("out"));
    assert_eq!(o.code, EXIT_OK);
    let s = &o.runs[0];
    assert_eq!(s.stop_reason, "HORIZON");
    assert_eq!(s.final_l, vec![50.0, 55.0, 60.0, 65.0, 70.0]);
    assert_eq!(s.samples, 1);
}

#[test]
fn divergence_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), "x.json", "table1_inner", |d| {
        d["graph"] = json!({"topology": "complete"});
        d["integrator"] = json!({"step_h": 1.0, "t_max": 500.0});
    });
    let o = cmd_simulate(&path, &dir.path().join("out"));
    assert_eq!(o.code, EXIT_NUMERIC, "{}", o.report);
    assert!(o.report.contains("DIVERGED") || o.report.contains("NUMERIC_FAILURE"));
}

#[test]
fn sweep_delta_error_does_not_grow_as_delta_shrinks() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<String> = ["0.2", "0.1", "0.05", "0.025"].map(String::from).to_vec();
    let o = cmd_sweep(
        "table1_inner",
        SweepParam::Delta,
        &values,
        dir.path(),
        Execution::Parallel,
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.report);
    let errors: Vec<f64> = o
        .runs
        .iter()
        .map(|r| r.max_component_error().unwrap())
        .collect();
    // every run stops on the residual tolerance; differences below this floor
    // are integration noise, not a trend
    let floor = 1e-6;
    for w in errors.windows(2) {
        assert!(w[1] <= w[0].max(floor), "{errors:?}");
    }
    for v in &values {
        assert!(dir
            .path()
            .join(format!("delta_{v}/trajectory.csv"))
            .exists());
    }
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn sweep_topology_is_equilibrium_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<String> = ["ring", "complete", "path"].map(String::from).to_vec();
    let o = cmd_sweep(
        "table1_inner",
        SweepParam::Topology,
        &values,
        dir.path(),
        Execution::Parallel,
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.report);
    let first = &o.runs[0].final_l;
    for r in &o.runs[1..] {
        assert!(common::max_abs_diff(first, &r.final_l) < 0.01);
    }
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let o = cmd_sweep(
        "table1_inner",
        SweepParam::Delta,
        &[],
        dir.path(),
        Execution::Parallel,
    );
    assert_eq!(o.code, EXIT_VALIDATION);
    let o = cmd_sweep(
        "table1_inner",
        SweepParam::Topology,
        &["ring".into(), "star".into()],
        dir.path(),
        Execution::Parallel,
    );
    assert_eq!(o.code, EXIT_VALIDATION);
    assert!(o.runs.is_empty());
    let o = cmd_sweep(
        "table1_inner",
        SweepParam::GainKAll,
        &["0.5".into(), "2".into()],
        dir.path(),
        Execution::Sequential,
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.report);
    assert!(o
        .runs
        .iter()
        .all(|r| r.max_component_error().unwrap() < 0.05));
}

#[test]
fn sweep_concurrency_leaves_artifacts_unchanged() {
    let seq = tempfile::tempdir().unwrap();
    let par = tempfile::tempdir().unwrap();
    let values: Vec<String> = ["0.2", "0.1", "0.05"].map(String::from).to_vec();
    let a = cmd_sweep(
        "table1_constrained",
        SweepParam::Delta,
        &values,
        seq.path(),
        Execution::Sequential,
    );
    let b = cmd_sweep(
        "table1_constrained",
        SweepParam::Delta,
        &values,
        par.path(),
        Execution::Parallel,
    );
    assert_eq!(a.code, EXIT_OK);
    assert_eq!(b.code, EXIT_OK);
    for v in &values {
        let rel = format!("delta_{v}/trajectory.csv");
        assert_eq!(
            fs::read(seq.path().join(&rel)).unwrap(),
            fs::read(par.path().join(&rel)).unwrap()
        );
    }
    assert_eq!(
        fs::read(seq.path().join("sweep.csv")).unwrap(),
        fs::read(par.path().join("sweep.csv")).unwrap()
    );
    for (x, y) in a.runs.iter().zip(&b.runs) {
        let strip = |r: &RunSummary| RunSummary {
            wall_time_s: 0.0,
            ..r.clone()
        };
        assert_eq!(strip(x), strip(y));
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_nash-seek");
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();

    let ok = run(&["check", "--scenario", "table1_inner"]);
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("all checks pass"));

    let quiet = run(&["check", "--scenario", "table1_inner", "--quiet"]);
    assert_eq!(quiet.status.code(), Some(EXIT_OK));
    assert!(quiet.stdout.is_empty());

    let steep = write_variant(dir.path(), "a.json", "table1_inner", |d| {
        d["pricing"]["a"] = json!(1.5)
    });
    assert_eq!(
        run(&["check", "--scenario", &steep]).status.code(),
        Some(EXIT_VALIDATION)
    );
    assert_eq!(
        run(&["solve", "--scenario", "/nonexistent.json"])
            .status
            .code(),
        Some(EXIT_IO)
    );
    let out = dir.path().join("sweep");
    let empty = run(&[
        "sweep",
        "--scenario",
        "table1_inner",
        "--param",
        "delta",
        "--values",
        "",
        "--out",
        &out.to_string_lossy(),
    ]);
    assert_eq!(empty.status.code(), Some(EXIT_VALIDATION));

    let sim = run(&[
        "simulate",
        "--scenario",
        "table1_stubborn",
        "--out",
        &dir.path().join("stub").to_string_lossy(),
    ]);
    assert_eq!(sim.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&sim.stdout).contains("CONVERGED"));
}
