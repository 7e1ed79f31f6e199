use std::path::PathBuf;
use std::process::Command;

use lqo::simkit::{simulate_scenario, Scenario, SimulationTrace};
use lqo::sysmodel::{examples, load_system, load_system_with, save_system, LoadOptions};
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn lqo_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lqo"))
}

#[test]
fn data_systems_match_builtin_examples() {
    let read = |n: &str| {
        load_system(&std::fs::read_to_string(data(n)).unwrap())
            .unwrap()
            .system
    };
    assert_eq!(
        read("double_integrator.json"),
        examples::double_integrator(2)
    );
    assert_eq!(read("two_state.json"), examples::two_state());
    assert_eq!(read("range_airspeed.json"), examples::range_airspeed(3));
}

#[test]
fn saved_systems_load_back() {
    for sys in [
        examples::two_state(),
        examples::range_airspeed(2),
        examples::double_integrator(3),
    ] {
        assert_eq!(load_system(&save_system(&sys)).unwrap().system, sys);
    }
}

#[test]
fn asymmetric_outputs_need_opt_in() {
    let doc =
        r#"{"n":2,"p":1,"q":1,"A":[[0,1],[0,0]],"B":[[0],[1]],"C":[[[0,1],[0,0]]],"d":[[0,0]]}"#;
    assert!(load_system(doc).is_err());
    let loaded = load_system_with(
        doc,
        &LoadOptions {
            max_asymmetry: None,
        },
    )
    .unwrap();
    assert_eq!(loaded.asymmetry, vec![0.5]);
    assert_eq!(loaded.system.c()[0].get(0, 1), 0.5);
}

#[test]
fn scenario_trace_round_trips_through_csv() {
    let sc = Scenario::load(&data("two_state_scenario.json")).unwrap();
    let trace = simulate_scenario(&sc).unwrap();
    assert_eq!(trace.columns, ["t", "x_0", "x_1", "u_0", "y_0"]);
    assert_eq!(trace.rows.len(), sc.steps + 1);
    let back = SimulationTrace::parse(&trace.to_csv().unwrap()).unwrap();
    assert_eq!(back, trace);
    // bounded input keeps x on the unit circle
    let x0 = trace.column("x_0").unwrap();
    let x1 = trace.column("x_1").unwrap();
    for (k, (a, b)) in x0.iter().zip(&x1).enumerate() {
        let t = k as f64 * sc.h;
        assert!(
            (a - t.sin()).abs() < 1e-6 && (b - t.cos()).abs() < 1e-6,
            "t = {t}"
        );
    }
}

proptest! {
    #[test]
    fn trace_values_survive_csv(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 2), 1..20)) {
        let rows: Vec<Vec<f64>> = rows.into_iter().enumerate().map(|(i, r)| vec![i as f64, r[0], r[1]]).collect();
        let trace = SimulationTrace { columns: vec!["t".into(), "a".into(), "b".into()], rows };
        prop_assert_eq!(SimulationTrace::parse(&trace.to_csv().unwrap()).unwrap(), trace);
    }
}

#[test]
fn cli_immerse_reports_stage_sizes() {
    let out = lqo_cmd()
        .args(["immerse", "--system"])
        .arg(data("range_airspeed.json"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["m"], 3);
    assert_eq!(rep["dims"], serde_json::json!([2, 1, 1]));
    assert_eq!(rep["dim_z"], 13);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = lqo_cmd()
        .args(["immerse", "--system"])
        .arg(data("two_state.json"))
        .arg("--out")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let alpha: Vec<f64> = serde_json::from_value(rep["alpha"].clone()).unwrap();
    assert!((alpha[0] - 4.0).abs() < 1e-10 && (alpha[1] - 4.0).abs() < 1e-10);
}

#[test]
fn cli_exit_codes() {
    assert_eq!(
        lqo_cmd().arg("--help").output().unwrap().status.code(),
        Some(0)
    );
    assert_eq!(
        lqo_cmd().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );
    assert_eq!(
        lqo_cmd()
            .args(["immerse", "--system", "/nonexistent.json"])
            .output()
            .unwrap()
            .status
            .code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("asym.json");
    std::fs::write(
        &bad,
        r#"{"n":2,"p":1,"q":1,"A":[[0,1],[0,0]],"B":[[0],[1]],"C":[[[0,1],[0,0]]],"d":[[0,0]]}"#,
    )
    .unwrap();
    assert_eq!(
        lqo_cmd()
            .args(["immerse", "--system"])
            .arg(&bad)
            .output()
            .unwrap()
            .status
            .code(),
        Some(1)
    );
    let ok = lqo_cmd()
        .args(["immerse", "--symmetrize", "--system"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stderr).contains("symmetrized"));
}

#[test]
fn cli_simulate_and_observe_write_traces() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    let st = lqo_cmd()
        .args(["simulate", "--scenario"])
        .arg(data("two_state_scenario.json"))
        .arg("--out")
        .arg(&sim)
        .status()
        .unwrap();
    assert!(st.success());
    let trace = SimulationTrace::parse(&std::fs::read_to_string(&sim).unwrap()).unwrap();
    assert_eq!(trace.rows.len(), 5001);

    let obs = dir.path().join("obs.csv");
    let out = lqo_cmd()
        .args(["observe", "--scenario"])
        .arg(data("two_state_scenario.json"))
        .arg("--out")
        .arg(&obs)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace = SimulationTrace::parse(&std::fs::read_to_string(&obs).unwrap()).unwrap();
    assert!(trace.columns.iter().any(|c| c == "err_x"));
    assert!(trace.columns.iter().any(|c| c == "zhat_3"));
    let err = trace.column("err_x").unwrap();
    assert!(err[err.len() - 1] < err[0]);
}
