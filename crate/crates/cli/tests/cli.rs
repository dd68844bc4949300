use std::path::PathBuf;
use std::process::Command;

use dse_cli::{bench, read_traces, run, write_traces, RunConfig, Traces};
use dse_core::simulator::FilterKind;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(rel)
}

fn case() -> PathBuf {
    data("case39.txt")
}

#[test]
fn traces_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let traces = Traces {
        header: ["time", "truth_omega_1", "gmekf_omega_1"].map(String::from).to_vec(),
        rows: vec![
            vec![0.0, 376.99111843077515, 376.9911184307752],
            vec![1.0 / 60.0, 0.1 + 0.2, -1e-300],
            vec![2.0 / 60.0, f64::MAX, f64::MIN_POSITIVE],
        ],
    };
    write_traces(&path, &traces).unwrap();
    let back = read_traces(&path).unwrap();
    assert_eq!(back.header, traces.header);
    for (a, b) in back.rows.iter().flatten().zip(traces.rows.iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn missing_case_exits_with_configuration_code() {
    let out = Command::new(env!("CARGO_BIN_EXE_dse"))
        .args(["run", "--case", "no/such/case.txt", "--scenario"])
        .arg(data("scenarios/case1_clean.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("case file not found"), "{stderr}");
}

#[test]
fn missing_scenario_exits_with_configuration_code() {
    let out = Command::new(env!("CARGO_BIN_EXE_dse"))
        .args(["run", "--case"])
        .arg(case())
        .args(["--scenario", "no/such/scenario.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario file not found"));
}

#[test]
fn comm_loss_run_writes_every_artefact() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        filters: vec![FilterKind::GmEkf],
        output_dir: dir.path().to_path_buf(),
        emit_plots: true,
        plot_generators: vec![5],
        ..RunConfig::new(case(), data("scenarios/case2_comm_loss.toml"))
    };
    let report = run(&config).unwrap();
    let gm = report.get(FilterKind::GmEkf).unwrap();
    assert!(gm.overall_error < 0.05, "{}", gm.overall_error);
    assert_eq!(gm.irls_iterations.len(), report.steps);

    let traces = read_traces(&dir.path().join("traces.csv")).unwrap();
    assert_eq!(traces.header.len(), 1 + 20 * 2);
    assert_eq!(traces.header[0], "time");
    assert_eq!(traces.header[1..3], ["truth_omega_1", "gmekf_omega_1"]);
    assert_eq!(traces.header[39..41], ["truth_delta_10", "gmekf_delta_10"]);
    assert_eq!(traces.rows.len(), report.steps + 1);

    for name in ["errors.csv", "irls.csv", "report.json", "omega_5.svg", "delta_5.svg"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["filters"][0]["filter"], "gmekf");
}

#[test]
fn single_repeat_bench_has_zero_spread() {
    let config = RunConfig {
        filters: vec![FilterKind::Ekf],
        ..RunConfig::new(case(), data("scenarios/case1_clean.toml"))
    };
    let table = bench(&config, &[data("scenarios/case1_clean.toml")], 1).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].repeats, 1);
    assert_eq!(table[0].std_s, 0.0);
    assert!(table[0].mean_s > 0.0);
    assert!(bench(&config, &[data("scenarios/case1_clean.toml")], 0).is_err());
}
