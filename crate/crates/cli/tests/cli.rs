use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dfrc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfrc"))
        .args(args)
        .env("DFRC_LOG", "error")
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_dir(tmp: &tempfile::TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

#[test]
fn validate_accepts_shipped_configs() {
    for c in ["toy.json", "table1.json"] {
        let o = dfrc(&["validate", &config(c)]);
        assert_eq!(o.status.code(), Some(0), "{c}: {}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok:"));
    }
}

#[test]
fn validate_reports_missing_file_and_bad_field() {
    let o = dfrc(&["validate", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot read"), "{}", stderr(&o));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"tx_array": {"num_elements": "six"}}"#).unwrap();
    let o = dfrc(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tx_array.num_elements"), "{}", stderr(&o));
}

#[test]
fn validate_rejects_error_target_outside_range() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("toy.json")).unwrap();
    let path = tmp.path().join("eps.json");
    std::fs::write(&path, text.replace("\"error_target\": 1e-2", "\"error_target\": 0.7")).unwrap();
    let o = dfrc(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error_target"));
}

#[test]
fn solve_writes_exports_for_every_subcarrier() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "t1");
    let o = dfrc(&["solve", &config("table1.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tx: Vec<_> = (0..8)
        .filter(|k| out.join(format!("beampattern_tx_{k}.csv")).exists())
        .collect();
    assert_eq!(tx, vec![0, 1, 2, 3]);
    for k in 0..4 {
        assert!(out.join(format!("beampattern_rx_{k}.csv")).exists());
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,f,sinr_0,sinr_1,sinr_2,sinr_3,"));
    let bp = std::fs::read_to_string(out.join("beampattern_tx_0.csv")).unwrap();
    assert!(bp.starts_with("angle_deg,power_linear,power_db\n"));
    assert_eq!(bp.lines().count(), 1 + 721);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(doc["subcarriers"].as_array().unwrap().len(), 4);
}

#[test]
fn unreachable_target_exits_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "inf");
    let o = dfrc(&["solve", &config("toy.json"), "--epsilon", "1e-30", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("best common SNR-to-threshold ratio t ="), "{}", stderr(&o));
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn unknown_merit_is_a_config_error() {
    let o = dfrc(&["solve", &config("toy.json"), "--merit", "median"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn single_run_sweep_matches_solve() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(
        &spec,
        format!(
            r#"{{"base": {:?}, "axis": "delta", "values": [1e-3], "seeds": [3],
                "merit": {{"kind": "power-mean", "p": 0}}}}"#,
            config("toy.json")
        ),
    )
    .unwrap();
    let sweep_out = out_dir(&tmp, "sweep");
    let o = dfrc(&["sweep", spec.to_str().unwrap(), "--out", sweep_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let solve_out = out_dir(&tmp, "solve");
    let o = dfrc(&[
        "solve",
        &config("toy.json"),
        "--merit",
        "geometric",
        "--seed",
        "3",
        "--delta",
        "1e-3",
        "--out",
        solve_out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let mut rows = csv::Reader::from_path(sweep_out.join("sweep.csv")).unwrap();
    let header = rows.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let col = |name: &str| rows[0][header.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(col("status"), "ok");
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(solve_out.join("result.json")).unwrap()).unwrap();
    assert_eq!(col("f").parse::<f64>().unwrap(), doc["objective"].as_f64().unwrap());
    assert_eq!(col("iterations").parse::<u64>().unwrap(), doc["iterations"].as_u64().unwrap());
    for k in 0..2 {
        assert_eq!(
            col(&format!("sinr_{k}")).parse::<f64>().unwrap(),
            doc["subcarriers"][k]["sinr"].as_f64().unwrap()
        );
    }
    let summary = std::fs::read_to_string(sweep_out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn sweep_records_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(
        &spec,
        format!(
            r#"{{"base": {:?}, "axis": "epsilon", "values": [1e-2, 1e-30, 0.9], "seeds": [0, 1]}}"#,
            config("toy.json")
        ),
    )
    .unwrap();
    let out = out_dir(&tmp, "sweep");
    let o = dfrc(&["sweep", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let statuses: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(statuses, ["ok", "ok", "infeasible", "infeasible", "invalid", "invalid"]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(out.join("timings.csv").exists());
}

#[test]
fn sweep_spec_errors_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(&spec, r#"{"base": "toy.json", "axis": "epsilon", "values": [], "seeds": [0]}"#).unwrap();
    assert_eq!(dfrc(&["sweep", spec.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(
        &spec,
        format!(r#"{{"base": {:?}, "axis": "num_users", "values": [3], "seeds": [0]}}"#, config("toy.json")),
    )
    .unwrap();
    let o = dfrc(&["sweep", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("generated base"));
}
