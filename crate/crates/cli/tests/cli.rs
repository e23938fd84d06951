use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn fig1() -> PathBuf {
    scenarios().join("fig1.json")
}

fn ponqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ponqkd"))
        .args(args)
        .env_remove("PONQKD_OUT")
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_the_reference_plant() {
    let o = ponqkd(&["validate", arg(&fig1())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn validate_lists_each_violation_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fig1()).unwrap();
    // Hang a fifth branch off a 1:4 splitter.
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["nodes"]["ont_extra"] = serde_json::json!({
        "kind": "ont", "wavelength_nm": 1316.0, "nominal_power_dbm": -3.0, "power_class": "B+"
    });
    v["edges"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!(["bep", "ont_extra"]));
    v["edges"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!(["bep", "ont_extra"]));
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let o = ponqkd(&["validate", arg(&path)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bep"), "{err}");
    assert!(err.lines().count() >= 2, "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let o = ponqkd(&["validate", "/nonexistent/plant.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ponqkd(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        ponqkd(&["budget", arg(&fig1()), "--set", "novalue"]).status.code(),
        Some(2)
    );
}

#[test]
fn unknown_override_keys_are_rejected() {
    let o = ponqkd(&["budget", arg(&fig1()), "--set", "physics.no_such_knob=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_knob"), "{}", stderr(&o));
}

#[test]
fn budget_reports_the_quantum_path_total() {
    let o = ponqkd(&["budget", arg(&fig1()), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let total = v["total_db"].as_f64().unwrap();
    assert!((total - 21.0).abs() <= 1.0, "{total}");
    let sum: f64 = v["elements"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["total_db"].as_f64().unwrap())
        .sum();
    assert!((sum - total).abs() < 1e-9);

    let o = ponqkd(&[
        "budget",
        arg(&fig1()),
        "--from",
        "bob",
        "--to",
        "bob",
        "--format",
        "csv",
    ]);
    assert!(stdout(&o).trim_end().ends_with("total,,,,,0"), "{}", stdout(&o));

    let o = ponqkd(&["budget", arg(&fig1()), "--from", "nowhere"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible_and_single_block_runs_give_one_row() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = ponqkd(&[
            "simulate",
            arg(&fig1()),
            "--onts",
            "3",
            "--duration",
            "600",
            "--block",
            "60",
            "--seed",
            "9",
            "--out",
            arg(d.path()),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("mean SKR"));
    }
    for f in ["timeseries.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }

    let c = tempfile::tempdir().unwrap();
    let o = ponqkd(&[
        "simulate",
        arg(&fig1()),
        "--duration",
        "60",
        "--block",
        "60",
        "--out",
        arg(c.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(c.path().join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn invalid_scenario_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = ponqkd(&[
        "simulate",
        arg(&fig1()),
        "--duration",
        "10",
        "--block",
        "60",
        "--out",
        arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn output_directory_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ponqkd"))
        .args(["sweep", arg(&fig1()), "--onts", "0,1", "--duration", "120"])
        .env("PONQKD_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("n_onts,qber,skr_bps,back_refl_dbm\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn calibrate_rejects_empty_observations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "n_onts,qber,skr_bps,back_refl_dbm\n").unwrap();
    let o = ponqkd(&[
        "calibrate",
        arg(&fig1()),
        "--observations",
        arg(&path),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("fit_report.json").exists());
}

#[test]
fn calibrate_then_sweep_shows_the_dip_and_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let obs = scenarios().join("table1.csv");
    let o = ponqkd(&[
        "calibrate",
        arg(&fig1()),
        "--observations",
        arg(&obs),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let calibrated = dir.path().join("calibrated.json");
    assert_eq!(ponqkd(&["validate", arg(&calibrated)]).status.code(), Some(0));

    let o = ponqkd(&[
        "sweep",
        arg(&calibrated),
        "--onts",
        "0,1,5,9",
        "--duration",
        "3600",
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let skr: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(skr.len(), 4);
    assert!(skr[1] < skr[0] && skr[2] < skr[1] && skr[3] > skr[2], "{skr:?}");
}

#[test]
fn report_prints_the_steady_state() {
    let o = ponqkd(&["report", arg(&fig1()), "--onts", "9", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["active_onts"].as_array().unwrap().len(), 9);
    assert!(v["report"]["skr_bps"].as_f64().unwrap() > 0.0);
}

#[test]
fn calibrate_recovers_a_synthetic_truth() {
    use ponqkd::calibrate::{CalibrationContext, CalibrationParams};
    let rig = scenarios().join("calibration_rig.json");
    let doc = ponqkd::ScenarioDocument::parse(&std::fs::read_to_string(&rig).unwrap()).unwrap();
    let ctx = CalibrationContext::new(&doc).unwrap();
    let truth = CalibrationParams {
        raman_rho: 6e-10,
        bpf_floor_isolation_db: 52.0,
        bpf_edge_slope_db_per_nm: 14.0,
        splitter_return_loss_db: 47.0,
        coupler_return_loss_db: 54.0,
        connector_return_loss_db: 49.0,
        plsu_db_per_ont: 0.45,
        rate_scale: 0.3,
    };
    let obs = ctx.synthesize(&truth, &[0, 1, 2, 3, 4, 5, 6]).unwrap();
    let mut csv = String::from("n_onts,qber,skr_bps,back_refl_dbm\n");
    for r in &obs.rows {
        let refl = r.back_reflection_dbm.map_or(String::new(), |v| v.to_string());
        csv.push_str(&format!("{},{},{},{refl}\n", r.n_onts, r.qber_percent, r.skr_bps));
    }
    let dir = tempfile::tempdir().unwrap();
    let obs_path = dir.path().join("obs.csv");
    std::fs::write(&obs_path, csv).unwrap();
    let o = ponqkd(&[
        "calibrate",
        arg(&rig),
        "--observations",
        arg(&obs_path),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("fit_report.json")).unwrap()).unwrap();
    let p = &report["params"];
    let got = |k: &str| p[k].as_f64().unwrap();
    assert!((got("raman_rho") / 6e-10 - 1.0).abs() < 0.02);
    assert!((got("splitter_return_loss_db") - 47.0).abs() < 0.2);
    assert!((got("coupler_return_loss_db") - 54.0).abs() < 0.2);
    assert!((got("plsu_db_per_ont") / 0.45 - 1.0).abs() < 0.02);
    assert!((got("rate_scale") / 0.3 - 1.0).abs() < 0.02);
}
