//! End-to-end runs of the `hamid` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use hamid::io::{complex_from_rows, real_from_rows, TimeSeriesFile};
use serde_json::{json, Value};

fn hamid(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hamid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = hamid(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, value: Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_writes_expected_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    ok(&["simulate", "--out", s(&out), "--csv", "--seed", "3"]);
    let file: TimeSeriesFile = serde_json::from_value(read(&out.join("data.json"))).unwrap();
    assert_eq!((file.n, file.len), (5, 201));
    assert_eq!(file.data.len(), 5);
    assert!(file.data.iter().all(|row| row.len() == 5 && row.iter().all(|x| x.len() == 201)));
    assert_eq!(file.provenance.seed, 3);
    assert!(file.provenance.truth.is_some());
    let csv = fs::read_to_string(out.join("data.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("m,n,t,x,p"));
    assert_eq!(csv.lines().count(), 1 + 25 * 201);
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["simulate", "--out", s(&a), "--seed", "11"]);
    ok(&["simulate", "--out", s(&b), "--seed", "11"]);
    let (x, y) = (fs::read(a.join("data.json")).unwrap(), fs::read(b.join("data.json")).unwrap());
    assert!(x == y, "same seed must give identical bytes");
    let c = tmp.path().join("c");
    ok(&["simulate", "--out", s(&c), "--seed", "12"]);
    assert!(fs::read(c.join("data.json")).unwrap() != x);
}

#[test]
fn exact_simulation_is_half_unitary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", json!({"noise": {"shots": "exact"}}));
    let out = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let file: TimeSeriesFile = serde_json::from_value(read(&out.join("data.json"))).unwrap();
    assert!(file.to_data().unwrap().unitarity_defect() < 1e-12);
}

#[test]
fn identify_round_trip_on_exact_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", json!({"noise": {"shots": "exact"}}));
    let out = tmp.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["identify", s(&out.join("data.json")), "--out", s(&out)]);
    let result = read(&out.join("result.json"));
    assert_eq!(result["kind"], "identification");
    assert_eq!(result["format_version"], 1);
    let rows: Vec<Vec<f64>> = serde_json::from_value(result["h_hat"].clone()).unwrap();
    let data = read(&out.join("data.json"));
    let truth: Vec<Vec<f64>> =
        serde_json::from_value(data["provenance"]["truth"]["h"].clone()).unwrap();
    let dev = (real_from_rows(&rows).unwrap() - real_from_rows(&truth).unwrap()).amax();
    assert!(dev < 1e-3, "{dev}");
    assert!(result["target"]["truth"]["analog_accuracy"].as_f64().unwrap() < 1e-3);
}

#[test]
fn identify_reports_planted_signs_with_random_spam() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        json!({"noise": {"shots": "exact", "seed": 4}, "spam": {"mode": "random", "initial_scale": 0.1}}),
    );
    let out = tmp.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["identify", s(&out.join("data.json")), "--out", s(&out)]);
    let result = read(&out.join("result.json"));
    let truth = &result["target"]["truth"];
    assert!(truth["analog_accuracy"].as_f64().unwrap() < 1e-3);

    // planted indicator from the stored final map
    let data = read(&out.join("data.json"));
    let m: Vec<Vec<[f64; 2]>> =
        serde_json::from_value(data["provenance"]["truth"]["final_map"].clone()).unwrap();
    let m = complex_from_rows(&m).unwrap();
    let planted: Vec<bool> = (0..5)
        .map(|i| m[(i, i)].arg().abs() > std::f64::consts::FRAC_PI_2)
        .collect();
    assert_eq!(truth["planted_sign_flips"], json!(planted));
    let signs: Vec<f64> = serde_json::from_value(result["final_signs"].clone()).unwrap();
    let flips: Vec<bool> = signs.iter().map(|&x| x < 0.0).collect();
    assert_eq!(truth["sign_pattern_matches"], json!(flips == planted));
}

#[test]
fn missing_input_exits_1_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = hamid(&["identify", s(&tmp.path().join("absent.json")), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.join("result.json").exists());
    assert!(!out.join("failure.json").exists());
    assert!(!res.stderr.is_empty());
}

#[test]
fn unknown_config_key_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", json!({"noize": {}}));
    let res = hamid(&["simulate", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!tmp.path().join("data.json").exists());
}

#[test]
fn report_with_no_inputs_exits_1() {
    assert_eq!(hamid(&["report"]).status.code(), Some(1));
}

#[test]
fn report_tables_have_expected_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let n = 3;
    let mut results = Vec::new();
    for k in 0..=50 {
        let b = k as f64 / 50.0;
        let dir = tmp.path().join(format!("b{k:02}"));
        fs::create_dir_all(&dir).unwrap();
        let cfg = write_config(
            &dir,
            "c.json",
            json!({
                "geometry": {"chain": n},
                "target": {"harper": {"b": b}},
                "grid": {"dt": 1.0, "samples": 60},
                "noise": {"shots": "exact"}
            }),
        );
        ok(&["simulate", "--config", s(&cfg), "--out", s(&dir)]);
        ok(&["identify", s(&dir.join("data.json")), "--out", s(&dir)]);
        results.push(dir.join("result.json"));
    }
    let report = tmp.path().join("report");
    let mut args = vec!["report", "--out", s(&report)];
    args.extend(results.iter().map(|p| s(p)));
    ok(&args);

    let butterfly = fs::read_to_string(report.join("butterfly.csv")).unwrap();
    assert_eq!(butterfly.lines().count(), 1 + 51 * n);
    assert!(report.join("butterfly.svg").exists());
    let deviations: Vec<_> = fs::read_dir(&report)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name().unwrap().to_str().unwrap().starts_with("deviation_")
        })
        .collect();
    assert_eq!(deviations.len(), 51);
    for p in &deviations {
        assert_eq!(fs::read_to_string(p).unwrap().lines().count(), 1 + n * n);
    }
    assert!(report.join("rms_vs_time.csv").exists());
}

#[test]
fn report_rejects_mixed_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    for n in [2, 3] {
        let dir = tmp.path().join(format!("n{n}"));
        fs::create_dir_all(&dir).unwrap();
        let cfg = write_config(
            &dir,
            "c.json",
            json!({"geometry": {"chain": n}, "grid": {"samples": 40}, "noise": {"shots": "exact"}}),
        );
        ok(&["simulate", "--config", s(&cfg), "--out", s(&dir)]);
        ok(&["identify", s(&dir.join("data.json")), "--out", s(&dir)]);
        results.push(dir.join("result.json"));
    }
    let res = hamid(&["report", "--out", s(&tmp.path().join("r")), s(&results[0]), s(&results[1])]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn bootstrap_and_ramp_model_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        json!({"geometry": {"chain": 3}, "grid": {"samples": 80}, "noise": {"shots": 1000}}),
    );
    let out = tmp.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["identify", s(&out.join("data.json")), "--out", s(&out)]);
    let result = out.join("result.json");
    let few = hamid(&["bootstrap", s(&result), "--bootstrap", "20", "--out", s(&out)]);
    assert_eq!(few.status.code(), Some(1));
    ok(&["bootstrap", s(&result), "--bootstrap", "100", "--out", s(&out)]);
    let boot = read(&out.join("bootstrap.json"));
    assert!(boot.to_string().contains("per_entry"));

    ok(&[
        "ramp-model",
        "--config",
        s(&cfg),
        "--result",
        s(&result),
        "--calibration-runs",
        "5",
        "--out",
        s(&out),
    ]);
    let ramp = read(&out.join("ramp_model.json"));
    assert_eq!(ramp["kind"], "ramp_model");
    assert!(ramp["systematic"].is_object());
    assert!(ramp["calibration"].is_object());
    let report = tmp.path().join("report");
    ok(&["report", "--out", s(&report), s(&result), s(&out.join("ramp_model.json"))]);
    assert!(report.join("phase_vs_distance.csv").exists());
}

#[test]
fn scan_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        json!({
            "geometry": {"grid": [2, 3]},
            "noise": {"shots": "exact"},
            "scan": {
                "subset_size": 3,
                "min_coverage": 2,
                "b_values": [0.0],
                "faults": [{"kind": "detuning_bias", "site": 1, "mhz": 2.0}]
            }
        }),
    );
    let out = tmp.path().join("scan");
    ok(&["scan", "--config", s(&cfg), "--out", s(&out)]);
    let scan = read(&out.join("scan.json"));
    let sites = scan["report"]["sites"].as_array().unwrap();
    assert_eq!(sites.len(), 6);
    let dev = sites[1]["median_deviation"].as_f64().unwrap();
    assert!((dev - 2.0).abs() < 1e-3, "{dev}");
    assert!(out.join("scan.csv").exists());
}

#[test]
fn scan_with_unreachable_coverage_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    // two components: no connected 3-site subset reaches the isolated pair
    let cfg = write_config(
        tmp.path(),
        "c.json",
        json!({
            "geometry": {"inline": {"n": 5, "edges": [[1, 2], [2, 3], [4, 5]]}},
            "noise": {"shots": "exact"},
            "scan": {"subset_size": 3, "min_coverage": 1, "b_values": [0.0]}
        }),
    );
    let out = tmp.path().join("scan");
    let res = hamid(&["scan", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(read(&out.join("scan.json"))["coverage_complete"], false);
}
