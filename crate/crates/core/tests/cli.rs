use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn clt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clt-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn psi_scan_csv_has_header_and_grid_rows() {
    let out = clt(&["psi-scan", "--n", "100", "--l", "1", "--tmax", "1.7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
    assert_eq!(header["schema_version"], 1);
    assert_eq!(header["config"]["points"], 200);
    assert_eq!(lines.next().unwrap(), "t,psi,gaussian,ratio");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 200);
    let last: Vec<f64> = rows[199].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 1.7).abs() < 1e-12);
    assert!((last[1] / last[2] - last[3]).abs() < 1e-12);
}

#[test]
fn psi_scan_beyond_validity_range_exits_one() {
    let out = clt(&["psi-scan", "--n", "100", "--l", "1", "--tmax", "1.8"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n^(1/8)"));
}

#[test]
fn ratio_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |name: &str, threads: &str| {
        vec![
            "--threads".to_string(),
            threads.to_string(),
            "--out".to_string(),
            out_path(dir.path(), name),
            "ratio".into(),
            "--body".into(),
            "cube".into(),
            "--n".into(),
            "60".into(),
            "--samples".into(),
            "30000".into(),
            "--seed".into(),
            "7".into(),
        ]
    };
    for (name, threads) in [("a.json", "1"), ("b.json", "2")] {
        let a = args(name, threads);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        assert!(clt(&refs).status.success());
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    let b = fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let doc: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["config"]["max_radius"], 2.0);
    assert_eq!(doc["config"]["seed"], 7);
    assert!(doc["result"]["report"]["sup_abs_deviation"].as_f64().unwrap() < 0.2);
}

#[test]
fn stochastic_subcommands_require_a_seed() {
    let out = clt(&["ratio", "--body", "cube", "--n", "10", "--samples", "20000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn deconv_prints_certificate() {
    let out = clt(&["deconv", "--n", "8", "--alpha", "1e-30", "--beta", "0.5", "--epsilon", "0.001", "--R", "10"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cert = &doc["result"];
    assert_eq!(cert["admissible"], true);
    assert_eq!(cert["lower_radius"], 4.0);
    assert_eq!(cert["upper_radius"], 1.0);
    assert_eq!(doc["config"]["c0"], 0.01);

    let out = clt(&["deconv", "--n", "2", "--alpha", "1e-12", "--beta", "0.5", "--epsilon", "0.005", "--R", "10"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["result"]["admissible"], false);
    assert_eq!(doc["result"]["violated_conditions"][0]["condition"], "epsilon_below_floor");
}

#[test]
fn deconv_verify_csv_margins() {
    let out = clt(&[
        "deconv-verify", "--body", "gaussian", "--alpha", "1e-25", "--beta", "2", "--epsilon", "0.008", "--R", "5", "--points", "101",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 101);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        for m in &cells[2..] {
            if !m.is_empty() {
                assert!(m.parse::<f64>().unwrap() >= -1e-9);
            }
        }
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "seed = 5\n[thinshell]\nbody = \"gaussian\"\nn = 100\nsamples = 20000\nepsilon = [0.3]\n").unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let out = clt(&["--config", &cfg, "--format", "json", "thinshell", "--n", "64"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["config"]["n"], 64);
    assert_eq!(doc["config"]["seed"], 5);
    assert_eq!(doc["config"]["body"], "standard_gaussian");
    assert!(doc["result"][0]["fraction"].as_f64().unwrap() <= 0.01);
}

#[test]
fn sample_then_project() {
    let dir = tempfile::tempdir().unwrap();
    let batch = out_path(dir.path(), "x.bin");
    let out = clt(&["--out", &batch, "sample", "--body", "simplex", "--n", "6", "--samples", "5000", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let side: Value = serde_json::from_str(&fs::read_to_string(format!("{batch}.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["config"]["n"], 6);
    assert_eq!(fs::metadata(&batch).unwrap().len(), 6 * 5000 * 8);

    let projected = out_path(dir.path(), "p.csv");
    let out = clt(&["--format", "csv", "--out", &projected, "project", "--input", &batch, "--l", "2", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&projected).unwrap();
    assert_eq!(text.lines().nth(1), Some("x0,x1"));
    assert_eq!(text.lines().count(), 5002);
}

#[test]
fn bin_without_out_is_rejected() {
    let out = clt(&["sample", "--body", "cube", "--n", "2", "--samples", "10", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_are_nonzero() {
    assert_eq!(clt(&["psi-scan", "--nope"]).status.code(), Some(1));
    assert_eq!(clt(&["bogus"]).status.code(), Some(1));
    assert_eq!(clt(&["--help"]).status.code(), Some(0));
}

#[test]
fn suite_exit_codes() {
    let out = clt(&["suite", "--profile", "quick", "--only", "2,9"]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);

    let out = clt(&["suite", "--profile", "quick", "--only", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("[FAIL]"));
}
