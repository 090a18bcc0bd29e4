use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn run_with(config: &Value, dir: &Path, threads: usize, seed_override: Option<&str>) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ym2"));
    cmd.args(["run", "--config"]).arg(&path).args(["--threads", &threads.to_string(), "--out-dir"]).arg(dir.join("out"));
    cmd.env_remove("YM2_SEED_OVERRIDE");
    if let Some(s) = seed_override {
        cmd.env("YM2_SEED_OVERRIDE", s);
    }
    cmd.output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect();
    (header, rows)
}

#[test]
fn sphere_partition_function_smoke() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "kind": "segal", "seed": 1, "group": "U1", "action": "villain", "genus": 0 });
    let out = run_with(&cfg, dir.path(), 1, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/segal.csv"));
    assert_eq!(header, ["quantity", "genus", "boundaries", "value", "stderr"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "Z");
    // Σ_n e^{−n²/2}
    let theta: f64 = 1.0 + 2.0 * (1..40).map(|n| (-(n * n) as f64 / 2.0).exp()).sum::<f64>();
    let z: f64 = rows[0][3].parse().unwrap();
    assert!((z - theta).abs() < 1e-12, "{z} vs {theta}");
}

#[test]
fn llt_ladder_rows_decrease() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "kind": "llt", "seed": 2, "group": "U1", "action": "wilson", "ladder": [8, 64, 256] });
    let out = run_with(&cfg, dir.path(), 1, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/llt.csv"));
    assert_eq!(header[1], "distance");
    let d: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(d.len(), 3);
    assert!(d[1] < d[0] && d[2] < d[1], "{d:?}");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/llt.json")).unwrap()).unwrap();
    assert_eq!(summary["checks"]["distance_decreasing"], json!(true));
}

#[test]
fn missing_seed_is_a_config_error_without_output() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "kind": "segal", "group": "U1", "genus": 0 });
    let out = run_with(&cfg, dir.path(), 1, None);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn other_config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    for cfg in [
        json!({ "kind": "segal", "seed": 1, "genus": 0, "colour": "blue" }),
        json!({ "kind": "sample", "seed": 1, "resolution": 15 }),
        json!({ "kind": "llt", "seed": 1 }),
        json!({ "kind": "teleport", "seed": 1 }),
    ] {
        let out = run_with(&cfg, dir.path(), 1, None);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
    let out = run_with(&json!({ "kind": "segal", "seed": 1, "genus": 0 }), dir.path(), 1, Some("abc"));
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn failing_check_exits_1_and_still_writes() {
    let dir = TempDir::new().unwrap();
    // a one-irrep truncation of a small-area torus leaves a large tail
    let cfg = json!({ "kind": "segal", "seed": 1, "group": "SU2", "genus": 1, "total_area": 0.05, "c2max": 1.0 });
    let out = run_with(&cfg, dir.path(), 1, None);
    assert_eq!(out.status.code(), Some(1));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/segal.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], json!(false));
    assert_eq!(summary["checks"]["truncation"], json!(false));
}

#[test]
fn csv_does_not_depend_on_thread_count() {
    let cfg = json!({ "kind": "sample", "seed": 5, "group": "SU2", "resolution": 2, "samples": 3000, "output": "boundary" });
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(run_with(&cfg, a.path(), 1, None).status.code(), Some(0));
    assert_eq!(run_with(&cfg, b.path(), 3, None).status.code(), Some(0));
    let ca = std::fs::read(a.path().join("out/boundary.csv")).unwrap();
    let cb = std::fs::read(b.path().join("out/boundary.csv")).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn seed_override_replaces_the_config_seed() {
    let cfg = json!({ "kind": "condition", "seed": 5, "group": "SU2", "resolution": 2, "samples": 2000, "face": [1, 2] });
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    run_with(&cfg, a.path(), 1, None);
    run_with(&cfg, b.path(), 1, Some("77"));
    run_with(&json!({ "kind": "condition", "seed": 77, "group": "SU2", "resolution": 2, "samples": 2000, "face": [1, 2] }), c.path(), 1, None);
    let read = |d: &TempDir| std::fs::read(d.path().join("out/condition.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
    assert_eq!(read(&b), read(&c));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(b.path().join("out/condition.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], json!(77));
}

#[test]
fn summary_envelope_is_shared_across_kinds() {
    let dir = TempDir::new().unwrap();
    let mut keys = Vec::new();
    for (cfg, stem) in [
        (json!({ "kind": "group-tables", "seed": 1, "group": "SU2", "c2max": 12.0 }), "group-tables"),
        (json!({ "kind": "segal", "seed": 1, "group": "SU2", "genus": 2, "boundary_angles": [0.4] }), "segal"),
        (json!({ "kind": "norms", "seed": 1, "ladder": [2, 3], "alpha": 0.4, "p": 8.0, "s": 0.4, "samples": 50 }), "norms"),
    ] {
        let out = run_with(&cfg, dir.path(), 1, None);
        assert_eq!(out.status.code(), Some(0), "{cfg}: {}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("out/{stem}.json"))).unwrap()).unwrap();
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        assert_eq!(v["config"]["kind"], cfg["kind"]);
        assert!(v["wall_seconds"].as_f64().unwrap() >= 0.0);
        keys.push(k);
    }
    assert!(keys.windows(2).all(|w| w[0] == w[1]), "{keys:?}");
}

#[test]
fn group_tables_are_orthonormal() {
    let dir = TempDir::new().unwrap();
    let out = run_with(&json!({ "kind": "group-tables", "seed": 1, "group": "SU2", "c2max": 24.0 }), dir.path(), 1, None);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = read_csv(&dir.path().join("out/group-tables.csv"));
    // c2 = m(m+2)/2 ≤ 24 gives m = 0..=6
    assert_eq!(rows.len(), 7);
    for r in rows {
        let m: f64 = r[0].parse().unwrap();
        assert_eq!(r[1].parse::<f64>().unwrap(), m + 1.0);
        assert!((r[2].parse::<f64>().unwrap() - m * (m + 2.0) / 2.0).abs() < 1e-12);
        assert!((r[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    }
}
