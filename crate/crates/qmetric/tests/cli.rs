//! The binary: exit codes, written files and determinism.

use std::path::Path;
use std::process::{Command, Output};

fn qmetric(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_qmetric"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

#[test]
fn malformed_config_exits_1_and_writes_nothing() {
    let d = tempfile::tempdir().unwrap();
    for cfg in [
        "{not json",
        r#"{"group":{"family":"integers"},"growth":{"radii":[1,2]},"extra":true}"#,
        r#"{"group":{"family":"integers"},"growth":{"radii":["1"]}}"#,
        r#"{"group":{"family":"integers"}}"#,
    ] {
        let o = qmetric(d.path(), &["growth"], cfg);
        assert_eq!(o.status.code(), Some(1), "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!d.path().join("out").exists());
    }
    let o = qmetric(d.path(), &["nonsense"], r#"{"group":{"family":"integers"}}"#);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn growth_writes_report_and_table() {
    let d = tempfile::tempdir().unwrap();
    let o = qmetric(
        d.path(),
        &["growth"],
        r#"{"group":{"family":"free-abelian","rank":2},"growth":{"radii":{"linear":16}}}"#,
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(d.path().join("out/growth.csv")).unwrap();
    assert_eq!(csv.lines().nth(16).unwrap().split(',').nth(1).unwrap(), "545");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "growth");
    assert!(report["config_hash"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn ball_cap_truncation_is_inconclusive() {
    let d = tempfile::tempdir().unwrap();
    let o = qmetric(
        d.path(),
        &["growth", "--ball-cap", "100"],
        r#"{"group":{"family":"free-abelian","rank":2},"growth":{"radii":{"linear":16}}}"#,
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn same_seed_same_tables() {
    let cfg = r#"{"group":{"family":"heisenberg"},"seminorm":{"corpus":{"size":8,"support_radius":3}}}"#;
    let run = |seed: &str| {
        let d = tempfile::tempdir().unwrap();
        let o = qmetric(d.path(), &["seminorm", "--seed", seed, "--threads", "2"], cfg);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(d.path().join("out/seminorm.csv")).unwrap()
    };
    assert_eq!(run("4"), run("4"));
    assert_ne!(run("4"), run("5"));
}

#[test]
fn integer_verify_corpus_has_no_failures() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"group":{"family":"integers"},"verify":{"corpus":{"size":200,"support_radius":12}}}"#;
    let o = qmetric(d.path(), &["verify", "--seed", "7"], cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let records = std::fs::read_to_string(d.path().join("out/records.csv")).unwrap();
    assert!(records.lines().count() > 200);
    assert!(!records.contains(",fail,"));
}

#[test]
fn covering_nets_grow_monotonically() {
    let cover = |size: usize| {
        let d = tempfile::tempdir().unwrap();
        let cfg = format!(
            r#"{{"group":{{"family":"integers"}},"seed":9,"covering":{{"epsilon":0.5,"corpus":{{"size":{size},"support_radius":400}}}}}}"#
        );
        let o = qmetric(d.path(), &["covering-demo"], &cfg);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let r: serde_json::Value =
            serde_json::from_slice(&std::fs::read(d.path().join("out/report.json")).unwrap()).unwrap();
        r["payload"].clone()
    };
    let p = cover(50);
    assert_eq!(p["support_bound"], 320.0);
    assert!(p["net_size_half_corpus"].as_u64() <= p["net_size"].as_u64());
    let q = cover(100);
    assert!(p["net_size"].as_u64() <= q["net_size"].as_u64());
}
