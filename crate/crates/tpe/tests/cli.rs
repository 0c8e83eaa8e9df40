use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tpe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpe")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn count_ops_prints_table_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = tpe(&["count-ops", "--n", "128", "--k", "16", "--detector", "zf"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains(": 22144"), "{}", stdout(&o));
    let o = tpe(
        &["count-ops", "--n", "128", "--k", "16", "--detector", "proposed", "--j", "4", "--vs", "tpe-constant", "--vs-j", "5"],
        dir.path(),
    );
    assert!(stdout(&o).contains("saving: 22.21%"), "{}", stdout(&o));
    let o = tpe(
        &["count-ops", "--n", "64", "--k", "16", "--detector", "learned", "--j", "8", "--vs", "power", "--vs-j", "10"],
        dir.path(),
    );
    assert!(stdout(&o).contains("saving: 24.03%"), "{}", stdout(&o));
}

#[test]
fn exit_codes_by_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(tpe(&["train", "--j", "0"], p).status.code(), Some(2));
    assert_eq!(tpe(&["count-ops", "--n", "4", "--k", "2", "--detector", "qr"], p).status.code(), Some(2));
    fs::write(p.join("bad.json"), "{\"training\": {\"n\": 4,, }}").unwrap();
    let o = tpe(&["train", "--config", "bad.json"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 21"), "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(p.join("unknown.json"), "{\"training\": {\"epochz\": 4}}").unwrap();
    assert_eq!(tpe(&["train", "--config", "unknown.json"], p).status.code(), Some(2));
    assert_eq!(tpe(&["train", "--config", "missing.json"], p).status.code(), Some(4));
    // one sample with J above K cannot be fitted
    let o = tpe(&["fit-oracle", "--n", "4", "--k", "2", "--j", "4", "--dataset-size", "1"], p);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ill-posed fit"));
    // lr large enough to overflow
    let o = tpe(&["train", "--n", "8", "--k", "2", "--dataset-size", "10", "--epochs", "3", "--lr0", "1e308", "--decay", "1"], p);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = r#"{"schema_version": 1, "training": {"n": 16, "k": 4, "order_j": 3, "dataset_size": 100, "epochs": 20}}"#;
    fs::write(p.join("t.json"), cfg).unwrap();
    for (out, workers) in [("a", "1"), ("b", "4")] {
        let o = tpe(&["train", "--config", "t.json", "--out-dir", out, "--workers", workers], p);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["checkpoint.json", "history.csv"] {
        assert_eq!(fs::read(p.join("a").join(f)).unwrap(), fs::read(p.join("b").join(f)).unwrap(), "{f}");
    }
    let ck = fs::read_to_string(p.join("a/checkpoint.json")).unwrap();
    assert!(ck.contains("\"J\": 3") && ck.contains("\"schema_version\": 1"));
    let history = fs::read_to_string(p.join("a/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 21);

    let o = tpe(&["replay", "a/manifest.json", "--out-dir", "c"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(p.join("a/checkpoint.json")).unwrap(), fs::read(p.join("c/checkpoint.json")).unwrap());
}

#[test]
fn flags_override_config_and_land_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("t.json"), r#"{"training": {"n": 16, "k": 4, "order_j": 3, "dataset_size": 50, "epochs": 2}}"#).unwrap();
    let o = tpe(&["train", "--config", "t.json", "--j", "2", "--seed", "77", "--out-dir", "o"], p);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["master_seed"], 77);
    assert_eq!(m["config"]["training"]["order_j"], 2);
    assert_eq!(m["config"]["training"]["n"], 16);
    assert_eq!(m["config"]["training"]["lr0"], 0.001);
}

#[test]
fn sweep_with_learned_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = tpe(&["fit-oracle", "--n", "16", "--k", "4", "--j", "3", "--dataset-size", "200", "--out-dir", "fit"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::create_dir(p.join("cfg")).unwrap();
    let sweep = r#"{"n": 16, "k": 4, "scenario": "small", "snr_grid_db": [6, 12], "min_bits": 8192, "max_bits": 8192,
        "detectors": [{"kind": "zf"}, {"kind": "tpe_alpha_opt", "order_j": 3},
                      {"kind": "tpe_learned", "order_j": 3, "checkpoint": "../fit/checkpoint.json"}]}"#;
    fs::write(p.join("cfg/sweep.json"), sweep).unwrap();
    let o = tpe(&["sweep", "--config", "cfg/sweep.json", "--out-dir", "s"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(p.join("s/ber.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("zf,,6,8192,"));
    assert!(rows[3].starts_with("tpe_alpha_opt,3,6,"));
    assert!(rows[5].starts_with("tpe_learned,3,6,"));
    let summary = fs::read_to_string(p.join("s/summary.json")).unwrap();
    assert!(summary.contains("\"scenario\": \"small\""));

    let bad = sweep.replace("\"order_j\": 3, \"checkpoint\"", "\"order_j\": 2, \"checkpoint\"");
    fs::write(p.join("cfg/bad.json"), bad).unwrap();
    let o = tpe(&["sweep", "--config", "cfg/bad.json", "--out-dir", "s2"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tpe_learned J=2"), "{}", String::from_utf8_lossy(&o.stderr));

    fs::write(p.join("cfg/empty.json"), r#"{"detectors": []}"#).unwrap();
    assert_eq!(tpe(&["sweep", "--config", "cfg/empty.json"], p).status.code(), Some(2));
}

#[test]
fn fit_oracle_reports_gap_against_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let common = ["--n", "16", "--k", "4", "--j", "2", "--dataset-size", "100"];
    let o = tpe(&[&["train", "--epochs", "3000", "--lr0", "0.02", "--decay", "0.998", "--batch-size", "50", "--out-dir", "t"][..], &common[..]].concat(), p);
    assert!(o.status.success());
    let o = tpe(&[&["fit-oracle", "--checkpoint", "t/checkpoint.json"][..], &common[..]].concat(), p);
    let text = stdout(&o);
    let gap: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("relative gap "))
        .and_then(|g| g.trim_end_matches('%').parse().ok())
        .unwrap_or_else(|| panic!("{text}"));
    assert!((0.0..=0.1).contains(&gap), "{text}");

    let o = tpe(&["fit-oracle", "--n", "4", "--k", "2", "--j", "1", "--dataset-size", "1"], p);
    let text = stdout(&o);
    assert!(text.contains("w_0 = <A_0, W_ZF> / <A_0, A_0>"), "{text}");
    assert!(!text.contains("checkpoint"));
}

#[test]
fn gen_data_feeds_training() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let common = ["--n", "8", "--k", "2", "--dataset-size", "5", "--j", "2", "--epochs", "4"];
    assert!(tpe(&[&["gen-data", "--out-dir", "g"][..], &common[..]].concat(), p).status.success());
    assert!(tpe(&[&["train", "--dataset", "g/dataset.json", "--out-dir", "x"][..], &common[..]].concat(), p).status.success());
    assert!(tpe(&[&["train", "--out-dir", "y"][..], &common[..]].concat(), p).status.success());
    assert_eq!(fs::read(p.join("x/checkpoint.json")).unwrap(), fs::read(p.join("y/checkpoint.json")).unwrap());
    let o = tpe(&["train", "--dataset", "g/dataset.json", "--n", "8", "--k", "2", "--dataset-size", "6"], p);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constellation_listing() {
    let dir = tempfile::tempdir().unwrap();
    let o = tpe(&["constellation", "--order", "4"], dir.path());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(1).unwrap().starts_with("0,00,0.7071067811865476,0.7071067811865476"), "{text}");
}
