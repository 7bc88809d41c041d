//! End-to-end behaviour of the `fbx` binary.

use std::path::Path;
use std::process::{Command, Output};

fn fbx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbx"))
        .args(args)
        .current_dir(dir)
        .env_remove("FBX_SEED")
        .env_remove("FBX_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = fbx(dir, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn channel(dir: &Path) {
    ok(dir, &["channel", "make", "--kind", "parallel-bsc", "--q1", "0.05", "--q2", "0.10", "--out", "ch.json"]);
}

#[test]
fn make_analyze_certify() {
    let d = tempfile::tempdir().unwrap();
    channel(d.path());
    let a: serde_json::Value = serde_json::from_str(&ok(d.path(), &["channel", "analyze", "ch.json"])).unwrap();
    assert!((a["capacity_bits"].as_f64().unwrap() - 0.6223).abs() < 1e-3);
    let c: serde_json::Value = serde_json::from_str(&ok(d.path(), &["channel", "certify", "ch.json"])).unwrap();
    assert_eq!(c["passed"], true);
}

#[test]
fn certify_refuses_plain_pair() {
    let d = tempfile::tempdir().unwrap();
    let text = r#"{"num_inputs":2,"num_outputs":2,"w1":[[0.9,0.1],[0.1,0.9]],"w2":[[0.9,0.1],[0.1,0.9]]}"#;
    std::fs::write(d.path().join("same.json"), text).unwrap();
    assert_eq!(fbx(d.path(), &["channel", "certify", "same.json"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    channel(d.path());
    // validation
    assert_eq!(fbx(d.path(), &["bound", "normal", "--channel", "ch.json", "--eps", "0.9"]).status.code(), Some(2));
    assert_eq!(fbx(d.path(), &["bound", "nonsense"]).status.code(), Some(2));
    // io
    assert_eq!(fbx(d.path(), &["bound", "normal", "--channel", "missing.json", "--eps", "0.1"]).status.code(), Some(4));
    // numerical: error floor above the target
    let o = fbx(d.path(), &["sim", "vlf", "--channel", "ch.json", "--ellbar", "1000", "--eps", "1e-6", "--trials", "200"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bits_flag_renames_and_scales() {
    let d = tempfile::tempdir().unwrap();
    let nats = ok(d.path(), &["bound", "rcu", "--q1", "0.05", "--q2", "0.10", "--eps", "1e-3", "--n-grid", "200"]);
    let bits = ok(d.path(), &["--bits", "bound", "rcu", "--q1", "0.05", "--q2", "0.10", "--eps", "1e-3", "--n-grid", "200"]);
    assert!(nats.starts_with("n,logM_nats,rate_bits_per_use,epsilon_achieved,truncation_mass\n"));
    assert!(bits.starts_with("n,logM_bits,rate_bits_per_use,"));
    let field = |s: &str, i: usize| s.lines().nth(1).unwrap().split(',').nth(i).unwrap().parse::<f64>().unwrap();
    assert!((field(&nats, 1) / std::f64::consts::LN_2 - field(&bits, 1)).abs() < 1e-9);
    assert_eq!(field(&nats, 2), field(&bits, 2));
}

#[test]
fn converse_columns() {
    let d = tempfile::tempdir().unwrap();
    channel(d.path());
    let out = ok(d.path(), &["bound", "converse", "--channel", "ch.json", "--eps", "1e-3", "--n-grid", "100,200"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("n,logM_nats,logM_bits_per_use,lambda_used,method"));
    assert!(lines.all(|l| l.ends_with(",exact")));
}

#[test]
fn seed_precedence() {
    let d = tempfile::tempdir().unwrap();
    channel(d.path());
    let run = |env: Option<&str>, flag: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_fbx"));
        c.current_dir(d.path()).env_remove("FBX_SEED");
        if let Some(e) = env {
            c.env("FBX_SEED", e);
        }
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        c.args(["sim", "vlf", "--channel", "ch.json", "--ellbar", "1000", "--eps", "0.05", "--trials", "500", "--out", out]);
        assert!(c.status().unwrap().success());
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join(out)).unwrap()).unwrap();
        v["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, None, "a.json"), 1);
    assert_eq!(run(Some("9"), None, "b.json"), 9);
    assert_eq!(run(Some("9"), Some("4"), "c.json"), 4);
}

#[test]
fn fig4_writes_aligned_files() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["fig4", "--n-grid", "200,400", "--out-dir", "out"]);
    for f in ["converse.csv", "rcu.csv", "normal.csv"] {
        let text = std::fs::read_to_string(d.path().join("out").join(f)).unwrap();
        assert!(text.starts_with("n,logM_nats,rate_bits_per_use,kind\n"));
        assert_eq!(text.lines().count(), 3);
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("out/fig4.json")).unwrap()).unwrap();
    assert_eq!(v["rcu"]["metadata"]["tool_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn fig4_empty_grid() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["fig4", "--n-grid", "", "--out-dir", "out"]);
    let text = std::fs::read_to_string(d.path().join("out/rcu.csv")).unwrap();
    assert_eq!(text, "n,logM_nats,rate_bits_per_use,kind\n");
}

#[test]
fn simulations_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    channel(d.path());
    let flf = |out: &str, threads: &str| {
        ok(d.path(), &["--seed", "7", "--threads", threads, "sim", "flf", "--channel", "ch.json", "--n", "100000", "--eps", "0.05", "--trials", "10000", "--out", out]);
        std::fs::read(d.path().join(out)).unwrap()
    };
    assert_eq!(flf("f1.json", "1"), flf("f2.json", "2"));
    let seq = |out: &str, extra: &[&str]| {
        let mut args = vec!["--seed", "7"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["sim", "vlf", "--channel", "ch.json", "--ellbar", "2000", "--eps", "0.05", "--trials", "3000", "--out", out]);
        ok(d.path(), &args);
        std::fs::read(d.path().join(out)).unwrap()
    };
    assert_eq!(seq("v1.json", &[]), seq("v2.json", &["--sequential"]));
}
