use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sleepy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sleepy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json report")
}

fn small_config(dir: &Path) -> String {
    let text = std::fs::read_to_string(scenario("c07_latency.toml"))
        .unwrap()
        .replace("horizon = 200", "horizon = 80");
    let p = dir.join("small.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn minimal_run_is_clean_and_verifies_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = sleepy(&["run", &scenario("minimal.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = json(&o);
    assert_eq!(run["metrics"]["safety"]["count"], 0);
    assert_eq!(run["checks"]["safety"], true);
    let v = sleepy(&["verify", out.join("trace.bin").to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(json(&v), run);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(saved, run);
    assert!(out.join("trace.txt").exists());
}

#[test]
fn corrupted_trace_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        sleepy(&["run", &scenario("minimal.toml"), "--out", out.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let path = out.join("trace.bin");
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, &bytes).unwrap();
    assert_eq!(sleepy(&["verify", bad.to_str().unwrap()]).status.code(), Some(3));
    let empty = dir.path().join("empty.bin");
    std::fs::write(&empty, b"").unwrap();
    assert_eq!(sleepy(&["verify", empty.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 1\nn = 3\nbogus = 1\n").unwrap();
    let o = sleepy(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let missing = dir.path().join("missing.toml");
    assert_eq!(sleepy(&["run", missing.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(sleepy(&["attack-demo", "nope", "--mode", "external"]).status.code(), Some(2));
}

#[test]
fn single_seed_sweep_matches_run_and_jobs_do_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = json(&sleepy(&["run", &cfg, "--seed", "5"]));
    let one = json(&sleepy(&["sweep", &cfg, "--seeds", "5..5"]));
    assert_eq!(one["runs"][0], run["metrics"]);
    assert_eq!(one["seeds"], serde_json::json!([5]));
    let a = sleepy(&["sweep", &cfg, "--seeds", "0..5", "--jobs", "1"]);
    let b = sleepy(&["sweep", &cfg, "--seeds", "0..5", "--jobs", "8"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["aggregate"]["safety_violations"], 0);
}

#[test]
fn key_transfer_demo_outcomes() {
    let s = sleepy(&["attack-demo", "key_transfer", "--mode", "standard"]);
    assert_eq!(s.status.code(), Some(0));
    assert_eq!(json(&s)["metrics"]["attack"], "succeeded");
    let e = sleepy(&["attack-demo", "key_transfer", "--mode", "external"]);
    assert_eq!(e.status.code(), Some(0));
    let e = json(&e);
    assert_eq!(e["metrics"]["attack"], "blocked");
    assert!(e["metrics"]["policy"]["policy_violations"].as_u64().unwrap() > 0);
}

#[test]
fn forward_sim_demo_outcomes() {
    assert_eq!(
        json(&sleepy(&["attack-demo", "forward_sim", "--mode", "standard"]))["metrics"]["attack"],
        "succeeded"
    );
    assert_eq!(
        json(&sleepy(&["attack-demo", "forward_sim", "--mode", "external"]))["metrics"]["attack"],
        "blocked"
    );
}

#[test]
fn backward_sim_demo_outcomes() {
    assert_eq!(
        json(&sleepy(&["attack-demo", "backward_sim", "--mode", "standard"]))["metrics"]["attack"],
        "succeeded"
    );
    assert_eq!(
        json(&sleepy(&["attack-demo", "backward_sim", "--mode", "external"]))["metrics"]["attack"],
        "blocked"
    );
}
