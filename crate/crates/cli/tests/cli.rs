use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use losr_core::Resource;
use serde_json::Value;
use tempfile::TempDir;

fn losr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_losr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(args: &[&str]) -> (Value, i32) {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let o = losr(&all);
    let text = if o.stdout.is_empty() { &o.stderr } else { &o.stdout };
    (serde_json::from_slice(text).expect("json report"), code(&o))
}

fn example(dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(format!("{}.json", name.replace(':', "_")));
    let o = losr(&["example", name, "-o", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&losr(&["validate", s(&example(dir.path(), "phi-plus"))])), 0);
    let (v, c) = json(&["validate", s(&example(dir.path(), "swap"))]);
    assert_eq!(c, 1);
    assert_eq!(v["outputs"]["valid"], false);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&losr(&["validate", s(&bad)])), 2);
    assert_eq!(code(&losr(&["validate", "/nonexistent/file.json"])), 2);
    assert_eq!(code(&losr(&["no-such-command"])), 2);
}

#[test]
fn encode_decode_round_trip() {
    let dir = TempDir::new().unwrap();
    let src = example(dir.path(), "werner:0.7");
    let enc = dir.path().join("enc.json");
    let dec = dir.path().join("dec.json");
    assert_eq!(code(&losr(&["encode", s(&src), "--party", "A", "-o", s(&enc)])), 0);
    assert_eq!(code(&losr(&["decode", s(&enc), "--party", "A", "-o", s(&dec)])), 0);
    let read = |p: &Path| -> Resource { serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap() };
    let (r0, r1) = (read(&src), read(&dec));
    assert_eq!(r0.wiring(), r1.wiring());
    assert!(r0.matrix().dist(r1.matrix()) < 1e-9);
    assert_eq!(read(&enc).global_type().to_string(), "QI->CQ");
}

#[test]
fn encoding_both_parties_gives_classical_outputs() {
    let dir = TempDir::new().unwrap();
    let src = example(dir.path(), "phi-plus");
    let a = dir.path().join("a.json");
    let ab = dir.path().join("ab.json");
    assert_eq!(code(&losr(&["encode", s(&src), "--party", "A", "-o", s(&a)])), 0);
    let (v, c) = json(&["encode", s(&a), "--party", "B", "-o", s(&ab)]);
    assert_eq!(c, 0);
    assert_eq!(v["outputs"]["type"], "QQ->CC");
    assert_eq!(code(&losr(&["validate", s(&ab)])), 0);
}

#[test]
fn encode_rejects_classical_output() {
    let dir = TempDir::new().unwrap();
    let pr = example(dir.path(), "pr-box");
    let o = losr(&["encode", s(&pr)]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn eval_chsh() {
    let dir = TempDir::new().unwrap();
    let (v, c) = json(&["eval", "chsh", s(&example(dir.path(), "pr-box"))]);
    assert_eq!(c, 0);
    assert!((v["outputs"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let (v, _) = json(&["eval", "chsh", s(&example(dir.path(), "local-box"))]);
    assert!(v["outputs"]["value"].as_f64().unwrap() <= 0.75 + 1e-12);
    let o = losr(&["eval", "chsh", s(&example(dir.path(), "phi-plus"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("losr encode"));
}

#[test]
fn membership_commands() {
    let dir = TempDir::new().unwrap();
    let (v, c) = json(&["membership", "local", s(&example(dir.path(), "pr-box"))]);
    assert_eq!(c, 1);
    assert_eq!(v["outputs"]["verdict"], "NonFree");
    assert_eq!(v["outputs"]["certificate"]["kind"], "dual");
    assert_eq!(code(&losr(&["membership", "local", s(&example(dir.path(), "uniform-box"))])), 0);
    assert_eq!(code(&losr(&["membership", "ppt", s(&example(dir.path(), "phi-plus"))])), 1);
    assert_eq!(code(&losr(&["membership", "ppt", s(&example(dir.path(), "werner:0.3"))])), 0);
    assert_eq!(code(&losr(&["membership", "lhs", s(&example(dir.path(), "singlet-assemblage"))])), 1);
    assert_eq!(code(&losr(&["membership", "lhs", s(&example(dir.path(), "werner-assemblage:0.5"))])), 0);
}

#[test]
fn convert_box_directions() {
    let dir = TempDir::new().unwrap();
    let pr = example(dir.path(), "pr-box");
    let local = example(dir.path(), "local-box");
    let (v, c) = json(&["convert-box", s(&pr), s(&local)]);
    assert_eq!(c, 0);
    assert_eq!(v["outputs"]["verdict"], "Free");
    assert_eq!(code(&losr(&["convert-box", s(&local), s(&pr)])), 1);
}

#[test]
fn type_order_verdicts() {
    let (v, c) = json(&["type-order", "Q->C", "I->Q"]);
    assert_eq!((v["outputs"]["verdict"].as_str(), c), (Some("Yes"), 0));
    let (v, c) = json(&["type-order", "C->Q", "Q->C"]);
    assert_eq!((v["outputs"]["verdict"].as_str(), c), (Some("Unknown"), 3));
    let (v, c) = json(&["type-order", "C->C", "I->Q"]);
    assert_eq!((v["outputs"]["verdict"].as_str(), c), (Some("No"), 1));
    assert_eq!(code(&losr(&["type-order", "X->C", "I->Q"])), 2);
}

#[test]
fn json_reports_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let pr = example(dir.path(), "pr-box");
    let args = ["--seed", "7", "--restarts", "8", "--iters", "20", "seesaw", "chsh", s(&pr)];
    let (a, ca) = json(&args);
    let (b, cb) = json(&args);
    assert_eq!(ca, 0);
    assert_eq!(ca, cb);
    assert_eq!(a["outputs"], b["outputs"]);
    assert_eq!(a["inputs_digest"], b["inputs_digest"]);
    assert_eq!(a["seed"], 7);
    assert!(a["outputs"]["lower_bound"].as_f64().unwrap() >= 0.75 - 1e-9);
    assert_eq!(a["command"][1], "--json");
}

#[test]
fn single_acceptance_criterion() {
    let o = losr(&["acceptance", "--only", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS]"));
}
