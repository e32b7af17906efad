use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bs1d")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn order_example() {
    let out = run(&["order", "--d", "2", "--q", "5", "--s", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for (k, want) in [("t1", 4), ("ts", 20), ("ks", 1), ("ms", 4)] {
        assert_eq!(v[k], want, "{k}");
    }
    assert_eq!(v["schemaVersion"], 1);
    assert_eq!(v["config"]["q"], 5);
}

#[test]
fn periodic_example() {
    let v = json(&run(&["periodic", "--d", "2", "--m", "3"]));
    assert_eq!((v["count"].as_u64(), v["verified"].as_bool()), (Some(7), Some(true)));
}

#[test]
fn verify_all_is_reproducible() {
    let a = run(&["verify", "all", "--seed", "7"]);
    let b = run(&["verify", "all", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["reports"].as_array().unwrap().len(), 10);
    assert_eq!(v["config"]["seed"], 7);
}

#[test]
fn floats_carry_fifteen_significant_digits() {
    let v = json(&run(&["warped-dist", "--d", "2", "--v1", "0@0", "--w1", "0", "--v2", "0@0", "--w2", "1"]));
    assert_eq!(v["distance"].as_f64(), Some(0.98099161448459));
}

#[test]
fn tree_distance_example() {
    let v = json(&run(&["tree-dist", "--d", "2", "--v1", "3/4@0", "--v2", "0@0"]));
    assert_eq!(v["vertexDistance"], 4);
    assert_eq!(v["meet"], "0@2");
}

#[test]
fn exit_codes() {
    // missing arguments
    let out = run(&["order", "--d", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "usage");
    // precondition violated
    let out = run(&["order", "--d", "2", "--q", "4", "--s", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "invalid-config");
    assert!(json(&out)["config"].is_object());
    assert_eq!(run(&["verify", "nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    // an edge length too short for the contraction is a failed assertion
    let out = run(&["case1-check", "--d", "2", "--g", "1/2,3", "--h", "0,1", "--n", "3", "--m", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["pass"], false);
}

#[test]
fn case1_negative_entries() {
    let out = run(&["case1-check", "--d", "2", "--g", "-1/2,3", "--h", "0,-1", "--n", "5"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["deltaK"], 4);
}

#[test]
fn out_file_matches_stdout() {
    let path = std::env::temp_dir().join(format!("bs1d-out-{}.json", std::process::id()));
    let out = run(&["diagonal", "--d", "6", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), out.stdout);
    std::fs::remove_file(path).unwrap();
}

#[test]
fn shipped_fixture_matches_builtin_cover() {
    let fixture = repo_file("config/fixtures/interval.json");
    let a = json(&run(&["nerve-check", "--fixture", fixture.to_str().unwrap()]));
    let b = json(&run(&["nerve-check"]));
    assert_eq!(a["lipschitz"], b["lipschitz"]);
    assert_eq!(a["pass"], true);
    assert_eq!(a["dimension"], 2);
}

#[test]
fn flow_distance_of_constants_and_rays() {
    let c = r#"{"kind":"constant","anchor":{"base":{"residue":"0","level":0},"offset":0.0},"cMinus":0,"cPlus":0}"#;
    let v = json(&run(&["flow-dist", "--d", "2", "--c1", c, "--c2", c]));
    assert_eq!(v["distance"].as_f64(), Some(0.0));
    let v = json(&run(&["flow-dist", "--d", "2", "--v1", "0@0", "--v2", "1/2@0", "--tau", "-1", "--w1", "0", "--w2", "0"]));
    assert_eq!(v["band"]["holds"], true);
    assert!(v["hfsDistance"].as_f64().unwrap() > 0.0);
}

#[test]
fn quotient_commands() {
    let v = json(&run(&["enumerate", "--d", "2", "--q", "5", "--s", "1"]));
    assert_eq!((v["groupOrder"].as_u64(), v["count"].as_u64()), (Some(20), Some(14)));
    let v = json(&run(&["classify", "--d", "2", "--q", "7", "--s", "1", "--variant", "extended"]));
    assert_eq!(v["pass"], true);
    assert_eq!(v["deviations"], 0);
    let v = json(&run(&["corollary-c2", "--d", "2", "--q", "5", "--s", "1", "--n", "2"]));
    assert_eq!(v["indexMismatches"], 0);
    let v = json(&run(&["case2-check", "--d", "2", "--n", "3", "--delta", "0.25"]));
    assert_eq!(v["holds"], true);
    let v = json(&run(&["fold", "--q", "2", "--radius", "4", "--steps", "2"]));
    assert_eq!(v["reached"], 16);
}
