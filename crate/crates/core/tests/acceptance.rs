//! Acceptance criteria. Each criterion runs its suite with the committed seed,
//! checks the runtime budget, and prints one pass/fail line (shown with
//! `--nocapture`; the test name carries the verdict otherwise).

use std::sync::Mutex;
use std::time::{Duration, Instant};

use bs1d::verify::{run_suite, SuiteReport};

const DEFAULTS: &str = include_str!("../../../config/defaults.json");

fn committed_seed() -> u64 {
    let v: serde_json::Value = serde_json::from_str(DEFAULTS).expect("defaults parse");
    v["seed"].as_u64().expect("seed")
}

struct Criterion {
    id: u32,
    suite: &'static str,
    budget: Duration,
}

const CRITERIA: [Criterion; 10] = [
    Criterion { id: 1, suite: "group", budget: Duration::from_secs(1) },
    Criterion { id: 2, suite: "tree", budget: Duration::from_secs(10) },
    Criterion { id: 3, suite: "warped", budget: Duration::from_secs(60) },
    Criterion { id: 4, suite: "flow", budget: Duration::from_secs(120) },
    Criterion { id: 5, suite: "periodic", budget: Duration::from_secs(5) },
    Criterion { id: 6, suite: "number-theory", budget: Duration::from_secs(5) },
    Criterion { id: 7, suite: "classification", budget: Duration::from_secs(600) },
    Criterion { id: 8, suite: "case1", budget: Duration::from_secs(5) },
    Criterion { id: 9, suite: "nerve", budget: Duration::from_secs(30) },
    Criterion { id: 10, suite: "fold", budget: Duration::from_secs(60) },
];

fn failures(r: &SuiteReport) -> String {
    r.checks
        .iter()
        .filter(|c| !c.holds)
        .map(|c| format!("{} ({}/{}): {}", c.name, c.passed, c.total, c.detail.as_deref().unwrap_or("")))
        .collect::<Vec<_>>()
        .join("; ")
}

// one criterion at a time, so runtimes are not inflated by sibling tests
static SERIAL: Mutex<()> = Mutex::new(());

fn run_criterion(id: u32) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = CRITERIA.iter().find(|c| c.id == id).expect("known criterion");
    let start = Instant::now();
    let report = run_suite(c.suite, committed_seed());
    let elapsed = start.elapsed();
    let (ok, note) = match &report {
        Ok(r) if r.holds && elapsed <= c.budget => (true, format!("{}/{} checks", r.passed, r.total)),
        Ok(r) if r.holds => (false, format!("over budget {:?}", c.budget)),
        Ok(r) => (false, failures(r)),
        Err(e) => (false, e.to_string()),
    };
    let line = format!(
        "criterion {:>2} [{}] {}: {} in {:.2}s",
        c.id,
        c.suite,
        if ok { "PASS" } else { "FAIL" },
        note,
        elapsed.as_secs_f64()
    );
    println!("{line}");
    assert!(ok, "{line}");
}

#[test]
fn criterion_01_group_law() {
    run_criterion(1);
}

#[test]
fn criterion_02_tree_model() {
    run_criterion(2);
}

#[test]
fn criterion_03_warped_metric() {
    run_criterion(3);
}

#[test]
fn criterion_04_flow_space() {
    run_criterion(4);
}

#[test]
fn criterion_05_periodic_orbits() {
    run_criterion(5);
}

#[test]
fn criterion_06_number_theory() {
    run_criterion(6);
}

#[test]
fn criterion_07_classification() {
    run_criterion(7);
}

#[test]
fn criterion_08_case1_contraction() {
    run_criterion(8);
}

#[test]
fn criterion_09_nerve_contraction() {
    run_criterion(9);
}

#[test]
fn criterion_10_folding() {
    run_criterion(10);
}
