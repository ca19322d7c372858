use std::path::Path;
use std::process::{Command, Output};

use bagsched_cli::report::recheck;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bagsched")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{"name":"small","jobs":[3,2,2,1],"m":2,"q":["1/2","1/2"]}"#;

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

#[test]
fn solve_writes_a_checkable_report() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "small.json", SMALL);
    let out = run(&["solve", "--instance", &inst, "--objective", "makespan", "--epsilon", "1/5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    // Oracle: k = 1 costs 8, k = 2 splits 4 | 4, expectation 6.
    assert_eq!(r["cost"], "6");
    assert_eq!(r["objective"], "makespan");
    assert_eq!(r["epsilon"], "1/5");
    assert!(r["elapsed_ms"].is_u64());
    assert_eq!(r["solution"]["bag_of"].as_array().unwrap().len(), 4);
    recheck(&r).unwrap();

    for objective in
        [&["--objective", "santa"][..], &["--objective", "lp", "--p", "2"], &["--objective", "lp", "--p", "3/2"]]
    {
        let mut args = vec!["solve", "--instance", &inst];
        args.extend(objective);
        let out = run(&args);
        assert_eq!(code(&out), 0);
        recheck(&report(&out)).unwrap();
    }
}

#[test]
fn no_timing_reports_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "small.json", SMALL);
    let args = ["solve", "--instance", &inst, "--objective", "lp", "--p", "2", "--no-timing"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(report(&a).get("elapsed_ms").is_none());
    assert!(report(&a)["power_keys"].is_array());
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "small.json", SMALL);
    let float = write(dir.path(), "float.json", r#"{"jobs":[1.5],"m":2,"q":["1/2","1/2"]}"#);
    for args in [
        vec!["solve", "--instance", &inst, "--objective", "lp"],
        vec!["solve", "--instance", &inst, "--objective", "makespan", "--epsilon", "1/4"],
        vec!["solve", "--instance", &inst, "--objective", "makespan", "--epsilon", "0.2"],
        vec!["solve", "--instance", &inst, "--objective", "median"],
        vec!["solve", "--instance", &float, "--objective", "makespan"],
        vec!["solve", "--instance", "/nonexistent.json", "--objective", "makespan"],
        vec!["solve", "--objective", "makespan"],
        vec!["gen", "--n", "0", "--m", "2", "--seed", "1"],
        vec!["gen", "--n", "4", "--m", "2", "--seed", "1", "--qdist", "point:3"],
        vec!["frobnicate"],
    ] {
        assert_eq!(code(&run(&args)), 1, "{args:?}");
    }
}

#[test]
fn starved_search_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "i.json", r#"{"jobs":[5,4,3,3,2,2,1],"m":3,"q":["1/3","1/3","1/3"]}"#);
    let out = run(&["solve", "--instance", &inst, "--objective", "makespan", "--budget-nodes", "1"]);
    assert_eq!(code(&out), 2);
    let r = report(&out);
    assert_eq!(r["method"], "baseline");
    assert_eq!(r["scheme_feasible"], false);
    recheck(&r).unwrap();
}

#[test]
fn exact_solutions() {
    let dir = TempDir::new().unwrap();
    let small = write(dir.path(), "small.json", SMALL);
    let out = run(&["exact", "--instance", &small, "--objective", "makespan"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["cost"], "6");
    assert_eq!(r["method"], "exact");
    recheck(&r).unwrap();

    let pair = write(dir.path(), "pair.json", r#"{"jobs":[1,1],"m":2,"q":[0,1]}"#);
    assert_eq!(report(&run(&["exact", "--instance", &pair, "--objective", "makespan"]))["cost"], "1");

    let big = write(dir.path(), "big.json", r#"{"jobs":[1,1,1,1,1,1,1,1,1,1,1],"m":2,"q":[0,1]}"#);
    assert_eq!(code(&run(&["exact", "--instance", &big, "--objective", "makespan"])), 3);
}

#[test]
fn generation_is_seeded() {
    let a = run(&["gen", "--n", "4", "--m", "2", "--seed", "9"]);
    let b = run(&["gen", "--n", "4", "--m", "2", "--seed", "9"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["jobs"].as_array().unwrap().len(), 4);
    assert_eq!(v["m"], 2);

    let p = run(&["gen", "--n", "5", "--m", "3", "--seed", "1", "--dist", "twotier", "--qdist", "point:2"]);
    let v: Value = serde_json::from_slice(&p.stdout).unwrap();
    assert_eq!(v["q"], serde_json::json!([0, 1, 0]));
}

#[test]
fn bench_rows() {
    let dir = TempDir::new().unwrap();
    let out = run(&["bench", "--dir", &dir.path().to_string_lossy()]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "instance,objective,epsilon,scheme_cost,baseline_cost,oracle_cost,ratio,time_ms,diagnostic\n"
    );

    write(dir.path(), "a.json", SMALL);
    write(dir.path(), "b.json", r#"{"jobs":[1,1,1,1,1,1,1,1,1,1,1],"m":2,"q":[0,1]}"#);
    let out = run(&["bench", "--dir", &dir.path().to_string_lossy(), "--objectives", "makespan,lp"]);
    assert_eq!(code(&out), 0);
    let mut rows = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (&r[0], &r[1])).collect();
    assert_eq!(keys, [("a.json", "makespan"), ("a.json", "lp:2"), ("b.json", "makespan"), ("b.json", "lp:2")]);
    let ratio: f64 = rows[0][6].parse().unwrap();
    assert!(ratio >= 1.0);
    assert_eq!(&rows[0][5], "6");
    assert_eq!(&rows[2][6], "");
    assert!(rows[2][8].contains("oracle"));
}
