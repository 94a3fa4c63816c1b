//! End-to-end runs of the `archsearch` binary.

use std::path::Path;
use std::process::{Command, Output};

fn archsearch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_archsearch"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn archsearch")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value following `key` in a whitespace-separated `key value` summary line.
fn field(text: &str, key: &str) -> f64 {
    let mut it = text.split_whitespace();
    while let Some(w) = it.next() {
        if w == key {
            return it.next().and_then(|v| v.parse().ok()).expect("numeric field");
        }
    }
    panic!("no `{key}` in {text:?}");
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["bogus"][..],
        &["search", "--config", "missing.toml"],
        &["search", "--set", "bogus.key=1"],
        &["search", "--set", "train.epochs"],
    ] {
        let o = archsearch(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(archsearch(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn lut_query_rejects_malformed_genotypes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(archsearch(dir.path(), &["lut", "build", "--out", "lut.csv"]).status.success());
    let zeros = vec!["0"; 29].join(" ");
    let o = archsearch(dir.path(), &["lut", "query", "--table", "lut.csv", "--genotype", &zeros]);
    assert_eq!(o.status.code(), Some(2));
    let o = archsearch(dir.path(), &["lut", "query", "--table", "lut.csv", "--genotype", "1 2 3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn measured_latencies_rank_like_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(archsearch(d, &["lut", "build", "--out", "lut.csv"]).status.success());
    let o = archsearch(d, &["lut", "measure", "--table", "lut.csv", "--count", "200", "--out", "m.csv"]);
    assert!(o.status.success());
    let o = archsearch(d, &["lut", "validate", "--table", "lut.csv", "--measurements", "m.csv"]);
    assert!(o.status.success());
    assert!(field(&stdout(&o), "kendall_tau") > 0.85);
}

#[test]
fn pareto_of_full_enumeration_reproduces_oracle_front() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = archsearch(d, &["oracle", "--out", "front.csv", "--all", "all.csv"]);
    assert!(o.status.success());
    let oracle = stdout(&o);
    assert_eq!(field(&oracle, "evaluated"), 131072.0);

    let o = archsearch(d, &["pareto", "--archive", "all.csv", "--count", "3", "--out", "report.csv"]);
    assert!(o.status.success());
    let report = stdout(&o);
    assert_eq!(field(&report, "front"), field(&oracle, "front"));
    assert_eq!(field(&report, "hypervolume"), field(&oracle, "hypervolume"));

    let rows = std::fs::read_to_string(d.join("report.csv")).unwrap();
    let selected = rows.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert_eq!(selected, 3);
}
