use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_structsample"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn zipf_fixture() -> TempDir {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["gen-data", "--kind", "zipf", "-n", "3000", "--side", "128", "--seed", "1", "--out", "d.csv"]);
    ok(p, &["gen-queries", "--data", "d.csv", "--battery", "8", "--seed", "2", "--out", "q.txt"]);
    dir
}

#[test]
fn build_is_deterministic_per_seed() {
    let dir = zipf_fixture();
    let p = dir.path();
    for m in ["aware", "obliv", "poisson"] {
        ok(p, &["build", "--data", "d.csv", "-s", "60", "--method", m, "--seed", "9", "--out", "a.sum"]);
        ok(p, &["build", "--data", "d.csv", "-s", "60", "--method", m, "--seed", "9", "--out", "b.sum"]);
        assert_eq!(std::fs::read(p.join("a.sum")).unwrap(), std::fs::read(p.join("b.sum")).unwrap(), "{m}");
    }
    ok(p, &["build", "--data", "d.csv", "-s", "60", "--seed", "10", "--out", "c.sum"]);
    assert_ne!(std::fs::read(p.join("a.sum")).unwrap(), std::fs::read(p.join("c.sum")).unwrap());
}

#[test]
fn summary_has_requested_size() {
    let dir = zipf_fixture();
    let p = dir.path();
    for extra in [
        &[][..],
        &["--keep-duplicates"][..],
        &["--in-memory"][..],
        &["--structure", "order", "--in-memory"][..],
    ] {
        let mut args = vec!["build", "--data", "d.csv", "-s", "75", "--out", "s.sum"];
        args.extend_from_slice(extra);
        ok(p, &args);
        let text = std::fs::read_to_string(p.join("s.sum")).unwrap();
        assert!(text.starts_with("#structsample-summary v1"));
        assert!(text.lines().any(|l| l == "s=75"), "{extra:?}");
        assert_eq!(text.lines().filter(|l| !l.starts_with('#') && !l.contains('=')).count(), 75);
    }
}

#[test]
fn streamed_build_matches_in_memory_two_pass() {
    let dir = zipf_fixture();
    let p = dir.path();
    ok(p, &["build", "--data", "d.csv", "-s", "40", "--seed", "4", "--out", "a.sum"]);
    ok(p, &["build", "--data", "d.csv", "-s", "40", "--seed", "4", "--keep-duplicates", "--out", "b.sum"]);
    assert_eq!(std::fs::read(p.join("a.sum")).unwrap(), std::fs::read(p.join("b.sum")).unwrap());
}

#[test]
fn query_estimates_one_line_per_query() {
    let dir = zipf_fixture();
    let p = dir.path();
    ok(p, &["build", "--data", "d.csv", "-s", "60", "--out", "s.sum"]);
    let out = ok(p, &["query", "--summary", "s.sum", "--queries", "q.txt"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "query,ranges,estimate");
    assert_eq!(lines.len(), 9);
    for l in &lines[1..] {
        let est: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(est >= 0.0 && est.is_finite());
    }
}

#[test]
fn full_summary_answers_exactly() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    std::fs::write(p.join("d.csv"), "1,1,2\n2,5,3\n3,3,4\n7,7,1\n").unwrap();
    std::fs::write(p.join("q.txt"), "0-3,0-9\n2-7,4-7;0-1,0-1\n").unwrap();
    ok(p, &["build", "--data", "d.csv", "-s", "4", "--out", "s.sum"]);
    let out = ok(p, &["query", "--summary", "s.sum", "--queries", "q.txt"]);
    let est: Vec<f64> = out.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(est, vec![9.0, 6.0]);
}

#[test]
fn eval_writes_all_outputs() {
    let dir = zipf_fixture();
    let p = dir.path();
    ok(
        p,
        &["eval", "--data", "d.csv", "-s", "50", "--queries", "q.txt", "--out-dir", "out", "--threads", "2"],
    );
    for f in ["aware.summary", "aware.metrics.csv", "aware.aggregate.txt", "aware.timing.txt"] {
        assert!(p.join("out").join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(p.join("out/aware.metrics.csv")).unwrap();
    assert!(metrics.starts_with("query,ranges,true_weight,estimate"));
    assert_eq!(metrics.lines().count(), 9);
}

#[test]
fn hierarchy_round_trip() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["gen-data", "--kind", "hierarchy", "-n", "150", "--hierarchy-out", "h.csv", "--seed", "3", "--out", "d.csv"]);
    ok(p, &["gen-queries", "--data", "d.csv", "--axes", "hierarchy:h.csv", "--battery", "4", "--out", "q.txt"]);
    for strategy in ["linearize", "ancestor"] {
        ok(p, &["build", "--data", "d.csv", "--axes", "hierarchy:h.csv", "-s", "20", "--strategy", strategy, "--out", "s.sum"]);
        let out = ok(p, &["query", "--summary", "s.sum", "--queries", "q.txt"]);
        assert_eq!(out.lines().count(), 5);
    }
}

#[test]
fn ip_axis_accepts_dotted_addresses() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    std::fs::write(p.join("d.csv"), "10.0.0.1,3\n10.0.0.2,4\n10.1.0.9,5\n192.168.1.1,6\n").unwrap();
    ok(p, &["build", "--data", "d.csv", "--axes", "ip", "-s", "4", "--in-memory", "--out", "s.sum"]);
    let text = std::fs::read_to_string(p.join("s.sum")).unwrap();
    assert!(text.lines().any(|l| l == "axes=ip"));
}

#[test]
fn usage_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(run(p, &["build", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(p, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(p, &["build", "--data", "d.csv", "--axes", "cubic", "-s", "3", "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(p, &["--help"]).status.code(), Some(0));
    assert_eq!(run(p, &["--version"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(run(p, &["build", "--data", "missing.csv", "-s", "3", "--out", "x"]).status.code(), Some(2));
    std::fs::write(p.join("bad.csv"), "1,2,abc\n").unwrap();
    let out = run(p, &["build", "--data", "bad.csv", "-s", "1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    std::fs::write(p.join("neg.csv"), "1,2,-4\n").unwrap();
    assert_eq!(run(p, &["build", "--data", "neg.csv", "-s", "1", "--out", "x"]).status.code(), Some(2));
    std::fs::write(p.join("s.sum"), "#structsample-summary v9\n").unwrap();
    std::fs::write(p.join("q.txt"), "0-1,0-1\n").unwrap();
    assert_eq!(run(p, &["query", "--summary", "s.sum", "--queries", "q.txt"]).status.code(), Some(2));
}
