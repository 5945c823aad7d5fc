use std::path::PathBuf;
use std::process::{Command, Output};

fn tsdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsdyn")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn scratch_file(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tsdyn-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

/// The summary block after the blank line of `fundamental` output.
fn summary(out: &str) -> Vec<Vec<f64>> {
    let (_, tail) = out.split_once("\n\n").expect("summary block");
    rows(tail)
}

#[test]
fn simulate_example_2_1_reaches_the_limit() {
    let out = tsdyn(&["simulate", "example_2_1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("t,x\n"));
    let last = rows(&text).pop().unwrap();
    assert_eq!(last[0], 60.0);
    let e = std::f64::consts::E;
    assert!((last[1] - e / (e - 1.0)).abs() < 1e-9, "{}", last[1]);
    // 17 significant digits
    let field = text.lines().last().unwrap().split(',').nth(1).unwrap();
    assert_eq!(field.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn zero_coefficient_keeps_the_initial_value() {
    let cfg = scratch_file("zero.cfg", "[scale]\nline = interval -1 5\n[equation]\nA = 0\nalpha = t - 1\n[history]\nx0 = 0.75\n[run]\nh_max = 0.1\n");
    let out = tsdyn(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = rows(&stdout(&out));
    assert!(rows.len() > 10);
    assert!(rows.iter().all(|r| r[1] == 0.75));
}

#[test]
fn malformed_expression_is_a_config_error() {
    let cfg = scratch_file("bad.cfg", "[scale]\nline = interval -1 5\n[equation]\nA = 0.5 +* t\nalpha = t - 1\n");
    let out = tsdyn(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("ERROR config:"), "{err}");
    assert!(err.contains("column"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn exit_codes() {
    let out = tsdyn(&["simulate", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("ERROR unknown-example:"));

    let out = tsdyn(&["verify-example", "bogus"]);
    assert_eq!(out.status.code(), Some(2));

    let out = tsdyn(&["simulate", "r_const", "--step", "-1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = tsdyn(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("ERROR usage:"));

    // A grows like 4^t; the explicit step becomes unstable well before t = 40
    let out = tsdyn(&["simulate", "example_5_1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("ERROR numeric:"));
}

#[test]
fn fundamental_diagonal_is_one() {
    let out = tsdyn(&["fundamental", "example_2_1", "--horizon", "6", "--step", "0.01", "--s-samples", "12"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let long = rows(&text);
    let diag: Vec<_> = long.iter().filter(|r| r[0] == r[1]).collect();
    assert_eq!(diag.len(), summary(&text).len());
    assert!(diag.iter().all(|r| r[2] == 1.0));
}

#[test]
fn weak_condition_bounds_the_field() {
    for args in [["fundamental", "r_const", "--horizon", "20"], ["fundamental", "example_5_3", "--horizon", "60"]] {
        let out = tsdyn(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        for r in summary(&stdout(&out)) {
            assert!(r[1] <= 1.0 + 1e-12, "{args:?}: s = {}, max |X| = {}", r[0], r[1]);
        }
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let run = |n: &str| stdout(&tsdyn(&["fundamental", "r_const", "--horizon", "15", "--s-samples", "16", "--parallel", n]));
    let one = run("1");
    assert!(!one.is_empty());
    assert_eq!(one, run("4"));
}

#[test]
fn out_flag_writes_both_files() {
    let path = scratch_file("field.csv", "");
    let out = tsdyn(&["fundamental", "r_const", "--horizon", "5", "--s-samples", "3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("s,t,X\n"));
    let summary = std::fs::read_to_string(path.with_file_name("field.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn classify_verdicts() {
    let cases = [
        (vec!["classify", "example_5_1", "a=0.5"], "UniformlyExponentiallyStable"),
        (vec!["classify", "example_5_1", "a=1.0"], "UniformlyStable"),
        (vec!["classify", "example_5_2", "a=0.5"], "GloballyAsymptoticallyStable"),
    ];
    for (args, want) in cases {
        let out = tsdyn(&args);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
        let text = stdout(&out);
        let verdict = text.lines().find_map(|l| l.strip_prefix("verdict = ")).unwrap();
        assert_eq!(verdict, want, "{args:?}");
    }
}

#[test]
fn verify_example_reports_each_check() {
    let out = tsdyn(&["verify-example", "eigen_sharpness"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().count() >= 3);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
    for a in ["0.99", "1", "1.05"] {
        assert!(text.contains(&format!("a{a}")), "{text}");
    }
}

#[test]
fn list_examples_names_every_preset() {
    let text = stdout(&tsdyn(&["list-examples"]));
    for name in ["example_2_1", "example_5_1", "example_5_2", "example_5_3", "r_const", "pantograph", "eigen_sharpness"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}
