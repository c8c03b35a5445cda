use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ergodic-lab");

const PENDULUM: &str =
    r#"{"family": "mechanical_power", "dim": 1, "params": {"q": 2, "potential": {"amplitude": 1.0}}}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn lab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env("SOURCE_DATE_EPOCH", "1700000000").env_remove("ERGODIC_LAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run_task(task: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![task, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lab(&args, &[])
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn checks(m: &Value) -> Vec<String> {
    m["checks"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn free_cell_solve_reports_the_trivial_check() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"model": {"family": "free", "dim": 1}, "grid": {"dim": 1, "sizes": [64]}, "params": {"eps": 0.1, "p": [0.0]}}"#,
    );
    let out = tmp.path().join("run");
    let o = run_task("solve-cell", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "pass");
    assert!(checks(&m).contains(&"CHECK trivial_c PASS 0e0 <=1e-10".to_string()));
    assert!(stdout(&o).contains("CHECK trivial_c PASS"));
}

#[test]
fn manifest_lists_exactly_the_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"model": {PENDULUM}, "grid": {{"dim": 1, "sizes": [128]}}, "params": {{"eps": 0.1, "p": [0.2]}}}}"#
        ),
    );
    let out = tmp.path().join("run");
    assert_eq!(run_task("mather", &cfg, &out, &[]).status.code(), Some(0));
    let listed: Vec<String> =
        manifest(&out)["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_string()).collect();
    let present: Vec<String> = dir_contents(&out).into_keys().collect();
    assert_eq!(listed, present);
    assert!(listed.contains(&"mather_theta.csv".to_string()));

    // A rerun into the same directory replaces the previous run.
    assert_eq!(run_task("solve-cell", &cfg, &out, &[]).status.code(), Some(0));
    let listed = manifest(&out)["files"].as_array().unwrap().len();
    assert_eq!(listed, dir_contents(&out).len());
    assert!(!out.join("mather.json").exists());

    // A file no run produced blocks the directory.
    std::fs::write(out.join("notes.txt"), "mine").unwrap();
    let o = run_task("solve-cell", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("notes.txt").exists());
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let unknown = write_config(tmp.path(), "u.json", r#"{"model": {"family": "free", "dim": 1}, "speed": 3}"#);
    let o = run_task("solve-cell", &unknown, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m["status"], "validation-error");
    assert!(m["diagnostics"][0].as_str().unwrap().contains("speed"));

    let zero_tol = write_config(tmp.path(), "z.json", r#"{"params": {"tolerances": {"residual": 0}}}"#);
    assert_eq!(run_task("solve-cell", &zero_tol, &out, &[]).status.code(), Some(2));

    let missing_eps = write_config(
        tmp.path(),
        "m.json",
        r#"{"model": {"family": "free", "dim": 1}, "grid": {"dim": 1, "sizes": [16]}, "params": {"p": [0.0]}}"#,
    );
    assert_eq!(run_task("solve-cell", &missing_eps, &out, &[]).status.code(), Some(2));

    let mismatch = write_config(tmp.path(), "t.json", r#"{"task": "rate"}"#);
    assert_eq!(run_task("mather", &mismatch, &out, &[]).status.code(), Some(2));

    assert_eq!(run_task("solve-everything", &mismatch, &out, &[]).status.code(), Some(2));
    assert_eq!(lab(&["accept"], &[]).status.code(), Some(2));
    let bad_env = lab(
        &["solve-cell", "--config", missing_eps.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[("ERGODIC_LAB_THREADS", "many")],
    );
    assert_eq!(bad_env.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three_and_keeps_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"model": {PENDULUM}, "grid": {{"dim": 1, "sizes": [128]}},
                "params": {{"eps": 0.05, "p": [0.9], "solver": {{"max_iter": 1}}}}}}"#
        ),
    );
    let out = tmp.path().join("run");
    let o = run_task("solve-cell", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "numerical-error");
    assert!(!m["diagnostics"].as_array().unwrap().is_empty());
}

#[test]
fn any_fail_line_forces_exit_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"model": {PENDULUM}, "grid": {{"dim": 1, "sizes": [64]}},
                "params": {{"eps": 0.2, "p": [0.0], "tolerances": {{"residual": 1e-300}}}}}}"#
        ),
    );
    let out = tmp.path().join("run");
    let o = run_task("solve-cell", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(manifest(&out)["status"], "fail");
    assert!(stdout(&o).contains("CHECK residual FAIL"));
}

#[test]
fn rate_task_writes_ratios_and_bounded_check() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"model": {PENDULUM}, "grid": {{"dim": 1, "sizes": [1024]}},
                "params": {{"eps_samples": [0.125, 0.0625, 0.03125, 0.015625, 0.0078125]}}}}"#
        ),
    );
    let out = tmp.path().join("run");
    assert_eq!(run_task("rate", &cfg, &out, &[]).status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("rate.csv")).unwrap();
    assert!(csv.starts_with("eps,c,ratio\n"));
    assert_eq!(csv.lines().count(), 6);
    assert!(checks(&manifest(&out)).iter().any(|c| c.starts_with("CHECK rate_bounded PASS")));
    assert!(std::fs::read_to_string(out.join("c_of_eps.csv")).unwrap().starts_with("eps,c\n"));
}

#[test]
fn inviscid_sweep_shows_the_flat_piece() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"model": {PENDULUM}, "grid": {{"dim": 1, "sizes": [64]}},
                "params": {{"eps": 0.0, "p_list": [[-1.2], [-0.6], [0.0], [0.6], [1.2], [1.6], [2.0]]}}}}"#
        ),
    );
    let out = tmp.path().join("run");
    assert_eq!(run_task("sweep-p", &cfg, &out, &[]).status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("hbar_of_p.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("p,hbar"));
    let flat_edge = 4.0 / std::f64::consts::PI;
    for line in lines {
        let (p, h) = line.split_once(',').unwrap();
        let (p, h): (f64, f64) = (p.parse().unwrap(), h.parse().unwrap());
        if p.abs() <= flat_edge {
            assert!(h.abs() <= 1e-6, "p = {p}: {h}");
        } else {
            assert!(h > 0.1, "p = {p}: {h}");
        }
    }
}

#[test]
fn one_sided_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(r#"{{"model": {PENDULUM}, "params": {{"p_list": [[0.5], [2.0]]}}}}"#),
    );
    let out = tmp.path().join("run");
    let o = run_task("one-sided", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(out.join("one_sided.csv")).unwrap();
    assert!(csv.starts_with("p,dminus,dplus\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn identical_configs_give_identical_directories_for_any_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"model": {PENDULUM}, "grid": {{"dim": 1, "sizes": [256]}},
                "params": {{"p": [0.3], "eps_list": [0.4, 0.2, 0.1, 0.05]}}, "seed": 11}}"#
        ),
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_task("sweep-eps", &cfg, &a, &["--threads", "1"]).status.code(), Some(0));
    assert_eq!(run_task("sweep-eps", &cfg, &b, &["--threads", "4"]).status.code(), Some(0));
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn accept_prints_one_line_per_criterion_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "accept.json", r#"{"task": "accept", "seed": 3}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = run_task("accept", &cfg, &a, &[]);
    let second = run_task("accept", &cfg, &b, &[]);
    let lines: Vec<String> = stdout(&first).lines().filter(|l| l.starts_with("criterion")).map(String::from).collect();
    assert_eq!(lines.len(), 14, "{}", stdout(&first));
    for (k, line) in lines.iter().enumerate() {
        assert!(line.starts_with(&format!("criterion {:2} ", k + 1)), "{line}");
    }
    // The exit code follows the verdicts, whatever they are.
    let all_pass = lines.iter().all(|l| l.contains(" PASS "));
    assert_eq!(first.status.code(), Some(if all_pass { 0 } else { 1 }));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(dir_contents(&a), dir_contents(&b));
}
