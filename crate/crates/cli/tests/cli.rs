//! Exit codes and outputs of the `ssmt` binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn ssmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssmt")).args(args).env_remove("SSMT_SEED").output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ssmt-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn alpha_c_prints_the_critical_exponent() {
    let o = ssmt(&["alpha-c", "--measure", "gamma-binary:1.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0.500000"), "{}", stdout(&o));
}

#[test]
fn alpha_c_curve_writes_csv() {
    let path = scratch("curve").join("curve.csv");
    let o = ssmt(&["alpha-c", "--curve", "1.2:2.4:4", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("gamma,alpha_c,sup_ratio,argmax,boundary"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn flow_check_exit_status_follows_the_check() {
    let pass = ssmt(&["flow-check", "--family", "brownian", "--measure", "brownian-mass-ll", "--alpha", "0.5", "--samples", "50"]);
    assert_eq!(pass.status.code(), Some(0), "{}", String::from_utf8_lossy(&pass.stderr));
    let fail = ssmt(&["flow-check", "--family", "brownian", "--measure", "brownian-mass-ll", "--alpha", "0.6", "--samples", "50"]);
    assert_eq!(fail.status.code(), Some(1));
}

#[test]
fn configuration_errors_exit_with_two() {
    assert_eq!(ssmt(&["tree", "--quad", "no-such-measure"]).status.code(), Some(2));
    assert_eq!(ssmt(&["tree", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(ssmt(&["nested", "--xs", "1.0,0.5"]).status.code(), Some(2));
    assert_eq!(ssmt(&["--config", "/nonexistent/ssmt.conf"]).status.code(), Some(2));
}

#[test]
fn simulate_audit_passes_and_writes_paths() {
    let path = scratch("simulate").join("paths.csv");
    let o = ssmt(&["simulate", "--audit", "--seed", "3", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&path).unwrap().starts_with("x,t,value"));
}

#[test]
fn saved_config_reproduces_the_run() {
    let dir = scratch("config");
    let conf = dir.join("run.conf");
    let (a, b) = (dir.join("a.txt"), dir.join("b.txt"));
    let first = ssmt(&[
        "tree", "--x", "0.8", "--cutoff", "0.05", "--seed", "17", "--out", a.to_str().unwrap(),
        "--save-config", conf.to_str().unwrap(),
    ]);
    assert_eq!(first.status.code(), Some(0));
    let saved = fs::read_to_string(&conf).unwrap();
    assert!(saved.contains("command = tree") && saved.contains("seed = 17"), "{saved}");
    let second = ssmt(&["--config", conf.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0), "{}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
}

#[test]
fn grow_writes_weights() {
    let path = scratch("grow").join("weights.csv");
    let o = ssmt(&["grow", "--cutoff", "0.02", "--weights", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&path).unwrap().starts_with("label,weight"));
    assert_eq!(ssmt(&["grow", "--from", "1.0", "--to", "0.5"]).status.code(), Some(2));
}

#[test]
fn divfield_certificate_holds_on_a_small_grid() {
    let o = ssmt(&["divfield", "--n", "60"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("pass"));
}
