use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn certeq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_certeq")).args(args).output().expect("binary runs")
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("certeq-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn solve_scalar_example() {
    let sys = scratch("scalar.json", r#"{"A": [[0.5]], "B": [[1]], "Q": [[1]], "R": [[1]]}"#);
    let out = certeq(&["solve", "--system", sys.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let p = v["P"][0][0].as_f64().unwrap();
    // Positive root of P² - 0.25 P - 1 = 0.
    let exact = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
    assert!((p - exact).abs() < 1e-12, "{p} vs {exact}");
    assert!((p - 1.13278).abs() < 1e-5);
    for key in ["K", "L", "residual", "rho_L", "tau_L", "gamma"] {
        assert!(!v[key].is_null(), "missing {key}");
    }
}

#[test]
fn solve_then_verify_round_trips() {
    let sys = scratch("two.json", r#"{"A": [[1.1, 0.2], [0, 0.7]], "B": [[0], [1]], "sigma_w": 0.5}"#);
    let out = certeq(&["solve", "--system", sys.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let sol = scratch("two_sol.json", std::str::from_utf8(&out.stdout).unwrap());
    let out = certeq(&["verify", "--system", sys.to_str().unwrap(), "--solution", sol.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["ok"], Value::Bool(true));
    let wrong = scratch("wrong.json", r#"{"P": [[1, 0], [0, 1]]}"#);
    let out = certeq(&["verify", "--system", sys.to_str().unwrap(), "--solution", wrong.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lqg_files_report_the_filter() {
    let sys = scratch("lqg.json", r#"{"A": [[0.9, 0.1], [0, 0.8]], "B": [[0], [1]], "C": [[1, 0]], "sigma_v": 0.3}"#);
    let out = certeq(&["solve", "--system", sys.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["kalman"]["J_star"].as_f64().unwrap() > 0.0);
    assert!(v["kalman"]["rho_N"].as_f64().unwrap() < 1.0);
}

#[test]
fn malformed_input_exits_one_and_names_the_key() {
    let sys = scratch("bad.json", "{\"A\": [[0.5]],\n \"B\": [[1]], \"Q\": [[1, 2]] }");
    let out = certeq(&["solve", "--system", sys.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "shape errors come from validation");
    let sys = scratch("bad2.json", "{\"A\": [[0.5]],\n \"B\": [1]}");
    let out = certeq(&["solve", "--system", sys.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let msg = json(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("`B[0]`") && msg.contains("line 2"), "{msg}");
    let sys = scratch("bad3.json", r#"{"A": [[0.5]], "B": [[1]], "Qq": [[1]]}"#);
    let out = certeq(&["solve", "--system", sys.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json(&out)["error"]["message"].as_str().unwrap().contains("Qq"));
    let out = certeq(&["solve", "--system", "/nonexistent/x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["kind"], "io");
}

#[test]
fn unstabilizable_exits_two() {
    let sys = scratch("unstab.json", r#"{"A": [[2]], "B": [[0]]}"#);
    let out = certeq(&["solve", "--system", sys.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "stabilizability");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(certeq(&["nonsense"]).status.code(), Some(1));
    assert_eq!(certeq(&["bounds"]).status.code(), Some(1));
    assert_eq!(certeq(&["--help"]).status.code(), Some(0));
}

#[test]
fn bounds_table_has_every_report() {
    let sys = scratch("bounds.json", r#"{"A": [[0.5]], "B": [[1]]}"#);
    let out = certeq(&["bounds", "--system", sys.to_str().unwrap(), "--eps", "1e-4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("name,value,applicable,margin"));
    for name in ["dare_fixed_point", "dare_direct", "gain_perturb", "stability_certificate", "gap_meta", "gap_fast_rate"] {
        assert!(rows.iter().any(|r| r.starts_with(name)), "missing {name}");
    }
    let width = rows[0].split(',').count();
    assert!(rows.iter().all(|r| r.split(',').count() == width));
    assert!(text.contains("# eps=1.0000000000000000e-4"));
}

#[test]
fn out_flag_writes_the_file() {
    let target = std::env::temp_dir().join(format!("certeq-cli-out-{}.csv", std::process::id()));
    let out = certeq(&["beta-sweep", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&target).unwrap();
    assert!(text.starts_with("# command=beta-sweep"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn sweeps_reject_the_wrong_kind_of_system() {
    let lqr = scratch("lqr_only.json", r#"{"A": [[0.5]], "B": [[1]]}"#);
    let out = certeq(&["lqg-sweep", "--system", lqr.to_str().unwrap(), "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = certeq(&["gap-sweep", "--system", lqr.to_str().unwrap(), "--seeds", "2", "--eps-grid", "1e-3,1e-2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
}
