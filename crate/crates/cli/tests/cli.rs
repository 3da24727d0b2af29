use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sna(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sna")).args(args).output().expect("binary runs")
}

fn sna_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sna"))
        .args(args)
        .env("SNA_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn manifest(p: &Path) -> Value {
    let mut s = p.as_os_str().to_owned();
    s.push(".manifest.json");
    read_json(Path::new(&s))
}

#[test]
fn check_at_desk_kappa_reports_fail_with_exit_zero() {
    let o = sna(&["check", "--kappa", "3", "--c", "0.2", "--d", "1.1", "--D", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["overall"], Value::Bool(false));
    let failing: Vec<&str> = report["entries"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["pass"] == Value::Bool(false))
        .map(|e| e["id"].as_str().unwrap())
        .collect();
    assert!(failing.contains(&"kappa>=16") && failing.contains(&"(10)"));
    // manifest on stderr when writing to stdout
    let m: Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert_eq!(m["command"], "check");
    assert_eq!(m["config"]["kappa"], 3.0);
}

#[test]
fn graph_writes_six_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2.csv");
    let o = sna(&["graph", "--kappa", "3", "--rho", "golden", "--n", "6", "--grid", "4096", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "theta_1,phi,n");
    assert_eq!(lines.len(), 1 + 6 * 4096);
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    let expect = 3f64.tanh() * (std::f64::consts::PI * (1.0 - golden)).sin();
    assert!((first[1] - expect).abs() < 1e-14);
    for n in 1..=6 {
        let count = lines[1..].iter().filter(|l| l.ends_with(&format!(",{n}"))).count();
        assert_eq!(count, 4096);
    }
    assert_eq!(manifest(&out)["proxy"]["depths"], serde_json::json!([1, 2, 3, 4, 5, 6]));
}

#[test]
fn identical_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let args = |p: &Path| {
        vec![
            "dims".to_string(),
            "--method".into(),
            "info".into(),
            "--samples".into(),
            "20000".into(),
            "--anchors".into(),
            "100".into(),
            "--ladder".into(),
            "0.125:0.001953125:0.5".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            p.to_str().unwrap().into(),
        ]
    };
    let aa = args(&a);
    let bb = args(&b);
    let oa = sna_env(&aa.iter().map(String::as_str).collect::<Vec<_>>(), "1");
    let ob = sna_env(&bb.iter().map(String::as_str).collect::<Vec<_>>(), "3");
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(ob.status.code(), Some(0), "{}", stderr(&ob));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["proxy"], mb["proxy"]);
    assert!(ma["proxy"]["proxy_depth_n"].as_u64().unwrap() > 0);
    let est = read_json(&a);
    assert_eq!(est["method"], "information");
    for key in ["ladder", "stats", "slope", "stderr", "r2", "window", "seed", "proxy_depth_n", "proxy_tolerance"] {
        assert!(est.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "kappa = 3.0\nn = 3\ngrid = 64\n").unwrap();
    let out = dir.path().join("g.csv");
    let o = sna(&["graph", "--config", cfg.to_str().unwrap(), "--kappa", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["config"]["kappa"], 4.0);
    assert_eq!(m["config"]["n"], 3);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 3 * 64);
}

#[test]
fn empty_config_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = dir.path().join("g.csv");
    let o = sna(&["graph", "--config", cfg.to_str().unwrap(), "--grid", "16", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["config"]["kappa"], 3.0);
    assert_eq!(m["config"]["n"], 6);
    assert_eq!(m["seed"], 0);
}

#[test]
fn malformed_config_names_key_and_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\nkappa = \"abc\"\n").unwrap();
    let o = sna(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("kappa") && err.contains(":2:"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn argument_errors_exit_one_with_one_line() {
    for args in [
        vec!["check", "--bogus"],
        vec!["graph", "--n"],
        vec!["dims", "--method", "fractal"],
        vec!["check", "--method", "box"],
        vec!["verify"],
        vec!["frobnicate"],
    ] {
        let o = sna(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert_eq!(stderr(&o).trim().lines().count(), 1, "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn undersampled_ladder_is_a_numeric_failure() {
    let o = sna(&["dims", "--method", "box", "--samples", "1000", "--ladder", "0.125:0.0001:0.5", "--depth", "10"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("undersampled"));
}

#[test]
fn zero_line_mode_matches_log_kappa_over_two() {
    let o = sna(&["lyapunov", "--mode", "zero-line", "--kappa", "3", "--grid", "100000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 1.5f64.ln()).abs() < 1e-3);
    assert_eq!(v["excluded"], 1);
}

#[test]
fn graph_lyapunov_is_negative() {
    let o = sna(&["lyapunov", "--n", "300", "--grid", "20000", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "graph");
    assert!(row[3].parse::<f64>().unwrap() < 0.0);
}

#[test]
fn partition_census_csv_schema() {
    let o = sna(&["partition", "--samples", "2000", "--horizon", "80"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "j,tau_1,r_j,leb_estimate,count");
    assert!(text.lines().count() > 1);
}

#[test]
fn partition_classifies_one_point() {
    let o = sna(&["partition", "--theta", "0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["class"]["kind"].is_string());
}

#[test]
fn pinched_bounds_hold_at_sampled_points() {
    let o = sna(&["pinched", "--samples", "5", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!(r["eps"].as_f64().unwrap() > 0.0);
        assert_eq!(r["holds"], Value::Bool(true));
    }
}

#[test]
fn verify_lipschitz_bound() {
    let o = sna(&["verify", "--prop", "41i", "--pairs", "500", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("id,description,lhs,rhs,pass,margin,closed_form\n"));
    assert!(text.lines().nth(1).unwrap().starts_with("41i,"));
}

#[test]
fn cover_cost_desk_diverges_at_s_one() {
    let o = sna(&["dims", "--method", "cover", "--s", "1", "--j-max", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["convergent"], Value::Bool(false));
    assert_eq!(v["log_summands"].as_array().unwrap().len(), 21);
}

#[test]
fn decimal_rotation_warns() {
    let o = sna(&["graph", "--rho", "0.1", "--n", "1", "--grid", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
}
