use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use ule_lab::specops::{eigensystem, match_eigenvalues, Form, OperatorWindow};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ule-lab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ule-lab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Data rows of a CSV written by the tool, skipping the provenance line.
fn csv_rows(path: &PathBuf) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# ule-lab "));
    lines.skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn hull_examples() {
    let out = run(&["hull", "condition-a", "--chain", "2,8,512"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["holds"], true);
    assert_eq!(v["m_min"], 3);

    let out = run(&["hull", "isomorphic", "--a", "2,4,8", "--b", "4,16,64", "--pattern", "powers"]);
    assert_eq!(stdout_json(&out)["isomorphic"], true);

    let out = run(&["hull", "maximalize", "--chain", "6,36"]);
    assert_eq!(stdout_json(&out)["chain"], serde_json::json!([2, 6, 12, 36]));
}

#[test]
fn exit_codes_and_error_json() {
    let out = run(&["hull", "condition-a", "--chain", "2,5"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_chain");
    assert_eq!(err["exit_code"], 2);

    let out = run(&["hull", "isomorphic", "--a", "2,4,8", "--b", "4,16"]);
    assert_eq!(out.status.code(), Some(3));

    let dir = scratch("badcfg");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, "{\"eps\": [0.1], \"unknown\": true}").unwrap();
    let out = run(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");

    let out = run(&["dress", "--eps", "0.2", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.join("dress.json").exists());
}

#[test]
fn zero_coupling_spectrum_is_sorted_potential() {
    let dir = scratch("eps0");
    let d = dir.to_str().unwrap();
    assert!(run(&["potential", "--N", "64", "--out", d, "--exact"]).status.success());
    assert!(run(&["spectrum", "--eps", "0", "--N", "64", "--out", d]).status.success());
    let mut pot: Vec<f64> = csv_rows(&dir.join("potential.csv")).iter().map(|r| r[3].parse().unwrap()).collect();
    pot.sort_by(f64::total_cmp);
    let spec: Vec<f64> = csv_rows(&dir.join("spectrum.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(pot, spec);
    let first = &csv_rows(&dir.join("potential.csv"))[0];
    assert!(!first[1].is_empty() && !first[2].is_empty());
}

#[test]
fn dress_trace_is_reverified() {
    let dir = scratch("dress");
    let d = dir.to_str().unwrap();
    let out = run(&["dress", "--eps", "0.05", "--N", "128", "--tol", "1e-8", "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("dress.json")).unwrap()).unwrap();
    assert_eq!(trace["converged"], true);
    assert!(trace["final_mismatch"].as_f64().unwrap() <= 1e-8);
    assert!(trace["meta"]["config_hash"].is_string());

    // independent spectrum + match pass against the written potential
    assert!(run(&["potential", "--N", "128", "--out", d]).status.success());
    let targets: Vec<f64> =
        csv_rows(&dir.join("potential.csv")).iter().map(|r| r[3].parse::<f64>().unwrap() / 0.05).collect();
    let dressed: Vec<f64> =
        trace["dressed"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap() / 0.05).collect();
    let w = OperatorWindow { offset: 0, diagonal: dressed, hopping: 1.0, form: Form::Standard, epsilon: 0.05 };
    let m = match_eigenvalues(&eigensystem(&w).unwrap(), &targets, 16).unwrap();
    assert!(m.max_interior_mismatch <= 1e-8 * (1.0 + 1e-6));
    assert_eq!(m.unmatched_interior, 0);
}

#[test]
fn sweep_rates_and_determinism() {
    let a = scratch("sweep-a");
    let b = scratch("sweep-b");
    let out = bin().env("ULE_LAB_THREADS", "1").args(["sweep", "--t", "0,3", "--out", a.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let out = bin().env("ULE_LAB_THREADS", "4").args(["sweep", "--t", "0,3", "--out", b.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let sa = fs::read(a.join("sweep.csv")).unwrap();
    assert_eq!(sa, fs::read(b.join("sweep.csv")).unwrap());

    let rows = csv_rows(&a.join("sweep.csv"));
    assert_eq!(rows.len(), 6);
    let r_at = |eps: &str| -> f64 { rows.iter().find(|r| r[0] == eps && r[2] == "0").unwrap()[4].parse().unwrap() };
    assert!(r_at("0.05") > r_at("0.1") && r_at("0.1") > r_at("0.2"));
}

#[test]
fn reports_carry_provenance() {
    let dir = scratch("reports");
    let d = dir.to_str().unwrap();
    for cmd in ["ule", "dynloc"] {
        let out = run(&[cmd, "--eps", "0.05", "--N", "96", "--out", d]);
        assert!(out.status.success(), "{cmd}");
    }
    let out = run(&["spectrum", "--eps", "0.05", "--N", "96", "--out", d, "--vectors"]);
    assert!(out.status.success());
    let ule: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("ule.json")).unwrap()).unwrap();
    for key in ["uniform_c", "uniform_r", "floor", "per_vector", "meta"] {
        assert!(ule.get(key).is_some(), "{key}");
    }
    assert!(ule["certified_ratio"].as_f64().unwrap() <= 1.0 + 1e-9);
    let dl: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("dynloc.json")).unwrap()).unwrap();
    assert!(dl["max_dominance_violation"].as_f64().unwrap() <= 1e-12);
    let kernel = fs::read_to_string(dir.join("kernel.csv")).unwrap();
    assert_eq!(kernel.lines().nth(1), Some("n,m,value"));
    let vectors: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("vectors.json")).unwrap()).unwrap();
    assert_eq!(vectors["vectors"].as_array().unwrap().len(), 96);
    let hash = ule["meta"]["config_hash"].as_str().unwrap();
    assert!(kernel.starts_with(&format!("# ule-lab {} config {hash}", env!("CARGO_PKG_VERSION"))));

    let poeschel = run(&["ule", "--generator", "POESCHEL", "--eps", "0.05", "--N", "64", "--out", d]);
    assert!(poeschel.status.success());
}
