use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use collapsar::io::{modes_from_json, read_joint_state};
use serde_json::Value;

const DEPHASING: &str = r#"{
    "name": "small-dephasing",
    "system": { "collapse": ["sigma_z"], "gamma": 0.5, "initial_state": "plus" },
    "kernel": { "type": "cosine_sum", "lines": [{ "weight": 1.0, "omega": 2.0 }] },
    "discretization": { "dt": 0.01, "t_final": 0.5 },
    "run": { "mode": "nonmarkov", "n_traj": 40, "seed": 4, "export": 2 }
}"#;

const REFERENCE: &str = r#"{
    "system": { "collapse": ["sigma_z"], "gamma": 1.0, "initial_state": [0.6, 0.8] },
    "kernel": { "type": "cosine_sum", "lines": [{ "weight": 0.25, "omega": 1.0 }, { "weight": 0.16, "omega": 2.3 }] },
    "discretization": { "dt": 0.002, "t_final": 0.5, "n_max": 8 },
    "run": { "mode": "compare", "n_traj": 4, "seed": 2, "projector_samples": 500 }
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_collapsar"));
    c.env_remove("COLLAPSAR_THREADS");
    c
}

fn write_scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn collapsar(args: &[&str], scenario: &Path, out: &Path) -> Output {
    bin().args(args).arg("--scenario").arg(scenario).arg("--out").arg(out).output().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn data_files(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn nonmarkov_run_writes_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", DEPHASING);
    let out = dir.path().join("out");
    let o = collapsar(&["run-nonmarkov", "--check"], &sc, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["command"], "nonmarkov");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["scenario"]["discretization"]["modes"], 64);
    assert_eq!(m["scenario"]["system"]["hamiltonian"], "zero");
    assert!(m["versions"]["collapsar-core"].is_string());
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    let checks = m["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 2);
    assert!(checks.iter().all(|c| c["passed"] == true && c["tag"].is_string()));
    let csv = fs::read_to_string(out.join("nonmarkov_traj_0001.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,<A_0>,norm_linear");
    assert_eq!(lines.count(), 51);
    for f in m["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).exists(), "{f}");
    }
}

#[test]
fn same_seed_gives_identical_files_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", DEPHASING);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(collapsar(&["run", "--threads", "1"], &sc, &a).status.success());
    assert!(collapsar(&["run", "--threads", "3"], &sc, &b).status.success());
    assert!(collapsar(&["run", "--seed", "5"], &sc, &c).status.success());
    let fa = data_files(&a);
    assert_eq!(fa.len(), 3);
    assert_eq!(fa, data_files(&b));
    assert_ne!(fa, data_files(&c));
    assert_eq!(manifest(&c)["seed"], 5);
}

#[test]
fn thread_count_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", DEPHASING);
    let out = dir.path().join("out");
    let o = bin()
        .env("COLLAPSAR_THREADS", "2")
        .args(["run-oracle", "--scenario"])
        .arg(&sc)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(manifest(&out)["threads"], 2);
}

#[test]
fn invalid_scenarios_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let sc = write_scenario(dir.path(), "g.json", &DEPHASING.replace("0.5, \"initial", "-1, \"initial"));
    let o = collapsar(&["run"], &sc, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.gamma"));
    let sc = write_scenario(dir.path(), "k.json", &DEPHASING.replace("\"seed\"", "\"sead\""));
    let o = collapsar(&["run"], &sc, &out);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sead") && err.contains("line 6"), "{err}");
    let o = collapsar(&["run"], &dir.path().join("missing.json"), &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", &DEPHASING.replace("0.5, \"initial", "1e300, \"initial"));
    let o = collapsar(&["run-nonmarkov"], &sc, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_check_exits_with_four_only_in_check_mode() {
    let dir = tempfile::tempdir().unwrap();
    // Two Fock levels cannot hold this bath displacement.
    let text = REFERENCE.replace("\"n_max\": 8", "\"n_max\": 2").replace("0.25", "4.0");
    let sc = write_scenario(dir.path(), "s.json", &text);
    let o = collapsar(&["run-bohm", "--check"], &sc, &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL top Fock level population"));
    let o = collapsar(&["run-bohm"], &sc, &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&dir.path().join("b"))["all_checks_passed"], false);
}

#[test]
fn compare_reports_equivalence_and_writes_joint_state() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", REFERENCE);
    let out = dir.path().join("out");
    let o = collapsar(&["compare", "--check"], &sc, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let m = manifest(&out);
    let eq = m["checks"].as_array().unwrap().iter().find(|c| c["tag"] == "equivalence/conditional-vs-collapse-fidelity").unwrap();
    assert!(eq["value"].as_f64().unwrap() >= 1.0 - 1e-3);
    let header = fs::read_to_string(out.join("bohm_traj_0000.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "t,xplus_0,xplus_1,xminus_0,xminus_1,<A_0>,fidelity_vs_collapse"
    );
    let (h, amps) = read_joint_state(&out.join("joint_state.bin")).unwrap();
    assert_eq!((h.dim_sys, h.oscillators, h.n_max), (2, 4, 8));
    assert_eq!(amps.len(), 2 * 8usize.pow(4));
    assert!((h.time - 0.5).abs() < 1e-12);
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    assert!((norm - 1.0).abs() < 1e-10);
    assert_eq!(fs::read_to_string(out.join("compare.csv")).unwrap().lines().count(), 5);
}

#[test]
fn factorize_kernel_writes_modes() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "system": { "collapse": ["sigma_z"], "gamma": 1 },
        "kernel": { "type": "exponential", "amplitude": 1.0, "tau_c": 1.0 },
        "discretization": { "dt": 0.05, "t_final": 5.0, "modes": 128, "omega_max": 32 }
    }"#;
    let sc = write_scenario(dir.path(), "s.json", text);
    let out = dir.path().join("out");
    assert!(collapsar(&["factorize-kernel"], &sc, &out).status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("modes.json")).unwrap()).unwrap();
    let md = modes_from_json(&v).unwrap();
    assert_eq!(md.modes(), 128);
    assert_eq!(md.d_omega(), Some(0.25));
    let m = manifest(&out);
    let err = m["summary"]["max_reconstruction_error"].as_f64().unwrap();
    assert!(err > 0.0 && err < 0.03, "{err}");
    let csv = fs::read_to_string(out.join("reconstruction.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "tau,exact_00,modes_00");
}

#[test]
fn sample_noise_and_markov_modes_pass_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "system": { "hamiltonian": "sigma_x", "collapse": ["sigma_z"], "gamma": 0.3 },
        "kernel": { "type": "exponential", "amplitude": 1.0, "tau_c": 0.5 },
        "discretization": { "dt": 0.1, "t_final": 2.0 },
        "run": { "n_traj": 500, "seed": 9 }
    }"#;
    let sc = write_scenario(dir.path(), "s.json", text);
    let o = collapsar(&["sample-noise", "--check"], &sc, &dir.path().join("n"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(dir.path().join("n/noise_covariance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    let o = collapsar(&["run-markov", "--check"], &sc, &dir.path().join("m"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("m/markov_traj_0000.csv").exists());
}
