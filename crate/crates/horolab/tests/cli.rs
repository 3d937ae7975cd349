use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn horolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horolab")).args(args).output().expect("binary runs")
}

fn run_into(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--output_dir", dir.to_str().unwrap()]);
    horolab(&all)
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "seed = 11\nsamples = 3\nt_max = 8 # short orbits\nmu = 0.4, 0.6\ndani_cases = 40\n").unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let out = run_into(d, &["dirichlet", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["dirichlet.csv", "dani.csv", "summary.json", "density_mu0.4.dat"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("dirichlet.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("s,mu,lower,upper,n_grid,t_max\n"));
    let dani = fs::read_to_string(a.join("dani.csv")).unwrap();
    assert_eq!(dani.lines().count(), 41);
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for w in ["1", "4", "8"] {
        let dir = tmp.path().join(w);
        let out = run_into(&dir, &["bestapprox", "--points", "6", "--q_max", "5000", "--seed", "3", "--workers", w]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
        outputs.push((fs::read(dir.join("bestapprox.csv")).unwrap(), manifest["config_hash"].clone()));
    }
    assert!(outputs.windows(2).all(|p| p[0] == p[1]));
}

#[test]
fn unknown_key_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_into(tmp.path(), &["estimate-f", "--mu_typo", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu_typo"));
    assert!(!tmp.path().join("estimate-f.csv").exists());
}

#[test]
fn invalid_parameters_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_into(tmp.path(), &["estimate-f", "--method", "siegel", "--mu", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_into(tmp.path(), &["bestapprox", "--q_max", "lots"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn siegel_method_writes_header_only_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_into(tmp.path(), &["estimate-f", "--d", "1", "--mu", "0.1", "--method", "siegel"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(tmp.path().join("estimate-f.csv")).unwrap(), "s,mu,lower,upper,mean\n");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    let mean = summary["estimates"]["estimate"]["mean"].as_f64().unwrap();
    assert!((mean - 0.12 / std::f64::consts::PI.powi(2)).abs() < 1e-12);
}

#[test]
fn manifest_hashes_match_files() {
    use sha2::{Digest, Sha256};
    let tmp = tempfile::tempdir().unwrap();
    let out = run_into(tmp.path(), &["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_object().unwrap();
    assert!(files.contains_key("selftest.csv") && files.contains_key("summary.json"));
    for (name, digest) in files {
        let bytes = fs::read(tmp.path().join(name)).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(digest.as_str().unwrap(), hex, "{name}");
    }
}

#[test]
fn kmtree_writes_tree_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_into(tmp.path(), &["kmtree", "--t_max", "1.5", "--grid", "500", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let tree: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree.as_array().unwrap().len(), 1);
}
