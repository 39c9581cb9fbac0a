use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dpsco::empirics::{counterexample_exact, write_counterexample_csv};

fn dpsco(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpsco"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const CONFIG: &str = r#"{
    "algorithm": "phased-sgd",
    "problem": {"kind": "quadratic_ball", "domain_radius": 1, "center_offset": 0.5, "data_radius": 0.5, "scale": 1},
    "grid": [{"n": 256, "d": 4, "rho": 1}],
    "trials": 2,
    "seed": 17,
    "output": "out.csv"
}"#;

#[test]
fn minimal_run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.json"), CONFIG).unwrap();
    let out = dpsco(&["run", "config.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("n,d,rho,algorithm,trials,mean,std_err,bound,ratio\n256,4,1,phased-sgd,2,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["partial"], false);
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["seed"], 17);
}

#[test]
fn rerun_is_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.json"), CONFIG).unwrap();
    assert_eq!(dpsco(&["run", "config.json", "--output", "a.csv"], dir.path()).status.code(), Some(0));
    let out = dpsco(&["run", "config.json", "--output", "b.csv", "--jobs", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        CONFIG.replace(r#"[{"n": 256, "d": 4, "rho": 1}]"#, "[]"),
        CONFIG.replace("\"seed\": 17,", ""),
        CONFIG.replace("phased-sgd", "phased-erm"),
        CONFIG.replace("\"trials\": 2", "\"trials\": 2,,"),
    ];
    for (i, text) in cases.iter().enumerate() {
        fs::write(dir.path().join("bad.json"), text).unwrap();
        let out = dpsco(&["run", "bad.json"], dir.path());
        assert_eq!(out.status.code(), Some(2), "case {i}");
    }
    let out = dpsco(&["run", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), CONFIG.replace("\"trials\": 2", "\"trials\": \"two\"")).unwrap();
    let out = dpsco(&["run", "bad.json"], dir.path());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.json"), CONFIG.replace("out.csv", "missing/out.csv")).unwrap();
    let out = dpsco(&["run", "config.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn account_single_step() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), r#"{"B": [1], "eta": [1], "sigma": [1]}"#).unwrap();
    let out = dpsco(&["account", "s.json", "--lipschitz", "1", "--delta", "1e-5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("rho,2\n"));
    let out = dpsco(&["account", "s.json", "--lipschitz", "0", "--delta", "1e-5,1e-6"], dir.path());
    let text = stdout(&out);
    assert!(text.contains("0.00001,0,0") && text.contains("0.000001,0,0"), "{text}");
}

#[test]
fn account_zero_noise_prints_infinite() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), r#"{"B": [1, 1], "eta": [1, 1], "sigma": [0, 0]}"#).unwrap();
    let out = dpsco(&["account", "s.json", "--lipschitz", "1", "--delta", "1e-5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "rho,infinite\ndelta,epsilon,epsilon_optimized\n0.00001,infinite,infinite\n");
}

#[test]
fn snowball_schedule_meets_its_budget() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "schedule", "--kind", "snowball-jnn", "--steps", "200", "--d", "16", "--rho", "1", "--lipschitz", "2",
        "--diameter", "2", "--output", "s.json",
    ];
    assert_eq!(dpsco(&args, dir.path()).status.code(), Some(0));
    let out = dpsco(&["account", "s.json", "--lipschitz", "2", "--delta", "1e-5"], dir.path());
    let first = stdout(&out).lines().next().unwrap().to_string();
    let rho: f64 = first.strip_prefix("rho,").unwrap().parse().unwrap();
    assert!(rho <= 1.0 + 1e-9, "{rho}");
}

#[test]
fn counterexample_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpsco(&["counterexample", "-T", "100", "--k", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = counterexample_exact(100, 1, 0.1, 1.0).unwrap();
    let mut expected = Vec::new();
    write_counterexample_csv(&mut expected, &[report]).unwrap();
    assert_eq!(out.stdout, expected);
}

#[test]
fn counterexample_default_grid_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpsco(&["counterexample", "-T", "1000"], dir.path());
    let text = stdout(&out);
    let ks: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(ks, ["1", "10", "32", "100", "1000"]);
    assert_eq!(dpsco(&["counterexample", "-T", "10", "--k", "11"], dir.path()).status.code(), Some(2));
    assert_eq!(dpsco(&["counterexample", "-T", "10", "--trials", "200"], dir.path()).status.code(), Some(2));
}

#[test]
fn counterexample_simulation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["counterexample", "-T", "200", "--k", "5,14", "--trials", "500", "--seed", "3", "--output"];
    let mut a = args.to_vec();
    a.push("a.csv");
    let mut b = args.to_vec();
    b.push("b.csv");
    assert_eq!(dpsco(&a, dir.path()).status.code(), Some(0));
    assert_eq!(dpsco(&b, dir.path()).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    assert_eq!(text.lines().count(), 3);
    assert!(!text.lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn contraction_and_probe_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpsco(&["contraction-check", "--beta", "1", "--eta", "3", "--d", "2", "--seed", "1"], dir.path());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["contractive"], false);
    fs::write(
        dir.path().join("p.json"),
        r#"{"kind": "quadratic_ball", "domain_radius": 1, "center_offset": 0.5, "data_radius": 0.5, "scale": 1}"#,
    )
    .unwrap();
    let args = ["probe-sensitivity", "--problem", "p.json", "--d", "3", "--eta", "1", "--n", "8", "--pairs", "50", "--seed", "2"];
    let out = dpsco(&args, dir.path());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["max_observed"].as_f64().unwrap() <= report["bound"].as_f64().unwrap());
    let mut too_big = args.to_vec();
    too_big[6] = "3";
    assert_eq!(dpsco(&too_big, dir.path()).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dpsco(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(dpsco(&["account"], dir.path()).status.code(), Some(2));
}
