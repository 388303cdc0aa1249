use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_rgg");

fn rgg(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RGG_CLT_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const MINIMAL: &[&str] = &[
    "simulate",
    "--set",
    "functional.family=gilbert",
    "--set",
    "functional.epsilon=0.3",
    "--set",
    "experiment.t_grid=5",
    "--set",
    "experiment.replicates=4",
];

#[test]
fn simulate_writes_samples_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let o = rgg(tmp.path(), MINIMAL);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let samples = fs::read_to_string(tmp.path().join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 5);
    assert_eq!(samples.lines().next().unwrap(), "t_index,t,replicate,n,value");
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("t,epsilon,n_mean,mean,mean_se,var,var_se,dK,dK_se,dW"));
    assert!(tmp.path().join("report.json").exists());
    let m = manifest(tmp.path());
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["config"]["functional.family"], "gilbert");
    assert_eq!(m["outputs"].as_object().unwrap().len(), 3);
}

#[test]
fn same_seed_same_hashes_across_worker_counts() {
    let dirs: Vec<TempDir> = (0..3).map(|_| TempDir::new().unwrap()).collect();
    for (d, w) in dirs.iter().zip(["1", "4", "1"]) {
        let mut args = MINIMAL.to_vec();
        args.extend(["--seed", "99", "--workers", w]);
        assert_eq!(code(&rgg(d.path(), &args)), 0);
    }
    let hashes: Vec<serde_json::Value> = dirs.iter().map(|d| manifest(d.path())["outputs"].clone()).collect();
    assert_eq!(hashes[0], hashes[1]);
    assert_eq!(hashes[0], hashes[2]);

    let other = TempDir::new().unwrap();
    let mut args = MINIMAL.to_vec();
    args.extend(["--seed", "100"]);
    assert_eq!(code(&rgg(other.path(), &args)), 0);
    assert_ne!(manifest(other.path())["outputs"]["samples.csv"], hashes[0]["samples.csv"]);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "# minimal run\n[functional]\nfamily = onng\nalpha = 0.5\n\n[window]\ndim = 1\n\n[experiment]\nt_grid = 10, 20\nreplicates = 6\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = rgg(&out, &["simulate", "--config", cfg.to_str().unwrap(), "--set", "experiment.replicates=3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 2 * 3);
    assert_eq!(manifest(&out)["config"]["experiment.replicates"], "3");
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let bad_grid = rgg(
        tmp.path(),
        &["simulate", "--set", "functional.family=gilbert", "--set", "experiment.t_grid=10,5"],
    );
    assert_eq!(code(&bad_grid), 2);
    assert!(!bad_grid.stderr.is_empty());
    let missing = rgg(tmp.path(), &["variance-scan", "--set", "functional.family=onng"]);
    assert_eq!(code(&missing), 2);
    assert_eq!(code(&rgg(tmp.path(), &["simulate", "--set", "bogus.key=1"])), 2);
    assert_eq!(code(&rgg(tmp.path(), &["constants", "--set", "constants.d_max=11"])), 2);
    assert_eq!(code(&rgg(tmp.path(), &["nonsense"])), 2);
}

#[test]
fn capacity_exit_3() {
    let tmp = TempDir::new().unwrap();
    let mut args = MINIMAL.to_vec();
    args.extend(["--max-points", "1"]);
    assert_eq!(code(&rgg(tmp.path(), &args)), 3);
}

#[test]
fn degenerate_samples_exit_4() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("s.csv");
    fs::write(&file, "t,value\n5,2.0\n5,2.0\n").unwrap();
    let o = rgg(tmp.path(), &["clt-distance", "--set", &format!("clt.samples_file={}", file.display())]);
    assert_eq!(code(&o), 4);
}

#[test]
fn synthetic_variance_scan_recovers_cubic_slope() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("s.csv");
    // two samples ±a have sample variance 2a², so a = sqrt(t³/2)
    let mut text = String::from("t,value\n");
    for t in [10.0f64, 20.0, 40.0, 80.0] {
        let a = (t.powi(3) / 2.0).sqrt();
        text.push_str(&format!("{t},{a}\n{t},{}\n", -a));
    }
    fs::write(&file, text).unwrap();
    let o = rgg(tmp.path(), &["variance-scan", "--set", &format!("scan.samples_file={}", file.display())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let scan: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("scan.json")).unwrap()).unwrap();
    assert!((scan["fit"]["slope"].as_f64().unwrap() - 3.0).abs() < 1e-9);
}

#[test]
fn onng_variance_scan_reports_slope() {
    let tmp = TempDir::new().unwrap();
    let o = rgg(
        tmp.path(),
        &[
            "variance-scan",
            "--set",
            "functional.family=onng",
            "--set",
            "functional.alpha=0.2",
            "--set",
            "window.dim=1",
            "--set",
            "experiment.t_grid=20,40,80",
            "--set",
            "experiment.replicates=200",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let scan: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("scan.json")).unwrap()).unwrap();
    assert!(scan["fit"]["slope"].as_f64().unwrap().is_finite());
    assert_eq!(scan["source"], "simulation");
}

#[test]
fn clt_distance_summary() {
    let tmp = TempDir::new().unwrap();
    let o = rgg(
        tmp.path(),
        &[
            "clt-distance",
            "--set",
            "functional.family=gilbert",
            "--set",
            "experiment.epsilon_rule=power",
            "--set",
            "experiment.theta=1",
            "--set",
            "experiment.t_grid=20,40",
            "--set",
            "experiment.replicates=200",
            "--set",
            "experiment.bootstrap=50",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let clt: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("clt.json")).unwrap()).unwrap();
    assert_eq!(clt["rows"].as_array().unwrap().len(), 2);
    assert!(clt["rows"][0]["d_k_se"].as_f64().unwrap() > 0.0);
    assert!(clt["nonincreasing_within_2se"].is_boolean());
}

#[test]
fn verify_subset_and_fault_injection() {
    let tmp = TempDir::new().unwrap();
    let o = rgg(tmp.path(), &["verify", "--quick", "--suites", "oracle,product"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("verify.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["suites"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["oracle", "product"]);

    let faulty = rgg(tmp.path(), &["verify", "--quick", "--suites", "oracle", "--inject-fault"]);
    assert_eq!(code(&faulty), 5);
    assert!(String::from_utf8_lossy(&faulty.stdout).contains("FAIL"));

    assert_eq!(code(&rgg(tmp.path(), &["verify", "--suites", "nope"])), 2);
}

#[test]
fn constants_table() {
    let tmp = TempDir::new().unwrap();
    let o = rgg(tmp.path(), &["constants", "--set", "constants.d_max=3"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(tmp.path().join("constants.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "d,c,error,beta1");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    assert!((first[1].parse::<f64>().unwrap() - 0.5827).abs() < 1e-3);
    assert_eq!(first[3], "");
    let third: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
    assert!((third[3].parse::<f64>().unwrap() - 0.203).abs() < 5e-4);
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(BIN)
        .args(["constants", "--set", "constants.d_max=1"])
        .env("RGG_CLT_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("constants.csv").exists());
    assert!(tmp.path().join("manifest.json").exists());
}

#[test]
fn mecke_and_poincare_subcommands() {
    let tmp = TempDir::new().unwrap();
    let o = rgg(tmp.path(), &["mecke", "--set", "check.replicates=300"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(tmp.path().join("mecke.json").exists());
    let o = rgg(tmp.path(), &["poincare", "--set", "check.replicates=300", "--set", "check.p=1.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let entries: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("poincare.json")).unwrap()).unwrap();
    assert_eq!(entries.as_array().unwrap().len(), 5);
}
