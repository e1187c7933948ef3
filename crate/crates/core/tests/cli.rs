use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use socialabm::cli::{self, RunConfig};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_socialabm"));
    cmd.env_remove(cli::OUTPUT_DIR_ENV);
    cmd
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/replicate.toml")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn example_config_matches_the_defaults() {
    let cfg = cli::load_config(&example_config()).unwrap();
    cfg.validate().unwrap();
    let mut defaults = RunConfig {
        output_dir: Some("out".into()),
        ..RunConfig::default()
    };
    defaults.respond.values.si = 1.0;
    assert_eq!(cfg, defaults);
}

#[test]
fn free_rider_respond_never_contributes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "respond", "--si", "1", "--al", "0", "--co", "0", "--fa", "0",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("respond.csv")).unwrap();
    let mut rows = text.lines();
    assert!(rows.next().unwrap().starts_with("x,action,u_0"));
    let actions: Vec<&str> = rows.map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(actions.len(), 21);
    assert!(actions.iter().all(|&a| a == "0"));
}

#[test]
fn writes_only_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["compare-rl", "--seed", "3"]);
    assert!(out.status.success());
    assert_eq!(
        listing(dir.path()),
        ["compare_rl.csv", "compare_rl.manifest.json"]
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("compare_rl.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 3);
    assert_eq!(manifest["version"], cli::version_string());
    assert_eq!(manifest["config"]["compare_rl"]["n_agents"], 4);
    let csv = fs::read_to_string(dir.path().join("compare_rl.csv")).unwrap();
    assert!(csv.starts_with("mode,agent_id,x,action\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4 * 21);
}

#[test]
fn output_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env(cli::OUTPUT_DIR_ENV, dir.path())
        .args(["sweep", "--al", "0.6", "--agents-per-value", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("al,x,mean_action,std_action,n_agents"));
    assert!(rows.all(|r| r.starts_with("0.6,") && r.ends_with(",4")));
}

#[test]
fn different_seeds_give_different_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), &["replicate", "--seed", "1"])
        .status
        .success());
    assert!(run_in(b.path(), &["replicate", "--seed", "2"])
        .status
        .success());
    assert_ne!(
        fs::read(a.path().join("replicate.csv")).unwrap(),
        fs::read(b.path().join("replicate.csv")).unwrap()
    );
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[scenario]\nenhancement_factor = 5.0\n").unwrap();
    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "[phases]\nrounds = 10\n").unwrap();
    let cases: [&[&str]; 5] = [
        &["--config", bad.to_str().unwrap(), "replicate"],
        &["--config", unknown.to_str().unwrap(), "replicate"],
        &["--config", "/nonexistent.toml", "sweep"],
        &["sweep", "--al", "1.5"],
        &[],
    ];
    for args in cases {
        let out = run_in(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = run_in(
        dir.path(),
        &["--config", bad.to_str().unwrap(), "replicate"],
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.enhancement_factor"));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocked = dir.path().join("file");
    fs::write(&blocked, "").unwrap();
    let out = bin()
        .args(["respond", "--oracle", "--output-dir"])
        .arg(blocked.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn selftest_prints_a_table() {
    let out = bin().arg("selftest").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 4);
    assert!(text.contains("checks passed"));
}

#[test]
fn threads_flag_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sweep", "--al", "0.5", "--agents-per-value", "4"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    let mut two = args.to_vec();
    two.extend(["--threads", "2"]);
    assert!(run_in(a.path(), &one).status.success());
    assert!(run_in(b.path(), &two).status.success());
    assert_eq!(
        fs::read(a.path().join("sweep.csv")).unwrap(),
        fs::read(b.path().join("sweep.csv")).unwrap()
    );
}
