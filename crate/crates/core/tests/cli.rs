use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn aimd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aimd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn verify_small_instance_passes_with_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("small.toml");
    let o = aimd(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["barnsley"]["pass"], true);
    assert_eq!(report["nonexpansive"]["seed"], 7);
}

#[test]
fn oracle_prints_both_vectors_and_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("const-policy.toml");
    let o = aimd(&["oracle", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.matches("simulated").count(), 2);
    assert_eq!(text.matches("perron").count(), 2);
    assert_eq!(text.matches("l1 gap").count(), 2);
}

#[test]
fn oracle_exits_two_when_gap_exceeds_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("const-policy.toml");
    let o = aimd(&["oracle", "--config", cfg.to_str().unwrap(), "--tolerance", "1e-9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_rejects_state_dependent_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("table1.toml");
    let o = aimd(&["oracle", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("policy.kind"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = aimd(&["simulate", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("small.toml")).unwrap().replace("beta = [0.7, 0.6]", "beta = [0.7, 1.6]");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let o = aimd(&["simulate", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("resource_b.beta[1]"));
}

#[test]
fn simulate_writes_trajectories_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("small.toml");
    let o = aimd(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let zeta = std::fs::read_to_string(dir.path().join("zeta.csv")).unwrap();
    let mut lines = zeta.lines();
    assert_eq!(lines.next().unwrap(), "l,tau,a_1_1,a_1_2,a_2_1,a_2_2,b_1_1,b_1_2,b_2_1,b_2_2");
    assert_eq!(lines.count(), 200);
    let traj = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    // events 0..=L N for each resource
    assert_eq!(traj.lines().count(), 1 + 2 * (200 * 2 + 1));
    assert!(std::fs::read_to_string(dir.path().join("utilization.svg")).unwrap().contains("<svg"));
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("small.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_aimd"))
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("AIMD_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("zeta.csv").exists());
}

#[test]
fn montecarlo_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("small.toml");
    for (name, threads) in [("x", "1"), ("y", "3")] {
        let o = aimd(
            &["montecarlo", "--config", cfg.to_str().unwrap(), "--seed", "9", "--threads", threads],
            &dir.path().join(name),
        );
        assert!(o.status.success());
    }
    for f in ["moments.csv", "replicas.csv", "montecarlo.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("x").join(f)).unwrap(),
            std::fs::read(dir.path().join("y").join(f)).unwrap(),
            "{f}"
        );
    }
}
