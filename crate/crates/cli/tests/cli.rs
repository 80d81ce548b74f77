use std::path::Path;
use std::process::{Command, Output};

fn bf(dir: &Path, args: &[&str], out_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bf"));
    cmd.args(args).current_dir(dir).env_remove("BF_OUT_DIR");
    if let Some(v) = out_env {
        cmd.env("BF_OUT_DIR", v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn presets_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bf(tmp.path(), &["presets"], None);
    assert_eq!(code(&o), 0);
    let names = String::from_utf8(o.stdout).unwrap();
    assert_eq!(names.lines().collect::<Vec<_>>(), ["paper-fig2a", "paper-fig2b", "paper-robot", "paper-chain"]);
    let o = bf(tmp.path(), &["presets", "paper-chain.cfg"], None);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("gaussian_impulse"));
}

#[test]
fn simulate_writes_default_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bf(tmp.path(), &["simulate", "paper-fig2a.cfg"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "descent.json", "events.json", "manifest.json"] {
        assert!(tmp.path().join("out/paper-fig2a").join(f).is_file(), "{f}");
    }
    let o = bf(tmp.path(), &["simulate", "paper-fig2a", "--mode", "robust"], Some("elsewhere"));
    assert_eq!(code(&o), 0);
    let manifest = std::fs::read_to_string(tmp.path().join("elsewhere/paper-fig2a/manifest.json")).unwrap();
    assert!(manifest.contains("\"mode\": \"robust\""));
}

#[test]
fn simulate_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("short.toml");
    std::fs::write(&path, "name = \"short\"\nmode = \"robust\"\n[integrator]\nt_end = 5.0\n").unwrap();
    let o = bf(tmp.path(), &["simulate", "short.toml", "--out", "r"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("r/trajectory.csv").is_file());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&bf(d, &[], None)), 1);
    assert_eq!(code(&bf(d, &["frobnicate"], None)), 1);
    assert_eq!(code(&bf(d, &["simulate", "missing.toml"], None)), 1);
    assert_eq!(code(&bf(d, &["simulate", "paper-fig2a", "--mode", "fast"], None)), 1);
    assert_eq!(code(&bf(d, &["--help"], None)), 0);

    std::fs::write(d.join("neg.toml"), "[controller]\nmu1 = -1\n").unwrap();
    let o = bf(d, &["simulate", "neg.toml"], None);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("controller.mu1"));
    std::fs::write(d.join("broken.toml"), "[controller\n").unwrap();
    assert_eq!(code(&bf(d, &["simulate", "broken.toml"], None)), 2);

    // Follower placed on top of the leader.
    std::fs::write(d.join("clash.toml"), "[[followers]]\nx = 0.0\ny = 0.0\ntheta = 0.0\n").unwrap();
    assert_eq!(code(&bf(d, &["simulate", "clash.toml"], None)), 2);

    // Step-size floor above the required step: a solver failure.
    std::fs::write(d.join("stiff.toml"), "[integrator]\nrtol = 1e-14\natol = 1e-14\nh_min = 1e-3\nh_init = 1e-3\n")
        .unwrap();
    assert_eq!(code(&bf(d, &["simulate", "stiff.toml"], None)), 3);
}

#[test]
fn analyze_needs_a_config_for_lyapunov() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&bf(d, &["simulate", "paper-fig2a", "--out", "a"], None)), 0);
    std::fs::rename(d.join("a/trajectory.csv"), d.join("lone.csv")).unwrap();
    assert_eq!(code(&bf(d, &["analyze", "lone.csv", "--lyapunov"], None)), 1);
    assert_eq!(code(&bf(d, &["analyze", "lone.csv", "--lyapunov", "--config", "paper-fig2a"], None)), 0);
    assert_eq!(code(&bf(d, &["analyze", "lone.csv"], None)), 1);
    assert_eq!(code(&bf(d, &["analyze", "lone.csv", "--estimate", "--window", "4"], None)), 2);
}

#[test]
fn analyze_linearization_of_fig2a() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&bf(d, &["simulate", "paper-fig2a", "--out", "a"], None)), 0);
    let o = bf(d, &["analyze", "a/trajectory.csv", "--linearize", "--out", "rep"], None);
    assert_eq!(code(&o), 0);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("rep/analysis.json")).unwrap()).unwrap();
    assert_eq!(rep["linearization"]["a"], serde_json::json!([[0.0, -0.5], [4.0, -1.0]]));
    assert_eq!(rep["linearization"]["hurwitz"], true);
}

#[test]
fn sweep_rejects_invalid_value() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bf(tmp.path(), &["sweep", "paper-fig2b", "--param", "controller.mu1", "--values", "1,-1"], None);
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("out").exists());
}
