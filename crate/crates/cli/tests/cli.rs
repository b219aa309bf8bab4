use std::path::Path;
use std::process::{Command, Output};

fn fastcharge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastcharge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("FASTCHARGE_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fastcharge(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_training_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "seed = 7\naccel = 100.0\n\n[td3]\nhidden = [16, 16]\nminibatch = 32\nbuffer_capacity = 10000\n\n\
         [training]\nepisodes = 3\neval_every = 1\nwarmup_steps = 40\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&["simulate", "--strategy", "cccv", "--out", out, "--accel", "100"]);
    assert!(stdout.starts_with("CC-CV:"), "{stdout}");
    let trace = std::fs::read_to_string(dir.path().join("trace_cc_cv.csv")).unwrap();
    assert!(trace.starts_with("t_s,I_A,V_V,SoC,SoH,eta_side_V,L_sei_m,c_dli\n"));
    let resolved = std::fs::read_to_string(dir.path().join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("accel = 100.0"));
    ok(&["simulate", "--strategy", "cop-fast", "--out", out]);

    let stdout = ok(&["plot", "--input", out]);
    assert!(stdout.contains("charge_profiles.svg"));
    let svg = std::fs::read_to_string(dir.path().join("charge_profiles.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn output_directory_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fastcharge"))
        .args(["simulate", "--strategy", "cop-slow"])
        .env("FASTCHARGE_OUT", dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("trace_cc_cop_slow.csv").exists());
}

#[test]
fn map_feeds_cccv_v() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["map", "--out", out, "--accel", "100"]);
    let map = std::fs::read_to_string(dir.path().join("voltage_soh_map.csv")).unwrap();
    let rows: Vec<(f64, f64)> = map
        .lines()
        .skip(1)
        .map(|l| {
            let (s, v) = l.split_once(',').unwrap();
            (s.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert!(rows.len() > 3);
    for w in rows.windows(2) {
        assert!(w[1].0 < w[0].0 && w[1].1 >= w[0].1);
    }
    let stdout = ok(&["simulate", "--strategy", "cccv-v", "--out", out, "--accel", "100"]);
    assert!(stdout.starts_with("CC-CV-V:"));
}

#[test]
fn training_is_reproducible_and_its_policy_simulates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_training_config(dir.path());
    let map = dir.path().join("map.csv");
    std::fs::write(&map, "soh,v_cutoff_V\n1,4.15\n0.8,4.19\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["train", "--config", &cfg, "--out", d.to_str().unwrap(), "--map", map.to_str().unwrap()]);
    }
    let log_a = std::fs::read_to_string(a.join("training_log.csv")).unwrap();
    assert_eq!(log_a, std::fs::read_to_string(b.join("training_log.csv")).unwrap());
    assert_eq!(log_a.lines().count(), 4);
    assert!(log_a.starts_with("episode,reward,max_V,min_eta_side,charge_minutes\n"));
    let policy = a.join("best_policy.txt");
    let stdout = ok(&["simulate", "--strategy", "policy", "--policy", policy.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(stdout.starts_with("Proposed:"), "{stdout}");
}

#[test]
fn bad_input_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[td3]\ntau = 1.5\n").unwrap();
    let out = fastcharge(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));

    let out = fastcharge(&["simulate", "--strategy", "policy", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--policy"));

    let out = fastcharge(&["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let empty = tempfile::tempdir().unwrap();
    let out = fastcharge(&["plot", "--input", empty.path().to_str().unwrap()]);
    assert!(!out.status.success());
}
