//! End-to-end checks of the binary: output files, byte reproducibility,
//! and the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sks() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sks"))
}

fn base_config(out_dir: &Path) -> String {
    format!(
        r#"
correction_convention = "half"

[grid]
n_cells = 32

[model]
r_u = 1.0
r_v = 1.0
chi = 1.0
alpha = 1.0
beta = 1.0

[noise1]
delta = 1.5
K = 4
amplitude = 0.3

[noise2]
delta = 2.5
K = 4
amplitude = 0.2

[scheme]
kind = "semi_implicit_em"
dt = 1e-3
t_end = 0.05
record_every = 10

[lyapunov]
rho = 5.0
c1 = 3.0
c2 = 1.0

[initial]
u_mean = 1.0
u_cos_amplitude = 0.5
v_mean = 0.5
v_cos_amplitude = 0.2

[ensemble]
n_paths = 12
base_seed = 11
workers = 2

[output]
dir = "{}"
"#,
        out_dir.display()
    )
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_writes_the_expected_files_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let cfg = write_config(tmp.path(), &base_config(&out_a));
    for dir in [&out_a, &out_b] {
        let out = sks()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--output-dir")
            .arg(dir)
            .output()
            .unwrap();
        run_ok(&out);
    }
    for name in ["trajectory.csv", "snapshots.csv", "run.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert!(!a.is_empty(), "{name} is empty");
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let header = fs::read_to_string(out_a.join("trajectory.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.starts_with("t,mass_u,"), "unexpected header {header}");
}

#[test]
fn ensemble_report_ignores_the_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &base_config(&tmp.path().join("unused")));
    let mut reports = Vec::new();
    for workers in ["1", "4", "8"] {
        let dir = tmp.path().join(format!("w{workers}"));
        let out = sks()
            .args(["ensemble", "--config"])
            .arg(&cfg)
            .args(["--workers", workers])
            .arg("--output-dir")
            .arg(&dir)
            .output()
            .unwrap();
        run_ok(&out);
        reports.push(fs::read(dir.join("moments.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn truncated_simulate_emits_the_event_log() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let text = format!(
        "{}\n[truncation]\nlevel_max = 3\nthreshold_multiplier = 1.1\n",
        base_config(&dir)
    );
    let cfg = write_config(tmp.path(), &text);
    let out = sks().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    run_ok(&out);
    let events = fs::read_to_string(dir.join("events.csv")).unwrap();
    assert!(events.starts_with("level,tau_star,trigger_kind,tau_bar,reached_T"));
    let study = sks()
        .args(["truncation-events", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    run_ok(&study);
    assert!(dir.join("truncation_events.json").exists());
}

#[test]
fn unknown_config_keys_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{}\ntypo_key = 1\n", base_config(tmp.path()));
    let cfg = write_config(tmp.path(), &text);
    let out = sks().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_truncation_section_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &base_config(tmp.path()));
    let out = sks()
        .args(["truncation-events", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_blowup_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // explicit reference scheme far beyond its stability limit
    let text = base_config(tmp.path())
        .replace("kind = \"semi_implicit_em\"", "kind = \"wong_zakai_reference\"")
        .replace("n_cells = 32", "n_cells = 128")
        .replace("dt = 1e-3", "dt = 1e-2")
        .replace("t_end = 0.05", "t_end = 1.0");
    let cfg = write_config(tmp.path(), &text);
    let out = sks().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn validate_exit_codes_follow_the_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &base_config(tmp.path()));
    let out = sks().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let body = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(body.contains("\"verdict\": \"pass\""));
    assert!(body.contains("\"admissible\""));

    let bad = base_config(tmp.path()).replace("rho = 5.0", "rho = 2.0");
    let cfg_bad = write_config(&tmp.path().join("."), &bad);
    let out = sks().args(["validate", "--config"]).arg(&cfg_bad).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn strong_order_study_runs_from_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let text = format!(
        r#"
correction_convention = "half"

[grid]
n_cells = 4

[model]
chi = 0.0
alpha = 0.0
beta = 0.0

[noise1]
delta = 1.5
K = 0
amplitude = 1.0

[scheme]
kind = "semi_implicit_em"
dt = 0.015625
t_end = 0.5
record_every = 1000000

[ensemble]
n_paths = 32
base_seed = 7

[study]
dt_ladder = [0.015625, 0.0078125, 0.00390625, 0.001953125]

[output]
dir = "{}"
"#,
        dir.display()
    );
    let cfg = write_config(tmp.path(), &text);
    let out = sks().args(["strong-order", "--config"]).arg(&cfg).output().unwrap();
    run_ok(&out);
    let body = fs::read_to_string(dir.join("strong_order.json")).unwrap();
    assert!(body.contains("\"slope\""));
    let wz = sks().args(["wong-zakai", "--config"]).arg(&cfg).output().unwrap();
    run_ok(&wz);
    let body = fs::read_to_string(dir.join("wong_zakai.json")).unwrap();
    assert!(body.contains("\"verdict\""));
}
