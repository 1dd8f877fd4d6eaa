//! End-to-end checks of the command-line surface: exit codes, error
//! messages with config context, and the files each run leaves behind.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fujitalab")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fujitalab_cli_{}_{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn invalid_invariant_exits_2_naming_it() {
    let dir = scratch("invalid");
    let cfg = write_cfg(&dir, "run.cfg", "p = 0.5\nq = 1\n");
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pq must exceed 1"), "stderr: {stderr}");
    assert!(stderr.contains("run.cfg:"), "stderr: {stderr}");
    // Nothing half-written on failure.
    assert!(!dir.join("out").join("trajectory.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_config_file_exits_1() {
    let out = run(&[
        "simulate",
        "--config",
        "/nonexistent/nowhere.cfg",
        "--out",
        "/tmp/fujitalab_never",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_expected_files() {
    let dir = scratch("simulate");
    let cfg = write_cfg(
        &dir,
        "run.cfg",
        "p = 2\nq = 2\ncells = 401\nhalf_width = 25\nt_max = 10\nsnapshots = true\ndump_fields = true\nscale = 1\n",
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["manifest.cfg", "trajectory.csv", "verdict.csv", "series.csv"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    // Field snapshots at sample times, u and v in step.
    let dumped = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("field_u_")
        })
        .count();
    assert!(dumped > 0, "no field snapshots dumped");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verdict"), "stdout: {stdout}");
    // Trajectory header matches the documented schema.
    let traj = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,sup_u,sup_v,weak_u,weak_v,mass_u,mass_v,termination\n"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn picard_subcommand_reports_convergence() {
    let dir = scratch("picard");
    let cfg = write_cfg(
        &dir,
        "run.cfg",
        "p = 2\nq = 2\ncells = 201\nhalf_width = 8\nscale = 0.5\npicard_t = 0.2\npicard_slices = 16\n",
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "picard",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged"));
    assert!(out_dir.join("picard_profile.csv").exists());
    assert!(out_dir.join("picard_gaps.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn smallness_subcommand_brackets() {
    let dir = scratch("smallness");
    let cfg = write_cfg(
        &dir,
        "run.cfg",
        "p = 4\nq = 4\ncells = 601\nhalf_width = 60\nt_max = 30\nshape = powertail\nshape_cutoff = 30\nsearch_scale_init = 0.5\nsearch_max_doublings = 8\nsearch_bisections = 2\n",
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "smallness",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("smallness.csv").exists());
    assert!(out_dir.join("smallness_result.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn smallness_failure_is_runtime_exit_1() {
    // Every allowed probe blows up (huge starting amplitude, no
    // doublings left to shrink it), so the search must report failure.
    let dir = scratch("smallness_fail");
    let cfg = write_cfg(
        &dir,
        "run.cfg",
        "p = 4\nq = 4\ncells = 201\nhalf_width = 20\nt_max = 5\nshape = powertail\nshape_cutoff = 10\nsearch_scale_init = 1000000\nsearch_max_doublings = 0\n",
    );
    let out = run(&[
        "smallness",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no Global verdict"), "stderr: {stderr}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn sweep_empty_ranges_succeed() {
    let dir = scratch("sweep_empty");
    let cfg = write_cfg(&dir, "run.cfg", "sweep_p =\nsweep_q =\nsweep_scales =\n");
    let out_dir = dir.join("out");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(body.lines().count(), 1, "header only");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}

#[test]
fn exponent_prints_the_report() {
    let out = run(&[
        "exponent", "--p", "2", "--q", "2", "--r", "0", "--s", "0", "--N", "1", "--alpha", "0",
        "--case", "A",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verdict         = NoGlobal"), "{stdout}");
    assert!(stdout.contains("gamma1          = 1"), "{stdout}");
    assert!(stdout.contains("critical (pq)*  = 7"), "{stdout}");
}
