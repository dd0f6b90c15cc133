use std::fs;
use std::path::Path;
use std::process::Command;

use torus_stokes::cli::{strip_timings, verify_manifest};

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_torus-stokes"))
}

fn run_with(dir: &Path, conf: &str, extra: &[&str]) -> (i32, String) {
    let cfg = dir.join("run.conf");
    fs::write(&cfg, conf).unwrap();
    let out = dir.join("out");
    let status = exe()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap_or_default();
    (status.status.code().unwrap(), manifest)
}

#[test]
fn pressure_check_on_bump_records_fail() {
    let dir = tempfile::tempdir().unwrap();
    let (code, m) = run_with(dir.path(), "mode = pressure-check\npressure = bump\nrho_max = 20\n", &[]);
    assert_eq!(code, 0);
    assert!(m.contains("verdict = fail"), "{m}");
    assert!(verify_manifest(&dir.path().join("out")).unwrap().is_empty());
}

#[test]
fn constant_lagrangian_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = "mode = lagrangian\nd = 1\nn = 32\npressure = gamma\nrho0 = constant\nrho0_value = 2\n";
    let (code, m) = run_with(dir.path(), conf, &[]);
    assert_eq!(code, 0, "{m}");
    let eta = fs::read_to_string(dir.path().join("out/eta_final.txt")).unwrap();
    let vals: Vec<f64> = eta.lines().skip(1).map(|l| l.trim().parse().unwrap()).collect();
    assert!(vals.iter().all(|v| *v == vals[0] && (v - 2.0).abs() < 1e-12), "{eta}");
    let series = fs::read_to_string(dir.path().join("out/series.csv")).unwrap();
    assert!(series.starts_with("t,energy,u_l2_gap,alpha\n"));
}

#[test]
fn unknown_key_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "mode = lagrangian\npresure = linear\n").unwrap();
    let out = exe().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pressure"));
}

#[test]
fn solver_giving_up_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let conf = "mode = eulerian\nd = 1\nn = 64\npressure = linear\nrho0 = two-value\nrecon_max_iter = 1\n";
    let (code, m) = run_with(dir.path(), conf, &[]);
    assert_eq!(code, 2);
    assert!(m.contains("exit_code = 2") && m.contains("no contraction"), "{m}");
}

#[test]
fn dumps_and_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let conf = "mode = eulerian\nd = 1\nn = 32\npressure = linear\nrho0 = cosine-bump\ndelta_ladder = 0.1\n";
    let (code, m) = run_with(dir.path(), conf, &["--dump-velocity", "--dump-flow"]);
    assert_eq!(code, 0, "{m}");
    let out = dir.path().join("out");
    assert!(out.join("u0_k000.txt").exists());
    assert!(out.join("x0_k020.txt").exists());
    assert!(verify_manifest(&out).unwrap().is_empty());
    assert!(m.contains("dump_velocity = true"));
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let conf = "mode = lagrangian\nd = 1\nn = 16\npressure = linear\nrho0 = random\nseed = 1\n";
    let (code, m) = run_with(dir.path(), conf, &["--mode", "bmo", "--seed", "9", "--workers", "2"]);
    assert_eq!(code, 0, "{m}");
    assert!(m.contains("mode = bmo") && m.contains("seed = 9") && m.contains("[bmo.rho0]"));
}

#[test]
fn repeated_runs_match() {
    let conf = "mode = uniqueness\nd = 1\nn = 32\npressure = linear\nrho0 = random\nT = 0.5\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ca, ma) = run_with(a.path(), conf, &["--workers", "3"]);
    let (cb, mb) = run_with(b.path(), conf, &["--workers", "3"]);
    assert_eq!((ca, cb), (0, 0), "{ma}");
    assert_eq!(strip_timings(&ma), strip_timings(&mb));
}
