use std::path::Path;
use std::process::{Command, Output};

use sscr_core::cli::{config_from_header, run, Mode, RunConfig};

fn sscr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sscr-opt")).args(args).output().unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "# typo below\np_avg_db = 15\n").unwrap();
    let out = sscr(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_avg_db"));
}

#[test]
fn invariant_violation_exits_one() {
    let out = sscr(&["optimize", "--set", "pi1=1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pi1"));
    assert_eq!(sscr(&["optimise"]).status.code(), Some(1));
    assert_eq!(sscr(&["optimize", "--bogus"]).status.code(), Some(1));
    assert_eq!(sscr(&["optimize", "--config", "/nonexistent/file"]).status.code(), Some(1));
}

#[test]
fn infeasible_target_exits_three() {
    let out = sscr(&["optimize", "--set", "pd_target=0.99", "--set", "tau_ms=0.0005"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn non_convergence_exits_two() {
    let out = sscr(&["optimize", "--set", "max_iters=10", "--set", "feas_tol=1e-15", "--set", "eta_grid_size=2"]);
    assert_eq!(out.status.code(), Some(2));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(data_rows(&csv)[0].last().unwrap(), "false");
}

#[test]
fn file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "gamma_db = -15\neta_points = 3\n").unwrap();
    let out_path = dir.path().join("out.csv");
    let out = sscr(&[
        "sweep-eta",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "eta_points=4",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(data_rows(&csv).len(), 4);
    let echoed = config_from_header(&csv).unwrap();
    assert_eq!(echoed.gamma_db, -15.0);
    assert_eq!(echoed.eta_points, 4);
}

#[test]
fn sweep_eta_rows_satisfy_mixture_identity() {
    let mut cfg = RunConfig::default();
    cfg.set("eta_points", "8").unwrap();
    let out = run(Mode::SweepEta, &cfg);
    let rows = data_rows(&out.csv);
    assert_eq!(rows.len(), 8);
    for r in rows {
        let (alpha, beta, c0, c1, c_s) = (num(&r[3]), num(&r[4]), num(&r[7]), num(&r[8]), num(&r[9]));
        assert!((alpha * c0 + beta * c1 - c_s).abs() < 1e-9);
        assert!(c_s.is_finite() && c_s > 0.0);
        assert_eq!(r[10], "ok");
    }
}

#[test]
fn sweep_tau_rows_satisfy_frame_identity() {
    let mut cfg = RunConfig::default();
    cfg.set("tau_points", "10").unwrap();
    let out = run(Mode::SweepTau, &cfg);
    let t_frame = cfg.t_ms * 1e-3;
    for r in data_rows(&out.csv) {
        let (tau, c_s, xi_s) = (num(&r[0]), num(&r[4]), num(&r[5]));
        assert!((xi_s - (t_frame - tau) / t_frame * c_s).abs() < 1e-9);
        assert_eq!(r[6], "true");
    }
}

#[test]
fn header_echo_reproduces_the_run() {
    let mut cfg = RunConfig::default();
    cfg.apply_text("p_av_db = 12.5\ntau_points = 6\nseed = 5\n").unwrap();
    let first = run(Mode::SweepTau, &cfg);
    let again = run(Mode::SweepTau, &config_from_header(&first.csv).unwrap());
    assert_eq!(first, again);
}

#[test]
fn mc_validate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let go = |p: &Path, seed: &str| {
        let out = sscr(&["mc-validate", "--seed", seed, "--set", "mc_capacity_trials=200000", "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(p).unwrap()
    };
    let a = go(&path("a.csv"), "9");
    let b = go(&path("b.csv"), "9");
    let c = go(&path("c.csv"), "10");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let csv = String::from_utf8(a).unwrap();
    for r in data_rows(&csv) {
        assert!(num(&r[4]) < 5.0, "{} is {} sigma away", r[0], r[4]);
    }
}
