//! Configuration files and CSV experiment runs behind the `sscr-opt` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::error::Error;
use crate::fading::QuadratureSpec;
use crate::oracle::{mc_capacity, mc_detector, RngSpec, MIN_CAPACITY_TRIALS, MIN_DETECTOR_TRIALS};
use crate::power::{FadingModel, InterferenceMode, PowerPolicy, RayleighFading};
use crate::sensing::{invert_pd, DetectorPoint};
use crate::solver::{db_to_linear, select_eta, subgradient_solve, sweep_eta, SubgradientSettings, SystemParams};
use crate::throughput::{sweep_tau, tau_grid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SweepEta,
    Optimize,
    SweepTau,
    McValidate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SweepEta => "sweep-eta",
            Mode::Optimize => "optimize",
            Mode::SweepTau => "sweep-tau",
            Mode::McValidate => "mc-validate",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sweep-eta" => Ok(Mode::SweepEta),
            "optimize" => Ok(Mode::Optimize),
            "sweep-tau" => Ok(Mode::SweepTau),
            "mc-validate" => Ok(Mode::McValidate),
            other => Err(ConfigError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown mode `{0}` (expected sweep-eta, optimize, sweep-tau or mc-validate)")]
    UnknownMode(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("bad value for `{key}`: `{value}` ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Config = 1,
    NonConvergence = 2,
    Infeasible = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Everything a run needs, in the units used by config files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pi1: f64,
    pub n0: f64,
    pub p_av_db: f64,
    pub i_pk_db: f64,
    pub gamma_db: f64,
    pub tau_ms: f64,
    pub t_ms: f64,
    pub fs_hz: f64,
    pub pd_target: f64,
    pub interference_mode: InterferenceMode,
    /// Threshold sweep range as multiples of `n0`.
    pub eta_min_rel: f64,
    pub eta_max_rel: f64,
    pub eta_points: usize,
    pub tau_min_ms: f64,
    pub tau_max_ms: f64,
    pub tau_points: usize,
    pub eta_grid_size: usize,
    pub solver: SubgradientSettings,
    pub quadrature: QuadratureSpec,
    pub rng: RngSpec,
    pub mc_detector_trials: usize,
    pub mc_capacity_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pi1: 0.4,
            n0: 1.0,
            p_av_db: 15.0,
            i_pk_db: 0.0,
            gamma_db: -10.0,
            tau_ms: 1.0,
            t_ms: 100.0,
            fs_hz: 6e6,
            pd_target: 0.9,
            interference_mode: InterferenceMode::P1Only,
            eta_min_rel: 0.8,
            eta_max_rel: 1.4,
            eta_points: 20,
            tau_min_ms: 0.1,
            tau_max_ms: 20.0,
            tau_points: 40,
            eta_grid_size: 32,
            solver: SubgradientSettings::default(),
            quadrature: QuadratureSpec::default(),
            rng: RngSpec::default(),
            mc_detector_trials: 20_000,
            mc_capacity_trials: 1_000_000,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (key, v) = (key.trim(), value.trim());
        match key {
            "pi1" => self.pi1 = parse_num(key, v)?,
            "n0" => self.n0 = parse_num(key, v)?,
            "p_av_db" => self.p_av_db = parse_num(key, v)?,
            "i_pk_db" => self.i_pk_db = parse_num(key, v)?,
            "gamma_db" => self.gamma_db = parse_num(key, v)?,
            "tau_ms" => self.tau_ms = parse_num(key, v)?,
            "t_ms" => self.t_ms = parse_num(key, v)?,
            "fs_hz" => self.fs_hz = parse_num(key, v)?,
            "pd_target" => self.pd_target = parse_num(key, v)?,
            "interference_mode" => {
                self.interference_mode = v.parse().map_err(|reason| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason,
                })?
            }
            "eta_min_rel" => self.eta_min_rel = parse_num(key, v)?,
            "eta_max_rel" => self.eta_max_rel = parse_num(key, v)?,
            "eta_points" => self.eta_points = parse_num(key, v)?,
            "tau_min_ms" => self.tau_min_ms = parse_num(key, v)?,
            "tau_max_ms" => self.tau_max_ms = parse_num(key, v)?,
            "tau_points" => self.tau_points = parse_num(key, v)?,
            "eta_grid_size" => self.eta_grid_size = parse_num(key, v)?,
            "lambda_init" => self.solver.lambda_init = parse_num(key, v)?,
            "step0" => self.solver.step0 = parse_num(key, v)?,
            "max_iters" => self.solver.max_iters = parse_num(key, v)?,
            "feas_tol" => self.solver.feas_tol = parse_num(key, v)?,
            "stall_tol" => self.solver.stall_tol = parse_num(key, v)?,
            "nodes_1d" => self.quadrature.nodes_1d = parse_num(key, v)?,
            "nodes_2d" => self.quadrature.nodes_2d = parse_num(key, v)?,
            "rel_tol" => self.quadrature.rel_tol = parse_num(key, v)?,
            "seed" => self.rng.seed = parse_num(key, v)?,
            "streams" => self.rng.streams = parse_num(key, v)?,
            "mc_detector_trials" => self.mc_detector_trials = parse_num(key, v)?,
            "mc_capacity_trials" => self.mc_capacity_trials = parse_num(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Every key with its value, formatted so that feeding the pairs back
    /// through [`RunConfig::set`] reproduces `self` exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let f = |x: f64| format!("{x:?}");
        vec![
            ("pi1", f(self.pi1)),
            ("n0", f(self.n0)),
            ("p_av_db", f(self.p_av_db)),
            ("i_pk_db", f(self.i_pk_db)),
            ("gamma_db", f(self.gamma_db)),
            ("tau_ms", f(self.tau_ms)),
            ("t_ms", f(self.t_ms)),
            ("fs_hz", f(self.fs_hz)),
            ("pd_target", f(self.pd_target)),
            ("interference_mode", self.interference_mode.as_str().to_string()),
            ("eta_min_rel", f(self.eta_min_rel)),
            ("eta_max_rel", f(self.eta_max_rel)),
            ("eta_points", self.eta_points.to_string()),
            ("tau_min_ms", f(self.tau_min_ms)),
            ("tau_max_ms", f(self.tau_max_ms)),
            ("tau_points", self.tau_points.to_string()),
            ("eta_grid_size", self.eta_grid_size.to_string()),
            ("lambda_init", f(self.solver.lambda_init)),
            ("step0", f(self.solver.step0)),
            ("max_iters", self.solver.max_iters.to_string()),
            ("feas_tol", f(self.solver.feas_tol)),
            ("stall_tol", f(self.solver.stall_tol)),
            ("nodes_1d", self.quadrature.nodes_1d.to_string()),
            ("nodes_2d", self.quadrature.nodes_2d.to_string()),
            ("rel_tol", f(self.quadrature.rel_tol)),
            ("seed", self.rng.seed.to_string()),
            ("streams", self.rng.streams.to_string()),
            ("mc_detector_trials", self.mc_detector_trials.to_string()),
            ("mc_capacity_trials", self.mc_capacity_trials.to_string()),
        ]
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: pair.to_string(),
        })?;
        self.set(key, value)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// System parameters in linear units.
    pub fn params(&self) -> SystemParams {
        SystemParams {
            pi1: self.pi1,
            n0: self.n0,
            p_av: db_to_linear(self.p_av_db),
            i_pk: db_to_linear(self.i_pk_db),
            gamma: db_to_linear(self.gamma_db),
            tau: self.tau_ms * 1e-3,
            fs: self.fs_hz,
            t_frame: self.t_ms * 1e-3,
            pd_target: self.pd_target,
            mode: self.interference_mode,
        }
    }

    pub fn eta_grid(&self) -> Vec<f64> {
        let (lo, hi) = (self.eta_min_rel * self.n0, self.eta_max_rel * self.n0);
        if self.eta_points == 1 {
            return vec![lo];
        }
        (0..self.eta_points)
            .map(|k| lo + (hi - lo) * k as f64 / (self.eta_points - 1) as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &'static str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    key,
                    reason: reason.to_string(),
                })
            }
        };
        for (key, value) in [
            ("p_av_db", self.p_av_db),
            ("i_pk_db", self.i_pk_db),
            ("gamma_db", self.gamma_db),
        ] {
            check(value.is_finite(), key, "must be finite")?;
        }
        self.params().validate().map_err(to_config_error)?;
        self.solver.validate().map_err(to_config_error)?;
        self.quadrature.validate().map_err(to_config_error)?;
        self.rng.validate().map_err(to_config_error)?;
        check(self.eta_min_rel > 0.0 && self.eta_min_rel.is_finite(), "eta_min_rel", "must be positive")?;
        check(self.eta_max_rel > self.eta_min_rel && self.eta_max_rel.is_finite(), "eta_max_rel", "must exceed eta_min_rel")?;
        check(self.eta_points >= 1, "eta_points", "must be at least 1")?;
        check(self.eta_grid_size >= 1, "eta_grid_size", "must be at least 1")?;
        check(self.tau_min_ms > 0.0, "tau_min_ms", "must be positive")?;
        check(self.tau_max_ms > self.tau_min_ms, "tau_max_ms", "must exceed tau_min_ms")?;
        check(self.tau_max_ms < self.t_ms, "tau_max_ms", "must be shorter than the frame t_ms")?;
        check(self.tau_points >= 2, "tau_points", "must be at least 2")?;
        check(
            self.mc_detector_trials >= MIN_DETECTOR_TRIALS,
            "mc_detector_trials",
            &format!("must be at least {MIN_DETECTOR_TRIALS}"),
        )?;
        check(
            self.mc_capacity_trials >= MIN_CAPACITY_TRIALS,
            "mc_capacity_trials",
            &format!("must be at least {MIN_CAPACITY_TRIALS}"),
        )?;
        Ok(())
    }
}

/// Maps a library parameter name to the config key that sets it.
fn config_key(name: &'static str) -> &'static str {
    match name {
        "p_av" => "p_av_db",
        "i_pk" => "i_pk_db",
        "gamma" => "gamma_db",
        "tau" => "tau_ms",
        "t_frame" => "t_ms",
        "fs" => "fs_hz",
        other => other,
    }
}

fn to_config_error(e: Error) -> ConfigError {
    match e {
        Error::InvalidParameter { name, reason } => ConfigError::Invalid {
            key: config_key(name),
            reason,
        },
        Error::WindowTooShort(_) => ConfigError::Invalid {
            key: "tau_ms",
            reason: e.to_string(),
        },
        other => ConfigError::Invalid {
            key: "config",
            reason: other.to_string(),
        },
    }
}

/// `%.12g`-style formatting, independent of locale.
pub fn format_number(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..DIGITS).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mantissa), sign, exp.abs())
    } else {
        trim(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x))
    }
}

/// Output of one run: the CSV text (possibly empty) and the exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub csv: String,
    pub status: ExitStatus,
    /// Explanation for a non-zero status.
    pub message: Option<String>,
}

fn header(mode: Mode, cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# sscr-opt {VERSION}");
    let _ = writeln!(s, "# mode: {}", mode.as_str());
    let _ = writeln!(s, "# throughput formula as printed: xi_s = (T - tau/T) C_s");
    let _ = writeln!(s, "# throughput formula as applied: xi_s = ((T - tau) / T) C_s");
    let _ = writeln!(s, "# config begin");
    for (k, v) in cfg.entries() {
        let _ = writeln!(s, "# {k} = {v}");
    }
    let _ = writeln!(s, "# config end");
    s
}

/// Recovers the configuration echoed in a CSV header.
pub fn config_from_header(csv: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let body: String = csv
        .lines()
        .skip_while(|l| *l != "# config begin")
        .skip(1)
        .take_while(|l| *l != "# config end")
        .map(|l| format!("{}\n", l.trim_start_matches("# ")))
        .collect();
    cfg.apply_text(&body)?;
    Ok(cfg)
}

fn row(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

fn failure(csv: String, status: ExitStatus, e: impl std::fmt::Display) -> RunOutput {
    RunOutput {
        csv,
        status,
        message: Some(e.to_string()),
    }
}

fn status_for(e: &Error) -> ExitStatus {
    match e {
        Error::Infeasible { .. } | Error::AllInfeasible => ExitStatus::Infeasible,
        Error::InvalidParameter { .. } | Error::Domain { .. } | Error::WindowTooShort(_) => ExitStatus::Config,
        _ => ExitStatus::NonConvergence,
    }
}

/// Runs one experiment.
pub fn run(mode: Mode, cfg: &RunConfig) -> RunOutput {
    if let Err(e) = cfg.validate() {
        return failure(String::new(), ExitStatus::Config, e);
    }
    let params = cfg.params();
    let model = match RayleighFading::new(params.n0, cfg.quadrature) {
        Ok(m) => m,
        Err(e) => return failure(String::new(), ExitStatus::Config, e),
    };
    let mut csv = header(mode, cfg);
    let g = format_number;
    match mode {
        Mode::SweepEta => {
            let rows = match sweep_eta(&params, &cfg.solver, &model, &cfg.eta_grid()) {
                Ok(rows) => rows,
                Err(e) => return failure(String::new(), status_for(&e), e),
            };
            csv.push_str("eta,pf,pd,alpha,beta,lambda,gamma_s_star,c0,c1,c_s,status\n");
            for r in rows {
                let cells = match &r.result {
                    Ok(s) => vec![
                        g(s.eta),
                        g(s.pf),
                        g(s.pd),
                        g(s.alpha),
                        g(s.beta),
                        g(s.lambda_star),
                        g(s.gamma_s_star),
                        g(s.c0),
                        g(s.c1),
                        g(s.c_s),
                        if s.converged { "ok" } else { "unconverged" }.to_string(),
                    ],
                    Err(_) => {
                        let (pf, pd) = DetectorPoint::evaluate(r.eta, &params.detector())
                            .map(|p| (p.pf, p.pd))
                            .unwrap_or((f64::NAN, f64::NAN));
                        let mut cells = vec![g(r.eta), g(pf), g(pd)];
                        cells.extend(std::iter::repeat_n(g(f64::NAN), 7));
                        cells.push("failed".to_string());
                        cells
                    }
                };
                csv.push_str(&row(&cells));
            }
            RunOutput { csv, status: ExitStatus::Ok, message: None }
        }
        Mode::Optimize => {
            let s = match select_eta(&params, &cfg.solver, &model, cfg.eta_grid_size) {
                Ok(s) => s,
                Err(e) => return failure(String::new(), status_for(&e), e),
            };
            csv.push_str("eta,pf,pd,alpha,beta,lambda,gamma_s_star,c0,c1,c_s,p_bar,feas_residual,iterations,converged\n");
            csv.push_str(&row(&[
                g(s.eta),
                g(s.pf),
                g(s.pd),
                g(s.alpha),
                g(s.beta),
                g(s.lambda_star),
                g(s.gamma_s_star),
                g(s.c0),
                g(s.c1),
                g(s.c_s),
                g(s.p_bar),
                g(s.feas_residual),
                s.iterations.to_string(),
                s.converged.to_string(),
            ]));
            if s.converged {
                RunOutput { csv, status: ExitStatus::Ok, message: None }
            } else {
                let msg = format!("dual iteration stopped after {} iterations, residual {}", s.iterations, s.feas_residual);
                failure(csv, ExitStatus::NonConvergence, msg)
            }
        }
        Mode::SweepTau => {
            let grid = match tau_grid(cfg.tau_min_ms * 1e-3, cfg.tau_max_ms * 1e-3, cfg.tau_points) {
                Ok(grid) => grid,
                Err(e) => return failure(String::new(), ExitStatus::Config, e),
            };
            let sweep = match sweep_tau(&params, &cfg.solver, &model, &grid, params.pd_target) {
                Ok(s) => s,
                Err(e) => return failure(String::new(), status_for(&e), e),
            };
            let best = sweep.best_row();
            let _ = writeln!(csv, "# best tau_s = {}, xi_s = {}", g(best.tau), g(best.xi_s));
            csv.push_str("tau_s,n_samples,eta_star,pf,c_s,xi_s,feasible,status\n");
            for r in &sweep.rows {
                csv.push_str(&row(&[
                    g(r.tau),
                    r.n_samples.to_string(),
                    g(r.eta_star),
                    g(r.pf),
                    g(r.c_s),
                    g(r.xi_s),
                    r.feasible().to_string(),
                    r.status.as_str().to_string(),
                ]));
            }
            RunOutput { csv, status: ExitStatus::Ok, message: None }
        }
        Mode::McValidate => match mc_validate(&params, cfg, &model) {
            Ok((rows, converged)) => {
                csv.push_str("quantity,analytic,mc_estimate,stderr,sigmas\n");
                for (name, analytic, est) in rows {
                    csv.push_str(&row(&[
                        name.to_string(),
                        g(analytic),
                        g(est.mean),
                        g(est.stderr),
                        g(est.sigmas(analytic)),
                    ]));
                }
                if converged {
                    RunOutput { csv, status: ExitStatus::Ok, message: None }
                } else {
                    failure(csv, ExitStatus::NonConvergence, "dual iteration did not converge")
                }
            }
            Err(e) => failure(String::new(), status_for(&e), e),
        },
    }
}

type McRow = (&'static str, f64, crate::oracle::Estimate);

fn mc_validate(params: &SystemParams, cfg: &RunConfig, model: &RayleighFading) -> crate::Result<(Vec<McRow>, bool)> {
    let detector = params.detector();
    let eta = invert_pd(params.pd_target, &detector)?;
    let s = subgradient_solve(params, eta, &cfg.solver, model)?;
    let policy = PowerPolicy::new(s.lambda_star, params.i_pk, params.mode)?;
    let weights = crate::power::MixtureWeights::from_detection(s.pf, s.pd, params.pi1);
    let diag = model.interference_diagnostics(&policy, weights)?;
    let cap = mc_capacity(params.n0, &policy, weights, cfg.mc_capacity_trials, &cfg.rng)?;
    let det_rng = RngSpec {
        seed: cfg.rng.seed.wrapping_add(1),
        ..cfg.rng
    };
    let det = mc_detector(eta, &detector, cfg.mc_detector_trials, &det_rng)?;
    Ok((
        vec![
            ("c_s", s.c_s, cap.c_s),
            ("p_bar", model.avg_power(&policy, weights)?, cap.p_bar),
            ("c0", s.c0, cap.c0),
            ("c1", s.c1, cap.c1),
            ("mean_interference", diag.mean_interference, cap.mean_interference),
            ("violation_probability", diag.violation_probability, cap.violation_probability),
            ("pf", s.pf, det.pf),
            ("pd", s.pd, det.pd),
        ],
        s.converged,
    ))
}
