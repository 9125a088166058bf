use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sscr_core::cli::{run, Mode, RunConfig};
use sscr_core::fading::QuadratureSpec;
use sscr_core::oracle::{mc_detector, RngSpec};
use sscr_core::power::{InterferenceMode, RayleighFading};
use sscr_core::sensing::DetectorConfig;
use sscr_core::throughput as tp;
use sscr_core::{sensing, solver, Error};

create_exception!(sscr, InfeasibleError, PyValueError);
create_exception!(sscr, ConvergenceError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible { .. } | Error::AllInfeasible => InfeasibleError::new_err(e.to_string()),
        Error::QuadratureNonConvergence { .. } | Error::BracketFailure { .. } => ConvergenceError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// System parameters in linear units.
#[pyclass(name = "SystemParams", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PySystemParams {
    pi1: f64,
    n0: f64,
    p_av: f64,
    i_pk: f64,
    gamma: f64,
    tau: f64,
    fs: f64,
    t_frame: f64,
    pd_target: f64,
    mode: String,
}

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (*, pi1=0.4, n0=1.0, p_av=None, i_pk=1.0, gamma=0.1, tau=1e-3, fs=6e6, t_frame=0.1, pd_target=0.9, mode="p1_only"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        pi1: f64,
        n0: f64,
        p_av: Option<f64>,
        i_pk: f64,
        gamma: f64,
        tau: f64,
        fs: f64,
        t_frame: f64,
        pd_target: f64,
        mode: &str,
    ) -> PyResult<Self> {
        let p = PySystemParams {
            pi1,
            n0,
            p_av: p_av.unwrap_or_else(|| solver::db_to_linear(15.0)),
            i_pk,
            gamma,
            tau,
            fs,
            t_frame,
            pd_target,
            mode: mode.to_string(),
        };
        p.core()?.validate().map_err(to_py)?;
        Ok(p)
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemParams(pi1={}, n0={}, p_av={}, i_pk={}, gamma={}, tau={}, fs={}, t_frame={}, pd_target={}, mode='{}')",
            self.pi1, self.n0, self.p_av, self.i_pk, self.gamma, self.tau, self.fs, self.t_frame, self.pd_target, self.mode
        )
    }
}

impl PySystemParams {
    fn core(&self) -> PyResult<solver::SystemParams> {
        let mode: InterferenceMode = self.mode.parse().map_err(PyValueError::new_err)?;
        Ok(solver::SystemParams {
            pi1: self.pi1,
            n0: self.n0,
            p_av: self.p_av,
            i_pk: self.i_pk,
            gamma: self.gamma,
            tau: self.tau,
            fs: self.fs,
            t_frame: self.t_frame,
            pd_target: self.pd_target,
            mode,
        })
    }

    fn model(&self) -> PyResult<RayleighFading> {
        RayleighFading::new(self.n0, QuadratureSpec::default()).map_err(to_py)
    }
}

#[pyclass(name = "SubgradientSettings", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PySettings {
    lambda_init: f64,
    step0: f64,
    max_iters: usize,
    feas_tol: f64,
    stall_tol: f64,
}

#[pymethods]
impl PySettings {
    #[new]
    #[pyo3(signature = (*, lambda_init=None, step0=None, max_iters=None, feas_tol=None, stall_tol=None))]
    fn new(
        lambda_init: Option<f64>,
        step0: Option<f64>,
        max_iters: Option<usize>,
        feas_tol: Option<f64>,
        stall_tol: Option<f64>,
    ) -> PyResult<Self> {
        let d = solver::SubgradientSettings::default();
        let s = PySettings {
            lambda_init: lambda_init.unwrap_or(d.lambda_init),
            step0: step0.unwrap_or(d.step0),
            max_iters: max_iters.unwrap_or(d.max_iters),
            feas_tol: feas_tol.unwrap_or(d.feas_tol),
            stall_tol: stall_tol.unwrap_or(d.stall_tol),
        };
        s.core().validate().map_err(to_py)?;
        Ok(s)
    }
}

impl PySettings {
    fn core(&self) -> solver::SubgradientSettings {
        solver::SubgradientSettings {
            lambda_init: self.lambda_init,
            step0: self.step0,
            max_iters: self.max_iters,
            feas_tol: self.feas_tol,
            stall_tol: self.stall_tol,
        }
    }
}

fn settings_or_default(settings: Option<PyRef<'_, PySettings>>) -> solver::SubgradientSettings {
    settings.map(|s| s.core()).unwrap_or_default()
}

#[pyclass(name = "SolveResult", get_all, frozen, skip_from_py_object)]
struct PySolveResult {
    lambda_star: f64,
    gamma_s_star: f64,
    eta: f64,
    pf: f64,
    pd: f64,
    alpha: f64,
    beta: f64,
    c0: f64,
    c1: f64,
    c_s: f64,
    p_bar: f64,
    feas_residual: f64,
    iterations: usize,
    converged: bool,
    /// `(lambda, p_bar, subgradient)` per iteration
    trace: Vec<(f64, f64, f64)>,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(eta={}, lambda_star={}, c_s={}, converged={}, iterations={})",
            self.eta, self.lambda_star, self.c_s, if self.converged { "True" } else { "False" }, self.iterations
        )
    }
}

impl From<solver::SolveResult> for PySolveResult {
    fn from(r: solver::SolveResult) -> Self {
        PySolveResult {
            lambda_star: r.lambda_star,
            gamma_s_star: r.gamma_s_star,
            eta: r.eta,
            pf: r.pf,
            pd: r.pd,
            alpha: r.alpha,
            beta: r.beta,
            c0: r.c0,
            c1: r.c1,
            c_s: r.c_s,
            p_bar: r.p_bar,
            feas_residual: r.feas_residual,
            iterations: r.iterations,
            converged: r.converged,
            trace: r.trace.iter().map(|t| (t.lambda, t.p_bar, t.subgradient)).collect(),
        }
    }
}

#[pyclass(name = "ThroughputPoint", get_all, frozen, skip_from_py_object)]
struct PyThroughputPoint {
    tau: f64,
    n_samples: u64,
    eta_star: f64,
    pf: f64,
    pd: f64,
    c_s: f64,
    xi_s: f64,
    status: &'static str,
}

#[pymethods]
impl PyThroughputPoint {
    fn __repr__(&self) -> String {
        format!("ThroughputPoint(tau={}, xi_s={}, status='{}')", self.tau, self.xi_s, self.status)
    }
}

#[pyfunction]
fn q_function(x: f64) -> f64 {
    sensing::q_function(x)
}

#[pyfunction]
fn q_inverse(p: f64) -> PyResult<f64> {
    sensing::q_inverse(p).map_err(to_py)
}

fn detector(n0: f64, tau: f64, fs: f64, gamma: f64) -> PyResult<DetectorConfig> {
    DetectorConfig::new(n0, tau, fs, gamma).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (eta, *, n0=1.0, tau=1e-3, fs=6e6, gamma=0.1))]
fn prob_false_alarm(eta: f64, n0: f64, tau: f64, fs: f64, gamma: f64) -> PyResult<f64> {
    sensing::prob_false_alarm(eta, &detector(n0, tau, fs, gamma)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (eta, *, n0=1.0, tau=1e-3, fs=6e6, gamma=0.1))]
fn prob_detection(eta: f64, n0: f64, tau: f64, fs: f64, gamma: f64) -> PyResult<f64> {
    sensing::prob_detection(eta, &detector(n0, tau, fs, gamma)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (pd_target, *, n0=1.0, tau=1e-3, fs=6e6, gamma=0.1))]
fn invert_pd(pd_target: f64, n0: f64, tau: f64, fs: f64, gamma: f64) -> PyResult<f64> {
    sensing::invert_pd(pd_target, &detector(n0, tau, fs, gamma)?).map_err(to_py)
}

#[pyfunction]
fn waterfill(h: f64, lambda: f64) -> PyResult<f64> {
    sscr_core::power::waterfill(h, lambda).map_err(to_py)
}

#[pyfunction]
fn throughput(c_s: f64, tau: f64, t_frame: f64) -> PyResult<f64> {
    tp::throughput(c_s, tau, t_frame).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (params, eta, settings=None))]
fn subgradient_solve(py: Python<'_>, params: &PySystemParams, eta: f64, settings: Option<PyRef<'_, PySettings>>) -> PyResult<PySolveResult> {
    let (p, m, s) = (params.core()?, params.model()?, settings_or_default(settings));
    py.detach(|| solver::subgradient_solve(&p, eta, &s, &m)).map(Into::into).map_err(to_py)
}

#[pyfunction]
fn bisection_solve(py: Python<'_>, params: &PySystemParams, eta: f64) -> PyResult<f64> {
    let (p, m) = (params.core()?, params.model()?);
    py.detach(|| solver::bisection_solve(&p, eta, &m)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (params, settings=None, eta_grid_size=32))]
fn select_eta(
    py: Python<'_>,
    params: &PySystemParams,
    settings: Option<PyRef<'_, PySettings>>,
    eta_grid_size: usize,
) -> PyResult<PySolveResult> {
    let (p, m, s) = (params.core()?, params.model()?, settings_or_default(settings));
    py.detach(|| solver::select_eta(&p, &s, &m, eta_grid_size)).map(Into::into).map_err(to_py)
}

/// One entry per threshold: a `SolveResult`, or `None` where the solver failed.
#[pyfunction]
#[pyo3(signature = (params, etas, settings=None))]
fn sweep_eta(
    py: Python<'_>,
    params: &PySystemParams,
    etas: Vec<f64>,
    settings: Option<PyRef<'_, PySettings>>,
) -> PyResult<Vec<Option<PySolveResult>>> {
    let (p, m, s) = (params.core()?, params.model()?, settings_or_default(settings));
    let rows = py.detach(|| solver::sweep_eta(&p, &s, &m, &etas)).map_err(to_py)?;
    Ok(rows.into_iter().map(|r| r.result.ok().map(Into::into)).collect())
}

/// Returns `(rows, best_index)`.
#[pyfunction]
#[pyo3(signature = (params, taus, pd_target, settings=None))]
fn sweep_tau(
    py: Python<'_>,
    params: &PySystemParams,
    taus: Vec<f64>,
    pd_target: f64,
    settings: Option<PyRef<'_, PySettings>>,
) -> PyResult<(Vec<PyThroughputPoint>, usize)> {
    let (p, m, s) = (params.core()?, params.model()?, settings_or_default(settings));
    let sweep = py.detach(|| tp::sweep_tau(&p, &s, &m, &taus, pd_target)).map_err(to_py)?;
    let rows = sweep
        .rows
        .iter()
        .map(|r| PyThroughputPoint {
            tau: r.tau,
            n_samples: r.n_samples,
            eta_star: r.eta_star,
            pf: r.pf,
            pd: r.pd,
            c_s: r.c_s,
            xi_s: r.xi_s,
            status: r.status.as_str(),
        })
        .collect();
    Ok((rows, sweep.best))
}

/// Simulated `(pf, pd, stderr_pf, stderr_pd)` of the energy detector.
#[pyfunction]
#[pyo3(signature = (eta, *, n0=1.0, tau=1e-3, fs=6e6, gamma=0.1, trials=20000, seed=1, streams=16))]
#[allow(clippy::too_many_arguments)]
fn simulate_detector(
    py: Python<'_>,
    eta: f64,
    n0: f64,
    tau: f64,
    fs: f64,
    gamma: f64,
    trials: usize,
    seed: u64,
    streams: usize,
) -> PyResult<(f64, f64, f64, f64)> {
    let cfg = detector(n0, tau, fs, gamma)?;
    let est = py
        .detach(|| mc_detector(eta, &cfg, trials, &RngSpec { seed, streams }))
        .map_err(to_py)?;
    Ok((est.pf.mean, est.pd.mean, est.pf.stderr, est.pd.stderr))
}

/// Runs an experiment mode with config overrides; returns `(csv, exit_code)`.
#[pyfunction]
#[pyo3(signature = (mode, overrides=None))]
fn run_experiment(py: Python<'_>, mode: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<(String, i32)> {
    let mode: Mode = mode.parse().map_err(|e: sscr_core::cli::ConfigError| PyValueError::new_err(e.to_string()))?;
    let mut cfg = RunConfig::default();
    if let Some(d) = overrides {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let value = v.str()?.to_string();
            cfg.set(&key, &value).map_err(|e| PyValueError::new_err(e.to_string()))?;
        }
    }
    let out = py.detach(|| run(mode, &cfg));
    Ok((out.csv, out.status.code()))
}

#[pymodule]
fn sscr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PySettings>()?;
    m.add_class::<PySolveResult>()?;
    m.add_class::<PyThroughputPoint>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add_function(wrap_pyfunction!(q_function, m)?)?;
    m.add_function(wrap_pyfunction!(q_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(prob_false_alarm, m)?)?;
    m.add_function(wrap_pyfunction!(prob_detection, m)?)?;
    m.add_function(wrap_pyfunction!(invert_pd, m)?)?;
    m.add_function(wrap_pyfunction!(waterfill, m)?)?;
    m.add_function(wrap_pyfunction!(throughput, m)?)?;
    m.add_function(wrap_pyfunction!(subgradient_solve, m)?)?;
    m.add_function(wrap_pyfunction!(bisection_solve, m)?)?;
    m.add_function(wrap_pyfunction!(select_eta, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_eta, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_tau, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_detector, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
