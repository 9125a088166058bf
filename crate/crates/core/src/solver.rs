//! Joint selection of the dual price (hence the water-filling cut-off) and
//! the sensing threshold.
//!
//! For a fixed threshold the sensing rates fix the branch weights, and the
//! average-power constraint is the only coupling between fading states. Its
//! multiplier is found by a sub-gradient iteration on the dual,
//! with sub-gradient `g = P_av - P_bar(lambda)`. A bisection on the
//! monotone map `lambda -> P_bar(lambda)` serves as an independent check.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::power::{FadingModel, InterferenceMode, MixtureWeights, PowerPolicy};
use crate::sensing::{invert_pd, prob_detection, prob_false_alarm, DetectorConfig};

/// `10^(db/10)`
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Scenario constants. All powers and SNRs are linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Probability that the primary user is active.
    pub pi1: f64,
    pub n0: f64,
    pub p_av: f64,
    pub i_pk: f64,
    /// Primary SNR at the sensing detector.
    pub gamma: f64,
    pub tau: f64,
    pub fs: f64,
    pub t_frame: f64,
    pub pd_target: f64,
    pub mode: InterferenceMode,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            pi1: 0.4,
            n0: 1.0,
            p_av: db_to_linear(15.0),
            i_pk: db_to_linear(0.0),
            gamma: db_to_linear(-10.0),
            tau: 1e-3,
            fs: 6e6,
            t_frame: 100e-3,
            pd_target: 0.9,
            mode: InterferenceMode::P1Only,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi1) {
            return Err(invalid("pi1", format!("must lie in [0, 1], got {}", self.pi1)));
        }
        if !(self.p_av > 0.0 && self.p_av.is_finite()) {
            return Err(invalid("p_av", format!("must be positive, got {}", self.p_av)));
        }
        if !(self.i_pk > 0.0) {
            return Err(invalid("i_pk", format!("must be positive, got {}", self.i_pk)));
        }
        if !(self.t_frame > self.tau) {
            return Err(invalid(
                "t_frame",
                format!("frame ({}) must be longer than the sensing time ({})", self.t_frame, self.tau),
            ));
        }
        if !(self.pd_target > 0.0 && self.pd_target < 1.0) {
            return Err(invalid("pd_target", format!("must lie strictly between 0 and 1, got {}", self.pd_target)));
        }
        self.detector().validate()
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            n0: self.n0,
            tau: self.tau,
            fs: self.fs,
            gamma: self.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientSettings {
    pub lambda_init: f64,
    pub step0: f64,
    pub max_iters: usize,
    /// Relative feasibility tolerance on `|P_av - P_bar| / P_av`.
    pub feas_tol: f64,
    /// Relative change in `lambda` below which the iteration stops.
    pub stall_tol: f64,
}

impl Default for SubgradientSettings {
    fn default() -> Self {
        SubgradientSettings {
            lambda_init: 1.0 / LN_2,
            step0: 1.0,
            max_iters: 5000,
            feas_tol: 1e-6,
            stall_tol: 1e-10,
        }
    }
}

impl SubgradientSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_init > 0.0 && self.lambda_init.is_finite()) {
            return Err(invalid("lambda_init", "must be positive"));
        }
        if !(self.step0 > 0.0 && self.step0 < 2.0) {
            return Err(invalid("step0", format!("must lie in (0, 2), got {}", self.step0)));
        }
        if self.max_iters < 10 {
            return Err(invalid("max_iters", format!("must be at least 10, got {}", self.max_iters)));
        }
        if !(self.feas_tol > 0.0) {
            return Err(invalid("feas_tol", "must be positive"));
        }
        if !(self.stall_tol > 0.0) {
            return Err(invalid("stall_tol", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub lambda: f64,
    pub p_bar: f64,
    pub subgradient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub lambda_star: f64,
    pub gamma_s_star: f64,
    pub eta: f64,
    pub pf: f64,
    pub pd: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c0: f64,
    pub c1: f64,
    pub c_s: f64,
    pub p_bar: f64,
    /// `|P_av - P_bar| / P_av` at `lambda_star`.
    pub feas_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// Capacity mixture over the four sensing outcomes.
pub fn capacity_mixture(c0: f64, c1: f64, pf: f64, pd: f64, pi1: f64) -> f64 {
    let pi0 = 1.0 - pi1;
    c0 * pi0 * (1.0 - pf) + c1 * pi0 * pf + c1 * pi1 * pd + c0 * pi1 * (1.0 - pd)
}

struct Operating {
    pf: f64,
    pd: f64,
    weights: MixtureWeights,
}

fn operating_point(params: &SystemParams, eta: f64) -> Result<Operating> {
    let cfg = params.detector();
    let pf = prob_false_alarm(eta, &cfg)?;
    let pd = prob_detection(eta, &cfg)?;
    Ok(Operating {
        pf,
        pd,
        weights: MixtureWeights::from_detection(pf, pd, params.pi1),
    })
}

fn finish(
    params: &SystemParams,
    eta: f64,
    op: &Operating,
    model: &impl FadingModel,
    lambda: f64,
    p_bar: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceEntry>,
) -> Result<SolveResult> {
    let policy = PowerPolicy::new(lambda, params.i_pk, params.mode)?;
    let (c0, c1) = model.branch_capacities(&policy)?;
    Ok(SolveResult {
        lambda_star: lambda,
        gamma_s_star: policy.gamma_cutoff(),
        eta,
        pf: op.pf,
        pd: op.pd,
        alpha: op.weights.alpha,
        beta: op.weights.beta,
        c0,
        c1,
        c_s: capacity_mixture(c0, c1, op.pf, op.pd, params.pi1),
        p_bar,
        feas_residual: (params.p_av - p_bar).abs() / params.p_av,
        iterations,
        converged,
        trace,
    })
}

/// Largest change of `ln lambda` in one step.
const MAX_LOG_STEP: f64 = 5.0;

/// Sub-gradient iteration on the dual of the average-power constraint.
///
/// Each step moves `lambda` against the sub-gradient `g = P_av - P_bar`
/// with an adaptively scaled step: in `u = ln lambda` the update is
/// `u <- u - s_k ln(P_av / P_bar) / kappa`, where `s_k = step0 / sqrt(k)`
/// and `kappa` is a secant estimate of `-d ln P_bar / d ln lambda`. The
/// sign always agrees with `-g` and `lambda` stays positive. Running out
/// of iterations yields `converged = false` with the best iterate seen.
pub fn subgradient_solve(
    params: &SystemParams,
    eta: f64,
    settings: &SubgradientSettings,
    model: &impl FadingModel,
) -> Result<SolveResult> {
    params.validate()?;
    settings.validate()?;
    let op = operating_point(params, eta)?;
    let p_bar_at = |lambda: f64| -> Result<f64> {
        let policy = PowerPolicy::new(lambda, params.i_pk, params.mode)?;
        model.avg_power(&policy, op.weights)
    };

    let mut u = settings.lambda_init.ln();
    let mut kappa = 1.0;
    let mut previous: Option<(f64, f64)> = None;
    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, settings.lambda_init, 0.0);
    for k in 1..=settings.max_iters {
        let lambda = u.exp();
        let p_bar = p_bar_at(lambda)?;
        let g = params.p_av - p_bar;
        trace.push(TraceEntry {
            lambda,
            p_bar,
            subgradient: g,
        });
        let residual = g.abs() / params.p_av;
        if residual < best.0 {
            best = (residual, lambda, p_bar);
        }
        if residual <= settings.feas_tol {
            return finish(params, eta, &op, model, lambda, p_bar, k, true, trace);
        }

        let log_p = p_bar.ln();
        if let Some((u_prev, log_p_prev)) = previous {
            let slope = -(log_p - log_p_prev) / (u - u_prev);
            if slope.is_finite() && slope > 0.0 {
                kappa = slope.clamp(1e-4, 1e2);
            }
        }
        previous = Some((u, log_p));

        let step = settings.step0 / (k as f64).sqrt();
        let du = (-step * (params.p_av.ln() - log_p) / kappa).clamp(-MAX_LOG_STEP, MAX_LOG_STEP);
        u += du;
        if du.abs() <= settings.stall_tol {
            let lambda = u.exp();
            let p_bar = p_bar_at(lambda)?;
            let residual = (params.p_av - p_bar).abs() / params.p_av;
            if residual < best.0 {
                best = (residual, lambda, p_bar);
            }
            let (residual, lambda, p_bar) = best;
            let ok = residual <= settings.feas_tol;
            return finish(params, eta, &op, model, lambda, p_bar, k, ok, trace);
        }
    }
    let (_, lambda, p_bar) = best;
    finish(params, eta, &op, model, lambda, p_bar, settings.max_iters, false, trace)
}

const BRACKET: (f64, f64) = (1e-9, 1e9);

/// Dual price by bisection on `log lambda` until `|P_bar - P_av| <= 1e-8 P_av`.
pub fn bisection_solve(params: &SystemParams, eta: f64, model: &impl FadingModel) -> Result<f64> {
    params.validate()?;
    let op = operating_point(params, eta)?;
    let p_bar_at = |lambda: f64| -> Result<f64> {
        let policy = PowerPolicy::new(lambda, params.i_pk, params.mode)?;
        model.avg_power(&policy, op.weights)
    };
    let (mut lo, mut hi) = BRACKET;
    let (p_lo, p_hi) = (p_bar_at(lo)?, p_bar_at(hi)?);
    if !(p_lo >= params.p_av && p_hi <= params.p_av) {
        return Err(Error::BracketFailure {
            lambda_lo: lo,
            lambda_hi: hi,
            p_bar_lo: p_lo,
            p_bar_hi: p_hi,
            p_av: params.p_av,
        });
    }
    let mut mid = (lo * hi).sqrt();
    for _ in 0..400 {
        mid = (lo * hi).sqrt();
        let p = p_bar_at(mid)?;
        if (p - params.p_av).abs() <= 1e-8 * params.p_av {
            break;
        }
        if p > params.p_av {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok(mid)
}

/// Log-spaced thresholds ending exactly at `eta_max`.
pub fn threshold_grid(eta_min: f64, eta_max: f64, points: usize) -> Vec<f64> {
    let ratio = (eta_max / eta_min).ln() / points as f64;
    let mut grid: Vec<f64> = (1..=points).map(|k| eta_min * (ratio * k as f64).exp()).collect();
    if let Some(last) = grid.last_mut() {
        *last = eta_max;
    }
    grid
}

/// Fraction of the largest feasible threshold where the threshold search
/// starts.
pub const ETA_SEARCH_SPAN: f64 = 0.5;

/// Best threshold subject to the detection target.
///
/// Searches a log-spaced grid on `(eta_max / 2, eta_max]`, where `eta_max`
/// is the largest threshold meeting the detection target. Ties go to the
/// larger threshold.
pub fn select_eta(
    params: &SystemParams,
    settings: &SubgradientSettings,
    model: &impl FadingModel,
    eta_grid_size: usize,
) -> Result<SolveResult> {
    params.validate()?;
    if eta_grid_size == 0 {
        return Err(invalid("eta_grid_size", "must be at least 1"));
    }
    let eta_max = invert_pd(params.pd_target, &params.detector())?;
    let grid = threshold_grid(ETA_SEARCH_SPAN * eta_max, eta_max, eta_grid_size);
    let results: Vec<SolveResult> = grid
        .par_iter()
        .map(|&eta| subgradient_solve(params, eta, settings, model))
        .collect::<Result<_>>()?;
    let mut best: Option<SolveResult> = None;
    for r in results.into_iter().rev() {
        match &best {
            Some(b) if r.c_s <= b.c_s => {}
            _ => best = Some(r),
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// One row of a threshold sweep; `error` holds the failure message when the
/// solver could not produce a result.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaRow {
    pub eta: f64,
    pub result: std::result::Result<SolveResult, Error>,
}

/// Solves at every threshold in `eta_grid`, ignoring the detection target.
/// Rows keep the input order.
pub fn sweep_eta(
    params: &SystemParams,
    settings: &SubgradientSettings,
    model: &impl FadingModel,
    eta_grid: &[f64],
) -> Result<Vec<EtaRow>> {
    params.validate()?;
    settings.validate()?;
    for w in eta_grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(invalid("eta_grid", "thresholds must be ascending"));
        }
    }
    if eta_grid.first().is_some_and(|&e| !(e > 0.0)) {
        return Err(invalid("eta_grid", "thresholds must be positive"));
    }
    Ok(eta_grid
        .par_iter()
        .map(|&eta| EtaRow {
            eta,
            result: subgradient_solve(params, eta, settings, model),
        })
        .collect())
}
