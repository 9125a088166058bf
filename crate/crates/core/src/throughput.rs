//! Frame throughput as a function of sensing time.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::power::FadingModel;
use crate::sensing::invert_pd;
use crate::solver::{subgradient_solve, SubgradientSettings, SystemParams};

/// Capacity scaled by the fraction of the frame left for data,
/// `(t_frame - tau) / t_frame * c_s`.
pub fn throughput(c_s: f64, tau: f64, t_frame: f64) -> Result<f64> {
    if !(t_frame > 0.0) {
        return Err(invalid("t_frame", format!("must be positive, got {t_frame}")));
    }
    if !(tau >= 0.0 && tau <= t_frame) {
        return Err(Error::Domain {
            function: "throughput",
            value: tau,
        });
    }
    Ok((t_frame - tau) / t_frame * c_s)
}

/// Log-spaced sensing times from `tau_min` to `tau_max` inclusive.
pub fn tau_grid(tau_min: f64, tau_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(tau_min > 0.0 && tau_max > tau_min) {
        return Err(invalid("tau_grid", format!("need 0 < tau_min < tau_max, got [{tau_min}, {tau_max}]")));
    }
    if points < 2 {
        return Err(invalid("tau_grid", "need at least two points"));
    }
    let step = (tau_max / tau_min).ln() / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|k| tau_min * (step * k as f64).exp()).collect();
    grid[0] = tau_min;
    grid[points - 1] = tau_max;
    Ok(grid)
}

/// Default sensing-time grid: 40 points over [0.1 ms, 20 ms].
pub fn default_tau_grid() -> Vec<f64> {
    tau_grid(1e-4, 2e-2, 40).expect("static grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// The detection target cannot be met with this many samples.
    Infeasible,
    /// The dual iteration ran out of iterations; values are from the best iterate.
    Unconverged,
    /// Numerical failure; values are NaN.
    Failed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Unconverged => "unconverged",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputPoint {
    pub tau: f64,
    pub n_samples: u64,
    pub eta_star: f64,
    pub pf: f64,
    pub pd: f64,
    pub c_s: f64,
    pub xi_s: f64,
    pub status: RowStatus,
}

impl ThroughputPoint {
    pub fn feasible(&self) -> bool {
        matches!(self.status, RowStatus::Ok | RowStatus::Unconverged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauSweep {
    pub pd_target: f64,
    pub rows: Vec<ThroughputPoint>,
    /// Index into `rows` of the largest throughput.
    pub best: usize,
}

impl TauSweep {
    pub fn best_row(&self) -> &ThroughputPoint {
        &self.rows[self.best]
    }
}

fn evaluate(
    params: &SystemParams,
    settings: &SubgradientSettings,
    model: &impl FadingModel,
    tau: f64,
    pd_target: f64,
) -> Result<ThroughputPoint> {
    let p = SystemParams { tau, pd_target, ..*params };
    let cfg = p.detector();
    let n_samples = cfg.num_samples()?;
    let mut row = ThroughputPoint {
        tau,
        n_samples,
        eta_star: f64::NAN,
        pf: f64::NAN,
        pd: f64::NAN,
        c_s: f64::NAN,
        xi_s: f64::NAN,
        status: RowStatus::Infeasible,
    };
    let eta = match invert_pd(pd_target, &cfg) {
        Ok(eta) => eta,
        Err(Error::Infeasible { .. }) => return Ok(row),
        Err(e) => return Err(e),
    };
    row.eta_star = eta;
    match subgradient_solve(&p, eta, settings, model) {
        Ok(r) => {
            row.pf = r.pf;
            row.pd = r.pd;
            row.c_s = r.c_s;
            row.xi_s = throughput(r.c_s, tau, p.t_frame)?;
            row.status = if r.converged { RowStatus::Ok } else { RowStatus::Unconverged };
        }
        Err(_) => row.status = RowStatus::Failed,
    }
    Ok(row)
}

/// Throughput over a sensing-time grid at a fixed detection target.
///
/// Each row uses the largest threshold meeting `pd_target` with the
/// row's sample count. Rows that cannot meet the target are kept and
/// marked. The best row is the largest `xi_s` among feasible rows, ties
/// going to the shorter sensing time.
pub fn sweep_tau(
    params: &SystemParams,
    settings: &SubgradientSettings,
    model: &impl FadingModel,
    tau_grid: &[f64],
    pd_target: f64,
) -> Result<TauSweep> {
    params.validate()?;
    settings.validate()?;
    if !(pd_target > 0.0 && pd_target < 1.0) {
        return Err(invalid("pd_target", format!("must lie in (0, 1), got {pd_target}")));
    }
    if tau_grid.is_empty() {
        return Err(invalid("tau_grid", "empty grid"));
    }
    for w in tau_grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(invalid("tau_grid", "sensing times must be ascending"));
        }
    }
    if !(tau_grid[0] > 0.0 && tau_grid[tau_grid.len() - 1] < params.t_frame) {
        return Err(invalid("tau_grid", "sensing times must lie inside (0, t_frame)"));
    }
    let rows = tau_grid
        .par_iter()
        .map(|&tau| evaluate(params, settings, model, tau, pd_target))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if !row.feasible() {
            continue;
        }
        match best {
            Some(b) if row.xi_s <= rows[b].xi_s => {}
            _ => best = Some(i),
        }
    }
    let best = best.ok_or(Error::AllInfeasible)?;
    Ok(TauSweep { pd_target, rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::QuadratureSpec;
    use crate::power::RayleighFading;

    fn model() -> RayleighFading {
        RayleighFading::new(1.0, QuadratureSpec::default()).unwrap()
    }

    #[test]
    fn frame_fraction() {
        assert_eq!(throughput(2.0, 0.1, 0.1).unwrap(), 0.0);
        assert_eq!(throughput(2.0, 0.0, 0.1).unwrap(), 2.0);
        assert!((throughput(3.0, 1e-3, 0.1).unwrap() - 0.99 * 3.0).abs() < 1e-12);
        assert!(matches!(throughput(1.0, 0.2, 0.1), Err(Error::Domain { .. })));
        assert!(throughput(1.0, -1e-3, 0.1).is_err());
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = default_tau_grid();
        assert_eq!(g.len(), 40);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[39], 2e-2);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(tau_grid(1.0, 0.5, 4).is_err());
        assert!(tau_grid(1e-3, 1e-2, 1).is_err());
    }

    #[test]
    fn sweep_has_interior_peak_and_falling_false_alarm() {
        let params = SystemParams::default();
        let grid = tau_grid(1e-4, 2e-2, 12).unwrap();
        let sweep = sweep_tau(&params, &SubgradientSettings::default(), &model(), &grid, 0.9).unwrap();
        assert!(sweep.best > 0 && sweep.best < grid.len() - 1, "best = {}", sweep.best);
        let feasible: Vec<_> = sweep.rows.iter().filter(|r| r.feasible()).collect();
        assert!(feasible.windows(2).all(|w| w[1].pf < w[0].pf));
        for r in &feasible {
            assert!(r.xi_s <= r.c_s);
            assert!((r.xi_s - (params.t_frame - r.tau) / params.t_frame * r.c_s).abs() < 1e-12);
            assert_eq!(r.status, RowStatus::Ok);
        }
    }

    #[test]
    fn short_windows_are_marked_infeasible() {
        let params = SystemParams::default();
        // tau * fs = 0.6 and 3 samples
        let grid = [1e-7, 5e-7, 1e-3];
        let sweep = sweep_tau(&params, &SubgradientSettings::default(), &model(), &grid, 0.99).unwrap();
        assert_eq!(sweep.rows[1].status, RowStatus::Infeasible);
        assert!(sweep.rows[1].xi_s.is_nan());
        assert_eq!(sweep.best, 2);

        let all_bad = sweep_tau(&params, &SubgradientSettings::default(), &model(), &[5e-7], 0.99);
        assert_eq!(all_bad, Err(Error::AllInfeasible));
    }

    #[test]
    fn rejects_bad_grids() {
        let params = SystemParams::default();
        let s = SubgradientSettings::default();
        assert!(sweep_tau(&params, &s, &model(), &[2e-3, 1e-3], 0.9).is_err());
        assert!(sweep_tau(&params, &s, &model(), &[1e-3, 0.2], 0.9).is_err());
        assert!(sweep_tau(&params, &s, &model(), &[], 0.9).is_err());
        assert!(sweep_tau(&params, &s, &model(), &[1e-3], 1.0).is_err());
    }
}
