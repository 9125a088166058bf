//! Water-filling power policies with a peak-interference cap, and the
//! fading-averaged quantities the solver needs: average transmit power and
//! the ergodic capacities of the two sensing branches.

use std::f64::consts::LN_2;

use crate::error::{invalid, Result};
use crate::fading::{expect_1d, laguerre_nodes, nodes_1d, FadingLattice, FadingState, QuadratureSpec};
use crate::special::scaled_exp_e1;

/// How the peak-interference limit is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterferenceMode {
    /// Only the power used after a positive sensing decision is capped.
    #[default]
    P1Only,
    /// Both branches are capped at `i_pk / g_sp`.
    Mixture,
}

impl InterferenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InterferenceMode::P1Only => "p1_only",
            InterferenceMode::Mixture => "mixture",
        }
    }
}

impl std::str::FromStr for InterferenceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "p1_only" => Ok(InterferenceMode::P1Only),
            "mixture" => Ok(InterferenceMode::Mixture),
            other => Err(format!("expected `p1_only` or `mixture`, got `{other}`")),
        }
    }
}

/// Probability of transmitting with the undetected-branch power (`alpha`)
/// and with the detected-branch power (`beta`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl MixtureWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0) || (alpha + beta - 1.0).abs() > 1e-12 {
            return Err(invalid(
                "weights",
                format!("alpha and beta must be non-negative and sum to one, got {alpha} + {beta}"),
            ));
        }
        Ok(MixtureWeights { alpha, beta })
    }

    /// Weights for PU activity probability `pi1` and detector rates
    /// `(pf, pd)`.
    pub fn from_detection(pf: f64, pd: f64, pi1: f64) -> Self {
        let pi0 = 1.0 - pi1;
        MixtureWeights {
            alpha: pi0 * (1.0 - pf) + pi1 * (1.0 - pd),
            beta: pi0 * pf + pi1 * pd,
        }
    }
}

/// Water-filling level: transmit `(1/(lambda ln 2) - 1/h)^+`.
pub fn waterfill(h: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", format!("dual price must be positive, got {lambda}")));
    }
    Ok(waterfill_unchecked(h, lambda * LN_2))
}

#[inline]
fn waterfill_unchecked(h: f64, cutoff: f64) -> f64 {
    if h <= cutoff {
        0.0
    } else {
        1.0 / cutoff - 1.0 / h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPolicy {
    pub lambda: f64,
    pub i_pk: f64,
    pub mode: InterferenceMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPowers {
    pub p0: f64,
    pub p1: f64,
}

impl PowerPolicy {
    pub fn new(lambda: f64, i_pk: f64, mode: InterferenceMode) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("dual price must be positive and finite, got {lambda}")));
        }
        if !(i_pk > 0.0) {
            return Err(invalid("i_pk", format!("must be positive, got {i_pk}")));
        }
        Ok(PowerPolicy { lambda, i_pk, mode })
    }

    /// Cut-off SNR below which nothing is transmitted.
    pub fn gamma_cutoff(&self) -> f64 {
        self.lambda * LN_2
    }

    /// Uncapped water-filling power.
    pub fn water_level(&self, h: f64) -> f64 {
        waterfill_unchecked(h, self.gamma_cutoff())
    }

    pub fn branch_powers(&self, state: FadingState) -> BranchPowers {
        let p = self.water_level(state.h);
        let capped = if state.g_sp > 0.0 { p.min(self.i_pk / state.g_sp) } else { p };
        match self.mode {
            InterferenceMode::P1Only => BranchPowers { p0: p, p1: capped },
            InterferenceMode::Mixture => BranchPowers { p0: capped, p1: capped },
        }
    }

    /// Conditional expectations over a unit-mean exponential `g_sp` of the
    /// capped power at SNR `h`.
    fn capped_given_h(&self, h: f64) -> CappedMoments {
        let p = self.water_level(h);
        if p <= 0.0 {
            return CappedMoments::default();
        }
        let a = self.i_pk / p;
        let tail = (-a).exp();
        if tail == 0.0 {
            let rate = (h * p).ln_1p() / LN_2;
            return CappedMoments { power: p, rate, interference: p, exceed: 0.0 };
        }
        let s_a = scaled_exp_e1(a);
        CappedMoments {
            // p (1 - e^-a) + i_pk E1(a)
            power: -p * (-a).exp_m1() + self.i_pk * tail * s_a,
            // ∫_a^∞ ln(1 + h i_pk / g) e^-g dg folded into closed form
            rate: ((h * p).ln_1p() + tail * (scaled_exp_e1(a + h * self.i_pk) - s_a)) / LN_2,
            interference: p * (-(-a).exp_m1() - a * tail) + self.i_pk * tail,
            exceed: tail,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct CappedMoments {
    power: f64,
    rate: f64,
    interference: f64,
    /// `P(g_sp > i_pk / p)`
    exceed: f64,
}

/// Peak-interference bookkeeping for a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceReport {
    /// `E[g_sp (alpha p0 + beta p1)]`
    pub mean_interference: f64,
    /// Probability that `g_sp (alpha p0 + beta p1)` exceeds `i_pk`.
    pub violation_probability: f64,
    /// Largest `g_sp (alpha p0 + beta p1) / i_pk` over the evaluation grid.
    pub max_ratio: f64,
}

/// Fading-averaged aggregates of a power policy.
pub trait FadingModel: Sync {
    /// Average transmit power `alpha E[p0] + beta E[p1]`.
    fn avg_power(&self, policy: &PowerPolicy, weights: MixtureWeights) -> Result<f64>;

    /// Ergodic capacities `(C0, C1)` in bits/s/Hz of the two branches.
    fn branch_capacities(&self, policy: &PowerPolicy) -> Result<(f64, f64)>;

    fn interference_diagnostics(&self, policy: &PowerPolicy, weights: MixtureWeights) -> Result<InterferenceReport>;
}

/// Continuous Rayleigh fading: `h` exponential with mean `1/n0`, `g_sp`
/// exponential with unit mean, independent.
///
/// The `g_sp` integral of the capped branch is done in closed form via the
/// exponential integral; the remaining `h` integral uses the composite
/// quadrature with a breakpoint at the cut-off SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighFading {
    pub n0: f64,
    pub quadrature: QuadratureSpec,
}

impl RayleighFading {
    pub fn new(n0: f64, quadrature: QuadratureSpec) -> Result<Self> {
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(invalid("n0", format!("must be positive, got {n0}")));
        }
        quadrature.validate()?;
        Ok(RayleighFading { n0, quadrature })
    }

    fn expect(&self, policy: &PowerPolicy, f: impl Fn(f64) -> f64) -> Result<f64> {
        expect_1d(f, self.n0, &[policy.gamma_cutoff()], &self.quadrature)
    }
}

impl FadingModel for RayleighFading {
    fn avg_power(&self, policy: &PowerPolicy, w: MixtureWeights) -> Result<f64> {
        match policy.mode {
            InterferenceMode::P1Only => {
                let uncapped = if w.alpha > 0.0 { self.expect(policy, |h| policy.water_level(h))? } else { 0.0 };
                let capped = if w.beta > 0.0 { self.expect(policy, |h| policy.capped_given_h(h).power)? } else { 0.0 };
                Ok(w.alpha * uncapped + w.beta * capped)
            }
            InterferenceMode::Mixture => self.expect(policy, |h| policy.capped_given_h(h).power),
        }
    }

    fn branch_capacities(&self, policy: &PowerPolicy) -> Result<(f64, f64)> {
        let c1 = self.expect(policy, |h| policy.capped_given_h(h).rate)?;
        let c0 = match policy.mode {
            InterferenceMode::P1Only => self.expect(policy, |h| (h * policy.water_level(h)).ln_1p() / LN_2)?,
            InterferenceMode::Mixture => c1,
        };
        Ok((c0, c1))
    }

    fn interference_diagnostics(&self, policy: &PowerPolicy, w: MixtureWeights) -> Result<InterferenceReport> {
        let mean_interference = match policy.mode {
            InterferenceMode::P1Only => self.expect(policy, |h| {
                w.alpha * policy.water_level(h) + w.beta * policy.capped_given_h(h).interference
            })?,
            InterferenceMode::Mixture => self.expect(policy, |h| policy.capped_given_h(h).interference)?,
        };
        // beyond g_sp = i_pk / p0 the uncapped share alone pushes the
        // mixture over the limit, so exceedance needs alpha > 0
        let violation_probability = match policy.mode {
            InterferenceMode::P1Only if w.alpha > 0.0 => self.expect(policy, |h| policy.capped_given_h(h).exceed)?,
            _ => 0.0,
        };
        let mut max_ratio: f64 = 0.0;
        let h_grid = nodes_1d(self.n0, &[policy.gamma_cutoff()], self.quadrature.nodes_1d);
        let g_grid = laguerre_nodes(self.quadrature.nodes_2d);
        for &(h, _) in &h_grid {
            for &(g, _) in &g_grid {
                let b = policy.branch_powers(FadingState { h, g_sp: g });
                max_ratio = max_ratio.max(g * (w.alpha * b.p0 + w.beta * b.p1) / policy.i_pk);
            }
        }
        Ok(InterferenceReport {
            mean_interference,
            violation_probability,
            max_ratio,
        })
    }
}

impl FadingModel for FadingLattice {
    fn avg_power(&self, policy: &PowerPolicy, w: MixtureWeights) -> Result<f64> {
        Ok(self
            .states
            .iter()
            .map(|&(s, m)| {
                let b = policy.branch_powers(s);
                m * (w.alpha * b.p0 + w.beta * b.p1)
            })
            .sum())
    }

    fn branch_capacities(&self, policy: &PowerPolicy) -> Result<(f64, f64)> {
        let mut c = (0.0, 0.0);
        for &(s, m) in &self.states {
            let b = policy.branch_powers(s);
            c.0 += m * (s.h * b.p0).ln_1p() / LN_2;
            c.1 += m * (s.h * b.p1).ln_1p() / LN_2;
        }
        Ok(c)
    }

    fn interference_diagnostics(&self, policy: &PowerPolicy, w: MixtureWeights) -> Result<InterferenceReport> {
        let mut report = InterferenceReport {
            mean_interference: 0.0,
            violation_probability: 0.0,
            max_ratio: 0.0,
        };
        for &(s, m) in &self.states {
            let b = policy.branch_powers(s);
            let ratio = s.g_sp * (w.alpha * b.p0 + w.beta * b.p1) / policy.i_pk;
            report.mean_interference += m * ratio * policy.i_pk;
            if ratio > 1.0 + 1e-12 {
                report.violation_probability += m;
            }
            report.max_ratio = report.max_ratio.max(ratio);
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::expect_2d;

    const E1_ONE: f64 = 0.219_383_934_395_520_3;

    fn policy(cutoff: f64, i_pk: f64, mode: InterferenceMode) -> PowerPolicy {
        PowerPolicy::new(cutoff / LN_2, i_pk, mode).unwrap()
    }

    fn rayleigh() -> RayleighFading {
        RayleighFading::new(1.0, QuadratureSpec::default()).unwrap()
    }

    #[test]
    fn waterfill_reference_points() {
        let lambda = 1.0 / LN_2;
        assert_eq!(waterfill(1.0, lambda).unwrap(), 0.0);
        assert_eq!(waterfill(0.3, lambda).unwrap(), 0.0);
        assert!((waterfill(4.0, lambda).unwrap() - 0.75).abs() < 1e-15);
        assert!(waterfill(4.0, 0.0).is_err());
        let mut prev = 0.0;
        for i in 0..1000 {
            let p = waterfill(i as f64 * 0.01, lambda).unwrap();
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn branch_power_reference_points() {
        let p = policy(1.0, 1.0, InterferenceMode::P1Only);
        let b = p.branch_powers(FadingState { h: 4.0, g_sp: 2.0 });
        assert!((b.p0 - 0.75).abs() < 1e-15 && (b.p1 - 0.5).abs() < 1e-15);
        let b = p.branch_powers(FadingState { h: 4.0, g_sp: 0.0 });
        assert_eq!(b.p0, b.p1);
        let b = p.branch_powers(FadingState { h: 4.0, g_sp: 1.0 });
        assert_eq!(b.p0, b.p1);
        let m = policy(1.0, 1.0, InterferenceMode::Mixture);
        let b = m.branch_powers(FadingState { h: 4.0, g_sp: 2.0 });
        assert!((b.p0 - 0.5).abs() < 1e-15 && (b.p1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        for &(pf, pd, pi1) in &[(0.0, 0.0, 0.4), (0.3, 0.9, 0.4), (1.0, 1.0, 0.0), (0.123, 0.456, 0.789)] {
            let w = MixtureWeights::from_detection(pf, pd, pi1);
            assert!((w.alpha + w.beta - 1.0).abs() < 1e-12);
            assert!(MixtureWeights::new(w.alpha, w.beta).is_ok());
        }
        assert!(MixtureWeights::new(0.5, 0.6).is_err());
    }

    #[test]
    fn average_power_closed_form_anchor() {
        let m = rayleigh();
        let p = policy(1.0, 1.0, InterferenceMode::P1Only);
        let pbar = m.avg_power(&p, MixtureWeights::new(1.0, 0.0).unwrap()).unwrap();
        let exact = (-1.0f64).exp() - E1_ONE;
        assert!(((pbar - exact) / exact).abs() < 1e-10);
        let uncapped = policy(1.0, 1e300, InterferenceMode::P1Only);
        let half = m.avg_power(&uncapped, MixtureWeights::new(0.5, 0.5).unwrap()).unwrap();
        assert!(((half - exact) / exact).abs() < 1e-10);
        let huge = policy(50.0, 1.0, InterferenceMode::P1Only);
        assert!(m.avg_power(&huge, MixtureWeights::new(0.6, 0.4).unwrap()).unwrap() < 1e-20);
    }

    #[test]
    fn capacity_closed_form_anchor() {
        let m = rayleigh();
        let (c0, c1) = m.branch_capacities(&policy(1.0, f64::INFINITY, InterferenceMode::P1Only)).unwrap();
        let exact = E1_ONE / LN_2;
        assert!(((c0 - exact) / exact).abs() < 1e-10);
        assert!(((c1 - exact) / exact).abs() < 1e-10);
        let (c0, c1) = m.branch_capacities(&policy(1.0, 1.0, InterferenceMode::P1Only)).unwrap();
        assert!(c1 < c0);
        let (c0, c1) = m.branch_capacities(&policy(800.0, 1.0, InterferenceMode::P1Only)).unwrap();
        assert_eq!((c0, c1), (0.0, 0.0));
    }

    #[test]
    fn semi_analytic_matches_nested_quadrature() {
        // the g_sp integral in closed form vs. nested 2-D quadrature with a
        // breakpoint at the cap
        let m = rayleigh();
        let spec = QuadratureSpec::default();
        for &(cutoff, i_pk) in &[(0.03, 1.0), (0.5, 0.2), (1.0, 3.0)] {
            let p = policy(cutoff, i_pk, InterferenceMode::P1Only);
            let g_break = |h: f64| {
                let w = p.water_level(h);
                if w > 0.0 { vec![i_pk / w] } else { vec![] }
            };
            let power = expect_2d(|h, g| p.branch_powers(FadingState { h, g_sp: g }).p1, 1.0, &[cutoff], g_break, &spec).unwrap();
            let rate = expect_2d(
                |h, g| (h * p.branch_powers(FadingState { h, g_sp: g }).p1).ln_1p() / LN_2,
                1.0,
                &[cutoff],
                g_break,
                &spec,
            )
            .unwrap();
            let pbar = m.avg_power(&p, MixtureWeights::new(0.0, 1.0).unwrap()).unwrap();
            let (_, c1) = m.branch_capacities(&p).unwrap();
            assert!(((power - pbar) / pbar).abs() < 1e-9, "power {power} vs {pbar}");
            assert!(((rate - c1) / c1).abs() < 1e-9, "rate {rate} vs {c1}");
        }
    }

    #[test]
    fn aggregates_are_monotone_in_the_dual_price() {
        let m = rayleigh();
        let w = MixtureWeights::from_detection(0.2, 0.9, 0.4);
        let (mut prev_p, mut prev_c0, mut prev_c1) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for i in 0..40 {
            let lambda = 10f64.powf(-3.0 + i as f64 * 0.1);
            let p = PowerPolicy::new(lambda, 1.0, InterferenceMode::P1Only).unwrap();
            let pbar = m.avg_power(&p, w).unwrap();
            let (c0, c1) = m.branch_capacities(&p).unwrap();
            assert!(pbar < prev_p);
            assert!(c0 <= prev_c0 && c1 <= prev_c1 && c0 >= c1 && c1 >= 0.0);
            prev_p = pbar;
            prev_c0 = c0;
            prev_c1 = c1;
        }
    }

    #[test]
    fn larger_cap_never_lowers_c1() {
        let m = rayleigh();
        let mut prev = 0.0;
        for k in 0..10 {
            let i_pk = 0.01 * 2f64.powi(k);
            let (_, c1) = m.branch_capacities(&policy(0.05, i_pk, InterferenceMode::P1Only)).unwrap();
            assert!(c1 >= prev);
            prev = c1;
        }
    }

    #[test]
    fn kkt_stationarity_where_uncapped() {
        let p = policy(0.03, 1.0, InterferenceMode::P1Only);
        for &h in &[0.05, 0.3, 1.0, 4.0] {
            let power = p.water_level(h);
            assert!(power > 0.0);
            let marginal = h / ((1.0 + h * power) * LN_2);
            assert!((marginal - p.lambda).abs() < 1e-6 * p.lambda);
        }
    }

    #[test]
    fn mixture_mode_never_violates_the_peak_limit() {
        let m = rayleigh();
        let w = MixtureWeights::from_detection(0.3, 0.9, 0.4);
        let r = m.interference_diagnostics(&policy(0.03, 1.0, InterferenceMode::Mixture), w).unwrap();
        assert_eq!(r.violation_probability, 0.0);
        assert!(r.max_ratio <= 1.0 + 1e-12);
        let r = m.interference_diagnostics(&policy(0.03, 1.0, InterferenceMode::P1Only), w).unwrap();
        assert!(r.violation_probability > 0.0 && r.violation_probability < 1.0);
        assert!(r.max_ratio > 1.0);
        let r = m.interference_diagnostics(&policy(800.0, 1.0, InterferenceMode::P1Only), w).unwrap();
        assert_eq!((r.mean_interference, r.violation_probability, r.max_ratio), (0.0, 0.0, 0.0));
    }

    #[test]
    fn lattice_model_matches_direct_sums() {
        let lattice = FadingLattice::equal_mass(1.0, 8).unwrap();
        let p = policy(0.5, 0.7, InterferenceMode::P1Only);
        let w = MixtureWeights::from_detection(0.1, 0.8, 0.4);
        let mut pbar = 0.0;
        for &(s, m) in &lattice.states {
            let b = p.branch_powers(s);
            assert!(b.p0 >= b.p1 && b.p1 >= 0.0);
            pbar += m * (w.alpha * b.p0 + w.beta * b.p1);
        }
        assert!((lattice.avg_power(&p, w).unwrap() - pbar).abs() < 1e-14);
        let (c0, c1) = lattice.branch_capacities(&p).unwrap();
        assert!(c0 >= c1);
    }
}
