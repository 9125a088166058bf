//! Energy-detector statistics.
//!
//! The detector averages `N = round(tau * fs)` received sample energies and
//! compares the average to a threshold `eta`. False-alarm and detection
//! probabilities use the central-limit approximation for complex samples:
//!
//! ```text
//! pf = Q((eta/n0 - 1) * sqrt(N))
//! pd = Q((eta/n0 - gamma - 1) * sqrt(N / (2 gamma + 1)))
//! ```
//!
//! where `gamma` is the PU signal-to-noise ratio seen by the detector.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{invalid, Error, Result};

/// Standard normal tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Rational approximation of the standard normal quantile (Acklam).
/// Relative error around 1e-9; only used to seed [`q_inverse`].
#[allow(clippy::excessive_precision)]
fn normal_quantile_seed(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Inverse of [`q_function`]: returns `x` with `Q(x) = p`.
///
/// Seeded by a rational approximation and refined with Newton steps kept
/// inside a shrinking bisection bracket.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            function: "q_inverse",
            value: p,
        });
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Q(x) = p  <=>  Phi(-x) = p
    let mut x = -normal_quantile_seed(p);
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let r = q_function(x) - p;
        if r == 0.0 {
            break;
        }
        // Q is decreasing: Q(x) > p means the root lies to the right.
        if r > 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let newton = x + r / normal_pdf(x);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-16 * x.abs().max(1.0) || hi - lo <= 1e-15 {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Sensing configuration: noise power, sensing time, sample rate and the
/// SNR of the primary signal at the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub n0: f64,
    pub tau: f64,
    pub fs: f64,
    pub gamma: f64,
}

impl DetectorConfig {
    pub fn new(n0: f64, tau: f64, fs: f64, gamma: f64) -> Result<Self> {
        let cfg = DetectorConfig { n0, tau, fs, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return Err(invalid("n0", format!("must be positive, got {}", self.n0)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(invalid("fs", format!("must be positive, got {}", self.fs)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid(
                "gamma",
                format!("must be non-negative, got {}", self.gamma),
            ));
        }
        self.num_samples().map(|_| ())
    }

    /// Number of samples in the sensing window, `round(tau * fs)`.
    pub fn num_samples(&self) -> Result<u64> {
        let product = self.tau * self.fs;
        let n = product.round();
        if n < 1.0 {
            return Err(Error::WindowTooShort(product));
        }
        Ok(n as u64)
    }

    pub fn with_tau(self, tau: f64) -> Self {
        DetectorConfig { tau, ..self }
    }
}

/// A sensing operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorPoint {
    pub eta: f64,
    pub n_samples: u64,
    pub pf: f64,
    pub pd: f64,
}

impl DetectorPoint {
    pub fn evaluate(eta: f64, cfg: &DetectorConfig) -> Result<Self> {
        Ok(DetectorPoint {
            eta,
            n_samples: cfg.num_samples()?,
            pf: prob_false_alarm(eta, cfg)?,
            pd: prob_detection(eta, cfg)?,
        })
    }
}

fn check_threshold(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(invalid("eta", format!("threshold must be positive, got {eta}")))
    }
}

pub fn prob_false_alarm(eta: f64, cfg: &DetectorConfig) -> Result<f64> {
    check_threshold(eta)?;
    let n = cfg.num_samples()? as f64;
    Ok(q_function((eta / cfg.n0 - 1.0) * n.sqrt()))
}

pub fn prob_detection(eta: f64, cfg: &DetectorConfig) -> Result<f64> {
    check_threshold(eta)?;
    let n = cfg.num_samples()? as f64;
    let g = cfg.gamma;
    Ok(q_function(
        (eta / cfg.n0 - g - 1.0) * (n / (2.0 * g + 1.0)).sqrt(),
    ))
}

/// Largest threshold whose detection probability still meets `pd_target`.
pub fn invert_pd(pd_target: f64, cfg: &DetectorConfig) -> Result<f64> {
    if !(pd_target > 0.0 && pd_target < 1.0) {
        return Err(invalid(
            "pd_target",
            format!("must lie strictly between 0 and 1, got {pd_target}"),
        ));
    }
    let n = cfg.num_samples()? as f64;
    let g = cfg.gamma;
    let eta_max = cfg.n0 * (g + 1.0 + q_inverse(pd_target)? * ((2.0 * g + 1.0) / n).sqrt());
    if eta_max <= 0.0 {
        return Err(Error::Infeasible { pd_target, eta_max });
    }
    Ok(eta_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tail of the standard normal density by composite Simpson on
    /// `[x, x + 40]`, used as an oracle independent of `erfc`.
    fn q_by_simpson(x: f64) -> f64 {
        let n = 400_000;
        let h = 40.0 / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let mut s = f(x) + f(x + 40.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(x + i as f64 * h);
        }
        s * h / 3.0
    }

    fn cfg(n: f64, gamma: f64) -> DetectorConfig {
        DetectorConfig::new(1.0, n / 1e6, 1e6, gamma).unwrap()
    }

    #[test]
    fn q_function_matches_quadrature_oracle() {
        for &x in &[-8.0, -3.0, -1.0, 0.0, 0.5, 1.5811, 2.0, 4.0, 8.0] {
            let oracle = if x < 0.0 { 1.0 - q_by_simpson(-x) } else { q_by_simpson(x) };
            assert!((q_function(x) - oracle).abs() < 1e-12, "x = {x}");
        }
        // frozen from the Simpson oracle
        assert!((q_function(1.5811) - 0.0569275874).abs() < 1e-9);
        assert_eq!(q_function(0.0), 0.5);
        assert_eq!(q_function(f64::INFINITY), 0.0);
        assert_eq!(q_function(f64::NEG_INFINITY), 1.0);
    }

    #[test]
    fn q_function_is_strictly_decreasing() {
        // below -6 the result is within an ulp of one
        let mut prev = q_function(-6.0);
        for i in 1..=1400 {
            let q = q_function(-6.0 + i as f64 * 0.01);
            assert!(q < prev);
            prev = q;
        }
    }

    #[test]
    fn q_inverse_round_trips() {
        assert_eq!(q_inverse(0.5).unwrap(), 0.0);
        for &p in &[1e-12, 1e-6, 0.01, 0.05692, 0.3, 0.9, 0.99, 1.0 - 1e-9] {
            let x = q_inverse(p).unwrap();
            assert!(((q_function(x) - p) / p).abs() < 1e-9, "p = {p}");
        }
        assert!((q_inverse(0.05692).unwrap() - 1.5811664).abs() < 1e-6);
        assert!(q_inverse(0.9).unwrap() < 0.0);
    }

    #[test]
    fn q_inverse_rejects_non_probabilities() {
        for &p in &[0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(q_inverse(p), Err(Error::Domain { .. })));
        }
    }

    #[test]
    fn sample_count_rounding() {
        let c = DetectorConfig { n0: 1.0, tau: 1e-3, fs: 6e6, gamma: 0.1 };
        assert_eq!(c.num_samples().unwrap(), 6000);
        let one = DetectorConfig { tau: 1.0, fs: 1.0, ..c };
        assert_eq!(one.num_samples().unwrap(), 1);
        let short = DetectorConfig { tau: 0.4, fs: 1.0, ..c };
        assert!(matches!(short.num_samples(), Err(Error::WindowTooShort(_))));
        assert!(DetectorConfig::new(1.0, 0.4, 1.0, 0.0).is_err());
    }

    #[test]
    fn false_alarm_reference_points() {
        let c = cfg(1000.0, 0.0);
        assert_eq!(prob_false_alarm(1.0, &c).unwrap(), 0.5);
        let pf = prob_false_alarm(1.05, &c).unwrap();
        assert!((pf - 0.0569231).abs() < 1e-6);
        assert!(prob_false_alarm(10.0, &c).unwrap() < 1e-12);
        assert!(prob_false_alarm(0.0, &c).is_err());
    }

    #[test]
    fn detection_reference_points() {
        let c = cfg(6000.0, 0.1);
        assert_eq!(prob_detection(1.1, &c).unwrap(), 0.5);
        let c0 = cfg(6000.0, 0.0);
        for i in 1..200 {
            let eta = 0.01 * i as f64;
            assert_eq!(
                prob_detection(eta, &c0).unwrap(),
                prob_false_alarm(eta, &c0).unwrap()
            );
        }
    }

    #[test]
    fn probabilities_are_ordered_and_monotone() {
        for &(n, g) in &[(10.0, 0.5), (1000.0, 0.1), (6000.0, 0.1), (6000.0, 0.01)] {
            let c = cfg(n, g);
            let (mut pf_prev, mut pd_prev) = (2.0, 2.0);
            for i in 0..200 {
                let eta = 10f64.powf(-1.0 + i as f64 * 1.5 / 199.0);
                let pf = prob_false_alarm(eta, &c).unwrap();
                let pd = prob_detection(eta, &c).unwrap();
                assert!((0.0..=1.0).contains(&pf) && (0.0..=1.0).contains(&pd));
                // strict where representable; saturated tails compare equal
                assert!(pf <= pf_prev && pd <= pd_prev);
                if pf > 0.0 && pf < 1.0 && pd < 1.0 {
                    assert!(pd > pf, "n={n} g={g} eta={eta}");
                }
                pf_prev = pf;
                pd_prev = pd;
            }
        }
    }

    #[test]
    fn invert_pd_closed_form_and_round_trip() {
        let c = cfg(6000.0, 0.1);
        assert!((invert_pd(0.5, &c).unwrap() - 1.1).abs() < 1e-15);
        let eta = invert_pd(0.9, &c).unwrap();
        let expected = 1.1 + q_inverse(0.9).unwrap() * (1.2f64 / 6000.0).sqrt();
        assert!((eta - expected).abs() < 1e-15);
        assert!(eta < 1.1);
        for &p in &[0.01, 0.5, 0.9, 0.95, 0.99] {
            let eta = invert_pd(p, &c).unwrap();
            assert!((prob_detection(eta, &c).unwrap() - p).abs() < 1e-9);
            assert!(prob_detection(0.999 * eta, &c).unwrap() >= p);
        }
        assert!(invert_pd(0.9, &c).unwrap() >= invert_pd(0.95, &c).unwrap());
    }

    #[test]
    fn invert_pd_reports_infeasible_targets() {
        let c = DetectorConfig::new(1.0, 5e-7, 6e6, 0.1).unwrap();
        assert_eq!(c.num_samples().unwrap(), 3);
        assert!(matches!(invert_pd(0.99, &c), Err(Error::Infeasible { .. })));
        assert!(invert_pd(1.0, &c).is_err());
    }
}
