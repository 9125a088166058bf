//! Monte Carlo and brute-force reference computations.
//!
//! Randomness is split into a fixed number of streams, each a jumped copy
//! of one xoshiro256++ generator. Work is partitioned by stream, so results
//! depend only on the seed and the stream count, not on thread scheduling.

use std::f64::consts::LN_2;

use rand::{Rng, RngCore};
use rand_distr::{Exp1, StandardNormal};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fading::{FadingLattice, FadingState};
use crate::power::{BranchPowers, InterferenceMode, MixtureWeights, PowerPolicy};
use crate::sensing::{prob_detection, prob_false_alarm, DetectorConfig};
use crate::solver::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub streams: usize,
}

impl Default for RngSpec {
    fn default() -> Self {
        RngSpec { seed: 20_240_917, streams: 16 }
    }
}

impl RngSpec {
    pub fn validate(&self) -> Result<()> {
        if self.streams == 0 || self.streams > 4096 {
            return Err(invalid("streams", format!("must lie in [1, 4096], got {}", self.streams)));
        }
        Ok(())
    }

    /// Generators for streams `offset .. offset + count`.
    fn generators(&self, offset: usize, count: usize) -> Vec<Xoshiro256PlusPlus> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(self.seed);
        for _ in 0..offset {
            rng.jump();
        }
        (0..count)
            .map(|_| {
                let current = rng.clone();
                rng.jump();
                current
            })
            .collect()
    }
}

/// Share of `total` handled by stream `i` of `streams`.
fn chunk(total: usize, streams: usize, i: usize) -> usize {
    total * (i + 1) / streams - total * i / streams
}

/// Mean and standard error of a sampled quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Distance from `value` in standard errors.
    pub fn sigmas(&self, value: f64) -> f64 {
        if self.stderr == 0.0 {
            if value == self.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (value - self.mean).abs() / self.stderr
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }

    fn estimate(&self) -> Estimate {
        let var = if self.n > 1.0 { self.m2 / (self.n - 1.0) } else { 0.0 };
        Estimate {
            mean: self.mean,
            stderr: (var / self.n).sqrt(),
        }
    }
}

/// Empirical rate with its standard error. An all-or-nothing outcome gets
/// the error of half a hit instead of zero.
fn binomial(hits: u64, trials: usize) -> Estimate {
    let n = trials as f64;
    let p = hits as f64 / n;
    let q = p.clamp(0.5 / n, 1.0 - 0.5 / n);
    Estimate {
        mean: p,
        stderr: (q * (1.0 - q) / n).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorEstimate {
    pub eta: f64,
    pub pf: Estimate,
    pub pd: Estimate,
}

pub const MIN_DETECTOR_TRIALS: usize = 10_000;

/// Average received energy over `n` samples. Under H1 each sample carries
/// a unit-modulus symbol with a uniformly random quarter-turn phase.
fn energy_statistic(rng: &mut Xoshiro256PlusPlus, n: u64, noise_scale: f64, amplitude: f64) -> f64 {
    let mut sum = 0.0;
    if amplitude == 0.0 {
        // |w|^2 of a circular Gaussian sample is exponential
        for _ in 0..n {
            sum += rng.sample::<f64, _>(Exp1);
        }
        return sum * 2.0 * noise_scale * noise_scale / n as f64;
    }
    let mut bits = 0u64;
    for k in 0..n {
        if k % 32 == 0 {
            bits = rng.next_u64();
        }
        let (s_re, s_im) = match bits & 3 {
            0 => (amplitude, 0.0),
            1 => (0.0, amplitude),
            2 => (-amplitude, 0.0),
            _ => (0.0, -amplitude),
        };
        bits >>= 2;
        let re = s_re + noise_scale * rng.sample::<f64, _>(StandardNormal);
        let im = s_im + noise_scale * rng.sample::<f64, _>(StandardNormal);
        sum += re * re + im * im;
    }
    sum / n as f64
}

fn simulate_statistics(cfg: &DetectorConfig, trials: usize, signal: bool, gens: Vec<Xoshiro256PlusPlus>) -> Result<Vec<f64>> {
    let n = cfg.num_samples()?;
    let noise_scale = (cfg.n0 / 2.0).sqrt();
    let amplitude = if signal { (cfg.gamma * cfg.n0).sqrt() } else { 0.0 };
    let streams = gens.len();
    let parts: Vec<Vec<f64>> = gens
        .into_par_iter()
        .enumerate()
        .map(|(i, mut rng)| {
            (0..chunk(trials, streams, i))
                .map(|_| energy_statistic(&mut rng, n, noise_scale, amplitude))
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

/// Sample-level energy-detector simulation at several thresholds and
/// sensed SNRs, sharing the simulated statistics across thresholds and the
/// null-hypothesis statistics across SNRs. `cfg.gamma` is ignored.
///
/// H0 uses streams `0..streams`; the `k`-th SNR uses streams
/// `(k + 1) * streams .. (k + 2) * streams`. Output is indexed `[gamma][eta]`.
pub fn mc_detector_sweep(
    etas: &[f64],
    cfg: &DetectorConfig,
    gammas: &[f64],
    trials: usize,
    rng: &RngSpec,
) -> Result<Vec<Vec<DetectorEstimate>>> {
    rng.validate()?;
    if trials < MIN_DETECTOR_TRIALS {
        return Err(invalid("trials", format!("need at least {MIN_DETECTOR_TRIALS}, got {trials}")));
    }
    for &gamma in gammas {
        DetectorConfig { gamma, ..*cfg }.validate()?;
    }
    let above = |stats: &[f64], eta: f64| stats.iter().filter(|&&t| t > eta).count() as u64;
    let h0 = simulate_statistics(cfg, trials, false, rng.generators(0, rng.streams))?;
    let pf: Vec<Estimate> = etas.iter().map(|&eta| binomial(above(&h0, eta), trials)).collect();
    drop(h0);
    gammas
        .iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let c = DetectorConfig { gamma, ..*cfg };
            let h1 = simulate_statistics(&c, trials, true, rng.generators((k + 1) * rng.streams, rng.streams))?;
            Ok(etas
                .iter()
                .zip(&pf)
                .map(|(&eta, &pf)| DetectorEstimate {
                    eta,
                    pf,
                    pd: binomial(above(&h1, eta), trials),
                })
                .collect())
        })
        .collect()
}

/// [`mc_detector_sweep`] at the configured sensed SNR only.
pub fn mc_detector_batch(etas: &[f64], cfg: &DetectorConfig, trials: usize, rng: &RngSpec) -> Result<Vec<DetectorEstimate>> {
    Ok(mc_detector_sweep(etas, cfg, &[cfg.gamma], trials, rng)?.remove(0))
}

pub fn mc_detector(eta: f64, cfg: &DetectorConfig, trials: usize, rng: &RngSpec) -> Result<DetectorEstimate> {
    Ok(mc_detector_batch(&[eta], cfg, trials, rng)?[0])
}

/// Analytic rates next to their simulated counterparts.
pub fn detector_sigmas(est: &DetectorEstimate, cfg: &DetectorConfig) -> Result<(f64, f64)> {
    let pf = prob_false_alarm(est.eta, cfg)?;
    let pd = prob_detection(est.eta, cfg)?;
    Ok((est.pf.sigmas(pf), est.pd.sigmas(pd)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityEstimate {
    pub c_s: Estimate,
    pub p_bar: Estimate,
    pub c0: Estimate,
    pub c1: Estimate,
    pub mean_interference: Estimate,
    pub violation_probability: Estimate,
}

pub const MIN_CAPACITY_TRIALS: usize = 100_000;

/// Monte Carlo over `(h, g_sp)` of the policy's rate, power and
/// interference. `h` is exponential with mean `1/n0`, `g_sp` with unit mean.
pub fn mc_capacity(
    n0: f64,
    policy: &PowerPolicy,
    weights: MixtureWeights,
    trials: usize,
    rng: &RngSpec,
) -> Result<CapacityEstimate> {
    rng.validate()?;
    if !(n0 > 0.0) {
        return Err(invalid("n0", format!("must be positive, got {n0}")));
    }
    if trials < MIN_CAPACITY_TRIALS {
        return Err(invalid("trials", format!("need at least {MIN_CAPACITY_TRIALS}, got {trials}")));
    }
    let (alpha, beta) = (weights.alpha, weights.beta);
    let parts: Vec<[Moments; 6]> = rng
        .generators(0, rng.streams)
        .into_par_iter()
        .enumerate()
        .map(|(i, mut r)| {
            let mut m = [Moments::default(); 6];
            for _ in 0..chunk(trials, rng.streams, i) {
                let h = r.sample::<f64, _>(Exp1) / n0;
                let g_sp: f64 = r.sample(Exp1);
                let BranchPowers { p0, p1 } = policy.branch_powers(FadingState { h, g_sp });
                let rate0 = (h * p0).ln_1p() / LN_2;
                let rate1 = (h * p1).ln_1p() / LN_2;
                let mix = alpha * p0 + beta * p1;
                m[0].push(alpha * rate0 + beta * rate1);
                m[1].push(mix);
                m[2].push(rate0);
                m[3].push(rate1);
                m[4].push(g_sp * mix);
                // capped states sit exactly on the limit up to rounding
                m[5].push(if g_sp * mix > policy.i_pk * (1.0 + 1e-12) { 1.0 } else { 0.0 });
            }
            m
        })
        .collect();
    let total = parts.into_iter().fold([Moments::default(); 6], |acc, p| {
        let mut out = acc;
        for k in 0..6 {
            out[k] = acc[k].merge(p[k]);
        }
        out
    });
    Ok(CapacityEstimate {
        c_s: total[0].estimate(),
        p_bar: total[1].estimate(),
        c0: total[2].estimate(),
        c1: total[3].estimate(),
        mean_interference: total[4].estimate(),
        violation_probability: total[5].estimate(),
    })
}

/// Discretization used by [`grid_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Equal-mass bins per fading gain.
    pub bins: usize,
    /// Power levels per branch, including zero.
    pub power_levels: usize,
    /// Largest level of the undetected-branch grid; `None` means `2 P_av`.
    pub p_max: Option<f64>,
    /// Resolution of the discretized power budget.
    pub budget_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            bins: 8,
            power_levels: 16,
            p_max: None,
            budget_steps: 4000,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=12).contains(&self.bins) {
            return Err(invalid("bins", format!("must lie in [1, 12], got {}", self.bins)));
        }
        if !(1..=32).contains(&self.power_levels) {
            return Err(invalid("power_levels", format!("must lie in [1, 32], got {}", self.power_levels)));
        }
        if let Some(p) = self.p_max {
            if !(p > 0.0 && p.is_finite()) {
                return Err(invalid("p_max", format!("must be positive, got {p}")));
            }
        }
        if !(1..=1_000_000).contains(&self.budget_steps) {
            return Err(invalid("budget_steps", format!("must lie in [1, 1e6], got {}", self.budget_steps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub c_s: f64,
    pub p_bar: f64,
    /// Chosen powers, in the order of `lattice.states`.
    pub powers: Vec<BranchPowers>,
}

fn levels(top: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    (0..count).map(|k| top * k as f64 / (count - 1) as f64).collect()
}

/// Best mixture capacity over per-state power pairs drawn from finite level
/// grids on an equal-mass fading lattice.
///
/// Each state picks `(p0, p1)` with `p0 >= p1`, subject to the peak cap of
/// the interference mode. The pick maximizing total capacity under the
/// average-power budget is found exactly by dynamic programming over a
/// budget discretized into `budget_steps` units, with every state's cost
/// rounded up, so the returned assignment always meets the budget.
pub fn grid_oracle(params: &SystemParams, eta: f64, spec: &GridSpec) -> Result<(FadingLattice, GridOptimum)> {
    params.validate()?;
    spec.validate()?;
    let cfg = params.detector();
    let weights = MixtureWeights::from_detection(prob_false_alarm(eta, &cfg)?, prob_detection(eta, &cfg)?, params.pi1);
    let (alpha, beta) = (weights.alpha, weights.beta);
    let lattice = FadingLattice::equal_mass(params.n0, spec.bins)?;
    let p_max = spec.p_max.unwrap_or(2.0 * params.p_av);
    let unit = params.p_av / spec.budget_steps as f64;
    let budget = spec.budget_steps;

    let mut value = vec![0.0f64; budget + 1];
    let mut choices: Vec<Vec<(usize, BranchPowers)>> = Vec::with_capacity(lattice.states.len());
    for &(state, mass) in &lattice.states {
        let cap = if state.g_sp > 0.0 { params.i_pk / state.g_sp } else { f64::INFINITY };
        let top0 = match params.mode {
            InterferenceMode::P1Only => p_max,
            InterferenceMode::Mixture => p_max.min(cap),
        };
        let grid0 = levels(top0, spec.power_levels);
        let grid1 = levels(p_max.min(cap), spec.power_levels);
        let mut options = Vec::new();
        for &p0 in &grid0 {
            for &p1 in grid1.iter().filter(|&&p1| p1 <= p0) {
                let cost = mass * (alpha * p0 + beta * p1);
                let units = (cost / unit * (1.0 - 1e-12)).ceil() as usize;
                if units > budget {
                    continue;
                }
                let rate = mass * (alpha * (state.h * p0).ln_1p() + beta * (state.h * p1).ln_1p()) / LN_2;
                options.push((units, rate, BranchPowers { p0, p1 }));
            }
        }
        let mut next = vec![f64::NEG_INFINITY; budget + 1];
        let mut pick = vec![(0usize, BranchPowers { p0: 0.0, p1: 0.0 }); budget + 1];
        for (b, slot) in next.iter_mut().enumerate() {
            for &(units, rate, powers) in &options {
                if units <= b && value[b - units] + rate > *slot {
                    *slot = value[b - units] + rate;
                    pick[b] = (units, powers);
                }
            }
        }
        if next[budget] == f64::NEG_INFINITY {
            return Err(Error::AllInfeasible);
        }
        value = next;
        choices.push(pick);
    }

    let mut powers = vec![BranchPowers { p0: 0.0, p1: 0.0 }; lattice.states.len()];
    let mut b = budget;
    for (i, pick) in choices.iter().enumerate().rev() {
        let (units, p) = pick[b];
        powers[i] = p;
        b -= units;
    }
    let p_bar = lattice
        .states
        .iter()
        .zip(&powers)
        .map(|(&(_, mass), p)| mass * (alpha * p.p0 + beta * p.p1))
        .sum();
    Ok((
        lattice,
        GridOptimum {
            c_s: value[budget],
            p_bar,
            powers,
        },
    ))
}
