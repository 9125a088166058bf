//! Expectations over Rayleigh fading.
//!
//! Channel power gains are exponentially distributed. Integrals against the
//! exponential density are evaluated on a composite mesh: Gauss–Legendre
//! panels whose length grows geometrically with the distance from each
//! caller-supplied breakpoint (integrands here have kinks, essential
//! singularities such as `exp(-1/(h - c))`, and poles just left of the
//! breakpoint), followed by a Gauss–Laguerre rule for the far tail.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{invalid, Error, Result};

/// Mesh end when there are no far breakpoints. `e^-32` is below any
/// tolerance used here, the Laguerre tail picks up the rest.
const SOFT_END: f64 = 32.0;
/// `e^-740` underflows; nothing beyond this point is representable.
const HARD_END: f64 = 740.0;
const PANEL_GROWTH: f64 = 16.0;
/// Length of the first panel after a breakpoint, relative to its position.
const FIRST_OFFSET: f64 = 1e-12;
const MAX_PANEL: f64 = 16.0;
const MAX_TAIL_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub nodes_1d: usize,
    pub nodes_2d: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes_1d: 64,
            nodes_2d: 48,
            rel_tol: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_1d < 8 {
            return Err(invalid("nodes_1d", format!("must be at least 8, got {}", self.nodes_1d)));
        }
        if self.nodes_2d < 8 {
            return Err(invalid("nodes_2d", format!("must be at least 8, got {}", self.nodes_2d)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(invalid("rel_tol", format!("must be positive, got {}", self.rel_tol)));
        }
        Ok(())
    }
}

/// One fading realisation: SU link SNR per unit power `h = g_ss / n0` and
/// the SU→PU power gain `g_sp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingState {
    pub h: f64,
    pub g_sp: f64,
}

#[derive(Debug)]
struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn cached(table: &'static OnceLock<Mutex<HashMap<usize, Arc<Rule>>>>, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    let map = table.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(build(n))).clone()
}

/// Gauss–Legendre rule on `[-1, 1]`.
fn legendre(n: usize) -> Arc<Rule> {
    static TABLE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    cached(&TABLE, n, |n| {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp;
            loop {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j as f64 - 1.0) * z * p2 - (j as f64 - 1.0) * p3) / j as f64;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Rule { nodes, weights }
    })
}

/// Gauss–Laguerre rule for `∫_0^∞ f(x) e^{-x} dx`.
fn laguerre(n: usize) -> Arc<Rule> {
    static TABLE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    cached(&TABLE, n, |n| {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..n {
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * nf),
                1 => z + 15.0 / (1.0 + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
                }
            };
            let (mut pp, mut p2);
            let mut iterations = 0;
            loop {
                let mut p1 = 1.0;
                p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j as f64 - 1.0 - z) * p2 - (j as f64 - 1.0) * p3) / j as f64;
                }
                pp = nf * (p1 - p2) / z;
                let z1 = z;
                z = z1 - p1 / pp;
                iterations += 1;
                if (z - z1).abs() <= 1e-14 * z.abs() || iterations > 100 {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = -1.0 / (pp * nf * p2);
        }
        Rule { nodes, weights }
    })
}

/// Panels of the composite mesh (in units of the unit-rate variable) and
/// the start of the Laguerre tail.
fn mesh(breaks: &[f64]) -> (Vec<(f64, f64)>, f64) {
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > 0.0 && *b < HARD_END)
        .collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let end = pts
        .last()
        .map_or(SOFT_END, |&b| (b + SOFT_END).max(SOFT_END))
        .min(HARD_END);

    let mut panels = Vec::new();
    let mut start = 0.0;
    for stop in pts.into_iter().chain(std::iter::once(end)) {
        if start == 0.0 {
            let mut x = 0.0;
            while x < stop {
                let next = (x + MAX_PANEL).min(stop);
                panels.push((x, next));
                x = next;
            }
        } else {
            // panel lengths grow geometrically with the distance from the
            // breakpoint, so kinks and nearby singularities stay resolved
            let mut offset = start * FIRST_OFFSET;
            let mut x = start;
            while x < stop {
                let next = (start + offset).min(x + MAX_PANEL).min(stop);
                panels.push((x, next));
                x = next;
                offset *= PANEL_GROWTH;
            }
        }
        start = stop;
    }
    (panels, end)
}

/// Visits every node of the composite rule for `∫_0^∞ f(x) e^{-x} dx`
/// with its weight (density already folded in).
fn for_each_node(breaks: &[f64], n: usize, mut visit: impl FnMut(f64, f64)) {
    let (panels, end) = mesh(breaks);
    let gl = legendre(n);
    for (a, b) in panels {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (t, w) in gl.nodes.iter().zip(&gl.weights) {
            let x = mid + half * t;
            visit(x, w * half * (-x).exp());
        }
    }
    let lag = laguerre(n.min(MAX_TAIL_NODES));
    let scale = (-end).exp();
    if scale > 0.0 {
        for (u, w) in lag.nodes.iter().zip(&lag.weights) {
            visit(end + u, w * scale);
        }
    }
}

fn unit_rate_integral(f: &mut dyn FnMut(f64) -> f64, breaks: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for_each_node(breaks, n, |x, w| {
        if w != 0.0 {
            sum += w * f(x);
        }
    });
    sum
}

fn with_doubling(n: usize, rel_tol: f64, mut eval: impl FnMut(usize) -> f64) -> Result<f64> {
    let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * b.abs() || a == b;
    let coarse = eval(n);
    let fine = eval(2 * n);
    if close(coarse, fine) {
        return Ok(fine);
    }
    let finer = eval(4 * n);
    if close(fine, finer) {
        return Ok(finer);
    }
    Err(Error::QuadratureNonConvergence {
        previous: fine,
        current: finer,
    })
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(invalid("rate", format!("exponential rate must be positive, got {rate}")))
    }
}

/// `E[f(h)]` for `h` exponential with the given rate (`rate = n0` for the
/// SU link SNR per unit power). `breaks` lists points in `h` where `f` has
/// kinks.
pub fn expect_1d(f: impl Fn(f64) -> f64, rate: f64, breaks: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    check_rate(rate)?;
    spec.validate()?;
    let scaled: Vec<f64> = breaks.iter().map(|b| b * rate).collect();
    with_doubling(spec.nodes_1d, spec.rel_tol, |n| {
        unit_rate_integral(&mut |x| f(x / rate), &scaled, n)
    })
}

/// `E[f(h, g)]` for independent `h ~ Exp(h_rate)` and unit-mean `g`.
///
/// `h_breaks` are kinks in `h`; `g_breaks(h)` returns the kinks of the
/// inner integrand for that `h`.
pub fn expect_2d(
    f: impl Fn(f64, f64) -> f64,
    h_rate: f64,
    h_breaks: &[f64],
    g_breaks: impl Fn(f64) -> Vec<f64>,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_rate(h_rate)?;
    spec.validate()?;
    let scaled: Vec<f64> = h_breaks.iter().map(|b| b * h_rate).collect();
    with_doubling(spec.nodes_2d, spec.rel_tol, |n| {
        unit_rate_integral(
            &mut |x| {
                let h = x / h_rate;
                unit_rate_integral(&mut |g| f(h, g), &g_breaks(h), n)
            },
            &scaled,
            n,
        )
    })
}

/// Nodes of the 1-D composite rule in `h`, with weights that sum to one.
pub fn nodes_1d(rate: f64, breaks: &[f64], n: usize) -> Vec<(f64, f64)> {
    let scaled: Vec<f64> = breaks.iter().map(|b| b * rate).collect();
    let mut out = Vec::new();
    for_each_node(&scaled, n, |x, w| out.push((x / rate, w)));
    out
}

/// Gauss–Laguerre nodes for a unit-mean exponential variable.
pub fn laguerre_nodes(n: usize) -> Vec<(f64, f64)> {
    let rule = laguerre(n.min(MAX_TAIL_NODES));
    rule.nodes.iter().copied().zip(rule.weights.iter().copied()).collect()
}

/// A discrete fading distribution: `bins x bins` product of equal-mass
/// bins for `h` and `g_sp`, each represented by its conditional mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingLattice {
    pub states: Vec<(FadingState, f64)>,
}

impl FadingLattice {
    pub fn equal_mass(n0: f64, bins: usize) -> Result<Self> {
        check_rate(n0)?;
        if bins == 0 {
            return Err(invalid("fading_grid_size", "must be at least 1"));
        }
        let points = equal_mass_points(bins);
        let mass = 1.0 / (bins * bins) as f64;
        let mut states = Vec::with_capacity(bins * bins);
        for &x in &points {
            for &g in &points {
                states.push((FadingState { h: x / n0, g_sp: g }, mass));
            }
        }
        Ok(FadingLattice { states })
    }
}

/// Conditional means of a unit exponential on `bins` equal-probability bins.
fn equal_mass_points(bins: usize) -> Vec<f64> {
    let k = bins as f64;
    // (x + 1) e^{-x} is the partial first moment beyond x
    let upper_moment = |x: f64| if x.is_infinite() { 0.0 } else { (x + 1.0) * (-x).exp() };
    (0..bins)
        .map(|i| {
            let a = -(1.0 - i as f64 / k).ln();
            let b = if i + 1 == bins { f64::INFINITY } else { -(1.0 - (i + 1) as f64 / k).ln() };
            k * (upper_moment(a) - upper_moment(b))
        })
        .collect()
}
