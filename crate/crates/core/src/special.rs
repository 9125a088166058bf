//! Exponential integral helpers.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `e^x * E1(x)` for `x > 0`, finite for all positive `x`.
///
/// Power series for `x <= 1`, modified Lentz continued fraction above.
pub fn scaled_exp_e1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x.is_infinite() {
        return 0.0;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        (-EULER_GAMMA - x.ln() - sum) * x.exp()
    } else {
        // e^x E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h
    }
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt`, `x > 0`.
pub fn e1(x: f64) -> f64 {
    scaled_exp_e1(x) * (-x).exp()
}
