use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument outside the domain of {function}: {value}")]
    Domain { function: &'static str, value: f64 },

    #[error("sensing window too short: tau * fs = {0} rounds to zero samples")]
    WindowTooShort(f64),

    #[error("detection target {pd_target} is infeasible: largest admissible threshold is {eta_max}")]
    Infeasible { pd_target: f64, eta_max: f64 },

    #[error("quadrature did not converge: last two estimates {previous} and {current}")]
    QuadratureNonConvergence { previous: f64, current: f64 },

    #[error("cannot bracket the dual price: average power {p_bar_lo} at lambda {lambda_lo}, {p_bar_hi} at lambda {lambda_hi}, budget {p_av}")]
    BracketFailure {
        lambda_lo: f64,
        lambda_hi: f64,
        p_bar_lo: f64,
        p_bar_hi: f64,
        p_av: f64,
    },

    #[error("no grid point is feasible")]
    AllInfeasible,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
