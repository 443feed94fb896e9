//! Error types shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The virtual-temperature/hot-temperature map produced a non-physical
    /// hot bath; the parameter point lies outside the engine regime.
    #[error("out-of-engine-regime: T_V = {t_v} with T_C = {t_c} gives T_H = {t_h}")]
    OutOfRegime { t_v: f64, t_c: f64, t_h: f64 },

    /// Parameter values violate a model invariant (non-positive energy, ...).
    #[error("invalid parameter {name}: {value} ({constraint})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// More than one Liouvillian eigenvalue sits below the zero tolerance,
    /// so the steady state is not unique.
    #[error("degenerate steady state: {count} eigenvalues with |lambda| < {zero_tol}")]
    DegenerateSteadyState { count: usize, zero_tol: f64 },

    /// No eigenvalue below the zero tolerance was found.
    #[error("no steady state found: smallest |lambda| = {min_abs}")]
    NoSteadyState { min_abs: f64 },

    /// The dense eigensolver backend failed to converge.
    #[error("eigensolve did not converge: {0}")]
    NonConvergedEigensolve(String),

    /// The decaying spectrum is too close to singular for a reliable
    /// Drazin pseudo-inverse.
    #[error("ill-conditioned Liouvillian: min |lambda| = {min_abs} < {cond_tol} * max |lambda| = {max_abs}")]
    IllConditioned {
        min_abs: f64,
        max_abs: f64,
        cond_tol: f64,
    },

    /// Detection efficiency below the threshold under which the normalized
    /// excess-current distribution (and hence the jitter) is undefined.
    #[error("efficiency too small for jitter: eta_D = {eta} <= {eps_eta}")]
    EfficiencyTooSmall { eta: f64, eps_eta: f64 },

    /// A mode with non-negative real part entered a time integral that
    /// requires decay.
    #[error("divergent excess integral: mode with Re(lambda) = {re} >= 0")]
    DivergentIntegral { re: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown channel: {0}")]
    UnknownChannel(String),

    #[error("fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),

    #[error("invalid filter expression '{expr}': {reason}")]
    InvalidFilter { expr: String, reason: String },

    #[error("unknown column '{0}' in records file")]
    UnknownColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("records parse error: {0}")]
    Records(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable tag used in sweep record status fields.
    pub fn status_tag(&self) -> &'static str {
        match self {
            Error::OutOfRegime { .. } => "out-of-engine-regime",
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::DegenerateSteadyState { .. } => "degenerate-steady-state",
            Error::NoSteadyState { .. } => "no-steady-state",
            Error::NonConvergedEigensolve(_) => "eigensolve-failed",
            Error::IllConditioned { .. } => "ill-conditioned",
            Error::EfficiencyTooSmall { .. } => "efficiency-too-small",
            Error::DivergentIntegral { .. } => "divergent-integral",
            _ => "error",
        }
    }
}
