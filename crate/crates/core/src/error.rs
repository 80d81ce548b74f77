use thiserror::Error;

/// Errors raised anywhere in the formation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("agents are coincident (distance {rho:e} m is below the {threshold:e} m threshold)")]
    CoincidentAgents { rho: f64, threshold: f64 },

    #[error("distance must be strictly positive, got {0}")]
    NonpositiveDistance(f64),

    #[error("alpha2(0) = -pi/2 is the excluded initial condition of the bearing dynamics")]
    ExcludedInitialCondition,

    #[error("step size {h:e} fell below h_min = {h_min:e} at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64, h_min: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("series of length {len} is too short for window {window}")]
    SeriesTooShort { len: usize, window: usize },

    #[error("recovered leader speed {v1:e} m/s at t = {t} is degenerate")]
    DegenerateSpeed { t: f64, v1: f64 },

    #[error("Lyapunov descent violated at t = {t}: {detail}")]
    DescentViolation { t: f64, detail: String },

    #[error("trajectory window [{t_start}, {t_end}] too short for period {period} after settle time {settle}")]
    WindowTooShort { t_start: f64, t_end: f64, period: f64, settle: f64 },

    #[error("period {period} is not an integer multiple of the sample spacing {dt}")]
    NonGridPeriod { period: f64, dt: f64 },

    #[error("infeasible initial state: {0}")]
    InfeasibleInitialState(String),

    #[error("agents {leader} and {follower} collided at t = {t} (rho = {rho:e})")]
    ChainCollision { t: f64, leader: usize, follower: usize, rho: f64 },

    #[error("leader signal {signal} = {value} at t = {t} violates bound {bound}")]
    BoundsViolation { t: f64, signal: &'static str, value: f64, bound: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FormationError {
    fn from(e: std::io::Error) -> Self {
        FormationError::Io(e.to_string())
    }
}

pub type Result<T, E = FormationError> = std::result::Result<T, E>;
