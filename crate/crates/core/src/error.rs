use thiserror::Error;

/// Errors produced by the simulation core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bend angle {theta} rad is outside the open interval (-pi, pi)")]
    BendOutOfRange { theta: f64 },

    #[error("motor angle {alpha} rad is outside the admissible interval [{min}, {max}]")]
    MotorAngleOutOfRange { alpha: f64, min: f64, max: f64 },

    #[error("expected {expected} joint configurations, got {actual}")]
    JointCountMismatch { expected: usize, actual: usize },

    #[error("centerline sampling mismatch: {prev} vs {next} points")]
    SamplingMismatch { prev: usize, next: usize },

    #[error("time step must be positive, got {0}")]
    NonPositiveTimeStep(f64),

    #[error("invalid robot spec: {0}")]
    InvalidSpec(String),

    #[error("invalid gait parameters: {0}")]
    InvalidGait(String),

    #[error("invalid friction parameters: {0}")]
    InvalidFriction(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("no preset exists for gait kind {0}")]
    NoPreset(String),

    #[error(
        "quasi-static solver did not converge after {iterations} iterations \
         (force residual {force_residual:.3e} N, moment residual {moment_residual:.3e} N*mm)"
    )]
    SolverDiverged {
        iterations: usize,
        force_residual: f64,
        moment_residual: f64,
    },

    #[error("solver failure at tick {tick}: {source}")]
    Tick {
        tick: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory too short: need at least {needed} ticks, have {have}")]
    TrajectoryTooShort { needed: usize, have: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing required field `{0}`")]
    MissingField(String),

    #[error("invalid value for `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("unknown parameter key `{0}`")]
    UnknownParam(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors raised by the friction solver, directly or wrapped with a tick index.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::SolverDiverged { .. } => true,
            Error::Tick { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
