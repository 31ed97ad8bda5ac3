use thiserror::Error;

/// Errors raised by the samplers, engines and models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A dominating envelope or bound was smaller than the intensity it was
    /// supposed to dominate. Never clamped.
    #[error("bound violation at t = {time}: intensity {intensity} exceeds bound {bound}")]
    BoundViolation {
        time: f64,
        intensity: f64,
        bound: f64,
    },

    /// Reflection requested against a zero gradient.
    #[error("degenerate bounce: gradient vanishes at the bounce point")]
    DegenerateBounce,

    /// Bracketing or bisection did not converge; usually a non-convex energy.
    #[error("line search did not converge after {iterations} iterations")]
    LineSearch { iterations: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precision matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("time {time} outside the recorded range [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error("event cap of {0} events reached before the horizon")]
    EventCap(u64),

    #[error("wall-clock cap reached before the horizon")]
    WallClock,

    /// The velocity norm drifted although only reflections were applied.
    #[error("velocity norm drifted from {expected} to {found}")]
    NormDrift { expected: f64, found: f64 },

    /// Sampling from a distribution with no mass.
    #[error("cannot sample from an empty distribution")]
    EmptyDistribution,

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
