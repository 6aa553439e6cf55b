//! Crate-wide error type.

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model evaluation, fitting, simulation, and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A coefficient set violates its documented validity range.
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    /// An input that must be finite was NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    /// An input fell outside its documented domain.
    #[error("{what} out of range: {value} not in [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// The force curve degenerated (zero peak force with nonzero slip).
    #[error("degenerate force curve: peak force is zero at slip angle {slip_angle} rad")]
    DegenerateCurve { slip_angle: f64 },

    /// A fit data set does not cover enough distinct values along one
    /// condition axis for the requested stage.
    #[error("{axis} axis under-sampled: {found} distinct values, need {needed}")]
    UnderSampledAxis {
        axis: &'static str,
        found: usize,
        needed: usize,
    },

    /// Too few observations for the number of free coefficients.
    #[error("under-determined fit: {observations} observations for {coefficients} coefficients (need at least {})", 2 * coefficients)]
    UnderDetermined {
        observations: usize,
        coefficients: usize,
    },

    /// The residual function returned a non-finite value.
    #[error("non-finite residual at observation {index}")]
    NonFiniteResidual { index: usize },

    /// Normal equations could not be solved at the initial guess.
    #[error("singular normal equations at initial guess: coefficient {index} has no effect on the residuals")]
    SingularAtInitialGuess { index: usize },

    /// Gradient descent diverged.
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    /// Explicit Euler step size violates the stability bound.
    #[error("time step {dt} s exceeds stability bound {max_dt} s")]
    UnstableTimeStep { dt: f64, max_dt: f64 },

    /// A simulated wheel lost ground contact.
    #[error("wheel lift: {wheel} vertical load {load} N")]
    WheelLift { wheel: &'static str, load: f64 },

    /// The axle force inversion is singular (steer angle near 90 degrees).
    #[error("axle force inversion singular at road wheel angle {angle} rad")]
    SingularInversion { angle: f64 },

    /// A structured text or CSV input could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Underlying file I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
