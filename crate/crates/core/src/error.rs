use thiserror::Error;

/// Errors raised by the numerical pipelines.
///
/// Each variant carries a stable machine-readable name (see [`Error::name`])
/// which the command-line front end reports alongside the message.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("e^(-V) is not integrable: {0}")]
    NonIntegrable(String),

    #[error("tail of the radial integral could not be resolved: {0}")]
    TailNotResolved(String),

    #[error("generic potential requires an explicit tail bound")]
    MissingTailBound,

    #[error("empty annulus: inner radius {a} exceeds outer radius {b}")]
    EmptyAnnulus { a: f64, b: f64 },

    #[error("phi stays below {target:e} on the table (max {max:e}); no finite rate at this s")]
    PhiBounded { target: f64, max: f64 },

    #[error("no table radius satisfies the tail-mass constraint {target:e}")]
    TailTooHeavy { target: f64 },

    #[error("psi integral diverges: {0}")]
    PsiDiverges(String),

    #[error("grid too large: {n} nodes exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("matrix too large for dense eigensolver: {n} > {cap}")]
    TooLargeForDense { n: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("measure weight underflow at node {0}")]
    MeasureUnderflow(usize),

    #[error("iterative eigensolver did not converge in {iterations} iterations (estimate {estimate:e}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("tail bound fails: {0}")]
    TailBoundFails(String),

    #[error("test function must be strictly positive (node {0})")]
    NonPositivePhi(usize),

    #[error("kernel not supported here: {0}")]
    UnsupportedKernel(String),

    #[error("ball search failed: smallest admissible radius {radius:e} still carries mass {mass:e} > {target:e}")]
    BallSearchFailed { radius: f64, mass: f64, target: f64 },

    #[error("inner integral diverges: {0}")]
    InnerIntegralDiverges(String),

    #[error("insufficient fit range: {0}")]
    InsufficientRange(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    /// Stable identifier used in machine-readable error reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NonIntegrable(_) => "NonIntegrable",
            Error::TailNotResolved(_) => "TailNotResolved",
            Error::MissingTailBound => "MissingTailBound",
            Error::EmptyAnnulus { .. } => "EmptyAnnulus",
            Error::PhiBounded { .. } => "PhiBounded",
            Error::TailTooHeavy { .. } => "TailTooHeavy",
            Error::PsiDiverges(_) => "PsiDiverges",
            Error::TooLarge { .. } => "TooLarge",
            Error::TooLargeForDense { .. } => "TooLargeForDense",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MeasureUnderflow(_) => "MeasureUnderflow",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::QuadratureFailure(_) => "QuadratureFailure",
            Error::TailBoundFails(_) => "TailBoundFails",
            Error::NonPositivePhi(_) => "NonPositivePhi",
            Error::UnsupportedKernel(_) => "UnsupportedKernel",
            Error::BallSearchFailed { .. } => "BallSearchFailed",
            Error::InnerIntegralDiverges(_) => "InnerIntegralDiverges",
            Error::InsufficientRange(_) => "InsufficientRange",
            Error::Parse(_) => "Parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
