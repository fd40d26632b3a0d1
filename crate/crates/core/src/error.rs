use thiserror::Error;

/// Errors raised by the probability, distortion and bound routines.
///
/// Real-valued payloads are carried as `f64` regardless of the scalar type
/// the computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty weight vector")]
    Empty,

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("axis {0} out of range")]
    BadAxis(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("conditioning symbol {0} has zero marginal probability")]
    ZeroMarginalRow(usize),

    #[error("index {index} out of range for alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("zero threshold paired with positive distortion")]
    DegenerateThreshold,

    #[error("relaxation table decreases between levels {from:?} and {to:?}")]
    NonMonotoneRelaxation { from: (usize, usize), to: (usize, usize) },

    #[error("channel output {z} is reachable but has zero reference probability")]
    AbsoluteContinuityViolation { z: usize },

    #[error("conditioning symbol {0} has zero probability")]
    ZeroConditioningMass(usize),

    #[error("target distortion {target} is below the minimum achievable {min}")]
    InfeasibleTarget { target: f64, min: f64 },

    #[error("empty atom list")]
    EmptyAtoms,

    #[error("value {0} outside [0, 1]")]
    ValueOutOfRange(f64),

    #[error("invalid argument: {0}")]
    BadArgs(String),

    #[error("problem too large: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
