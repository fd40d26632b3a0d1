//! Finite-blocklength bounds for joint source-channel coding of a
//! hierarchical source `(S, X)`: only `X` is observed, and both `S` and `X`
//! must be reproduced within their distortion thresholds.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` / `*F32` aliases fix the type.

pub mod achievability;
pub mod converse;
pub mod distortion;
pub mod error;
pub mod info;
pub mod prob;
pub mod product;
pub mod rd;
pub mod scalar;
pub mod sim;

pub use achievability::{
    achievability_bound, evaluate_terms, AchievabilityConfig, AchievabilityResult, AuxSearch, Initializer, InnerLaw,
    TermBreakdown,
};
pub use converse::{converse_bound, BoundResult, ConverseConfig, EncoderSearch, Exactness, TiltedVariant};
pub use distortion::{DistortionSpec, RelaxationFunction, RelaxationTable};
pub use error::{Error, Result};
pub use info::StructuredChannel;
pub use prob::{JointPmf, Kernel, Matrix, Pmf, SourceModel};
pub use rd::{solve_rd, solve_rd_relaxed, RdOptions, RdSolution, RelaxedSolution};
pub use scalar::Scalar;
pub use sim::{run_trials, wilson_interval, Codebook, Scheme, SimMode, SimResult};

pub type PmfF64 = Pmf<f64>;
pub type PmfF32 = Pmf<f32>;
pub type JointPmfF64 = JointPmf<f64>;
pub type JointPmfF32 = JointPmf<f32>;
pub type KernelF64 = Kernel<f64>;
pub type KernelF32 = Kernel<f32>;
pub type SourceModelF64 = SourceModel<f64>;
pub type SourceModelF32 = SourceModel<f32>;
pub type StructuredChannelF64 = StructuredChannel<f64>;
pub type StructuredChannelF32 = StructuredChannel<f32>;
pub type DistortionSpecF64 = DistortionSpec<f64>;
pub type DistortionSpecF32 = DistortionSpec<f32>;
pub type BoundResultF64 = BoundResult<f64>;
pub type BoundResultF32 = BoundResult<f32>;
pub type AchievabilityResultF64 = AchievabilityResult<f64>;
pub type AchievabilityResultF32 = AchievabilityResult<f32>;
pub type SimResultF64 = SimResult<f64>;
pub type SimResultF32 = SimResult<f32>;
