//! Galerkin-truncated simulation of quantum stochastic filtering equations
//! driven by diffusive measurements of unbounded operators.
//!
//! Every numerical type is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix double precision.

pub mod error;
pub mod linalg;
pub mod operators;
pub mod scalar;
pub mod sde;
pub mod stats;
pub mod pure;
pub mod mixed;
pub mod gaussian;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CVector = scalar::CVector<f64>;
pub type CMatrix = scalar::CMatrix<f64>;
pub type TruncatedOperator = operators::TruncatedOperator<f64>;
pub type TruncationLadder = operators::TruncationLadder<f64>;
pub type ModelSpec = operators::ModelSpec<f64>;
pub type BrownianPath = sde::BrownianPath<f64>;
pub type PureTrajectory = pure::PureTrajectory<f64>;
pub type DensityOperator = mixed::DensityOperator<f64>;
pub type DensityTrajectory = mixed::DensityTrajectory<f64>;
pub type WeightedEnsemble = mixed::WeightedEnsemble<f64>;
pub type EnsembleTrajectory = mixed::EnsembleTrajectory<f64>;
pub type KernelParams = gaussian::KernelParams<f64>;
pub type GaussianKernelState = gaussian::GaussianKernelState<f64>;
