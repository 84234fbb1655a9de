//! Sub-Gaussian uncertainty calculus and the output-feedback stochastic MPC
//! built on it.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the bottom pin the common `f64` instantiations.

pub mod baselines;
pub mod bounds;
pub mod calibration;
pub mod design;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod mpc;
pub mod polytope;
pub mod qp;
pub mod reachability;
pub mod scalar;
pub mod subgaussian;
pub mod tightening;

pub use baselines::{
    dr_propagate, empirical_covariance, robust_propagate, RobustNoiseBounds, RobustSequence,
    Zonotope,
};
pub use bounds::{ConfidenceSet, Ellipsoid};
pub use calibration::{calibrate_scalar_proxy, calibrate_with, CalibrationOptions, CalibrationResult};
pub use design::{build_error_system, design_observer, solve_dare, ErrorSystem, LinearSystem, NoiseSpec};
pub use error::{Error, Result};
pub use mpc::{Controller, ControllerState, MpcConfig, StepDiagnostics, StepOutput};
pub use polytope::Polytope;
pub use qp::{solve_qp, QpProblem, QpResult, QpSettings, QpStatus};
pub use reachability::{propagate_proxy, PrsKind, ProxySequence};
pub use scalar::Real;
pub use subgaussian::{
    add_conditional, linear_transform, matrix_to_scalar, scalar_to_matrix, ScalarProxy,
    SubGaussianVector,
};
pub use tightening::{maximal_invariant_set, minkowski_diff, TightenedSequence};

pub type SubGaussianVectorF64 = SubGaussianVector<f64>;
pub type SubGaussianVectorF32 = SubGaussianVector<f32>;
pub type ScalarProxyF64 = ScalarProxy<f64>;
pub type ScalarProxyF32 = ScalarProxy<f32>;
pub type ConfidenceSetF64 = ConfidenceSet<f64>;
pub type PolytopeF64 = Polytope<f64>;
pub type LinearSystemF64 = LinearSystem<f64>;
pub type ErrorSystemF64 = ErrorSystem<f64>;
pub type MpcConfigF64 = MpcConfig<f64>;
pub type ControllerF64 = Controller<f64>;
pub type ZonotopeF64 = Zonotope<f64>;
