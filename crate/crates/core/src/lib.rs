//! Equation-free coarse analysis of a periodically forced network of
//! heterogeneous, mean-field coupled modified van der Pol oscillators.
//!
//! The microscopic model, the chaos expansion and projective integration
//! are generic over the floating-point type; the coarse map, continuation
//! and diagnostics work in `f64`, where finite-difference Jacobians need
//! the precision.

pub mod chaos;
pub mod coarse_map;
pub mod continuation;
pub mod diagnostics;
pub mod error;
pub mod network;
pub mod projective;
pub mod scalar;
pub mod signal;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision of the coarse-level analysis.
pub type Real = f64;

pub type Params = network::ModelParams<Real>;
pub type State = network::NetworkState<Real>;
pub type Realization = network::Heterogeneity<Real>;
pub type Coeffs = chaos::ChaosCoeffs<Real>;
pub type Basis = chaos::ChaosBasis<Real>;

/// Single-precision variants, for fast exploratory simulation.
pub type Params32 = network::ModelParams<f32>;
pub type State32 = network::NetworkState<f32>;
pub type Realization32 = network::Heterogeneity<f32>;
pub type Coeffs32 = chaos::ChaosCoeffs<f32>;
