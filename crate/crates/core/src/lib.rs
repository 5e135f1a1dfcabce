//! Markovian projection of jump-diffusions.
//!
//! Given a (possibly path-dependent) semimartingale with drift, diffusion and
//! jump characteristics, this crate
//!
//! * simulates its paths ([`simulate`]),
//! * estimates the state-conditional coefficients `(b, a, n)` of the mimicking
//!   Markov process, nonparametrically or in closed form ([`projection`]),
//! * evolves the associated forward Kolmogorov integro-differential equation
//!   ([`pide`]),
//! * and quantifies how well the mimicking process reproduces the original
//!   one-dimensional marginals ([`diagnostics`]).
//!
//! All randomness flows through counter-based per-path streams ([`rng`]), so
//! every result is bit-reproducible for a fixed seed, independent of thread
//! count.

pub mod coeffs;
pub mod compensator;
pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod io;
pub mod levy;
pub mod model;
pub mod pide;
pub mod pipeline;
pub mod projection;
pub mod quad;
pub mod registry;
pub mod rng;
pub mod simulate;

pub use coeffs::{AssumptionAuditConfig, DensityField, JumpKernelGrid, ProjectedCoefficients};
pub use ensemble::PathEnsemble;
pub use error::CoreError;
pub use grid::{TimeGrid, UniformGrid};
pub use levy::{JumpDistribution, LevyDensitySpec, SmallJumpMode};
pub use model::{InitialLaw, ItoModel, JumpSpec};
