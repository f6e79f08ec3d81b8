//! Deterministic equivalents for isometrically precoded multi-user MIMO
//! channels, with exact finite-dimension Monte Carlo validation.
//!
//! The crate computes fixed-point approximations of the mutual information
//! and the MMSE SINR for channels of the form
//! `y = sum_k H_k W_k P_k^(1/2) x_k + n`, where the `W_k` are isometric
//! (Haar) precoders, under both a quasi-static model (fixed `H_k`) and a
//! correlated-fading model (columns of `H_k` drawn as `R_kj^(1/2) z_kj`),
//! and validates them against replicated simulation of the exact
//! finite-dimension metrics.
//!
//! All real math is generic over the scalar type via [`Real`] (`f32` or
//! `f64`); concrete `f64` aliases are exported at the crate root.

pub mod correlation;
pub mod ensembles;
pub mod error;
pub mod metrics;
pub mod montecarlo;
pub mod numerics;
pub mod scalar;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::{real, Real};

/// `f64` instantiations of the core types.
pub type HermitianMatrixF64 = numerics::HermitianMatrix<f64>;
pub type ComplexMatrixF64 = numerics::ComplexMatrix<f64>;
pub type SolverConfigF64 = solver::SolverConfig<f64>;
pub type ScenarioSpecF64 = scenario::ScenarioSpec<f64>;
pub type MetricReportF64 = metrics::MetricReport<f64>;
pub type ReplicationStatsF64 = montecarlo::ReplicationStats<f64>;
