//! Asymptotic risk and sparsity/undersampling phase transitions of the LASSO
//! when design rows are drawn from `N(0, Σ)` with a general covariance.
//!
//! The crate is organised around a handful of numerical building blocks:
//!
//! * [`covariance`] builds and factorizes covariance models (AR(1), spiked,
//!   identity, explicit) and computes Schur complements.
//! * [`prox`] evaluates the Σ-weighted soft-thresholding operator and its
//!   divergence.
//! * [`lasso`] is a coordinate-descent LASSO solver with a basis-pursuit front
//!   end.
//! * [`amp`] runs the covariance-aware approximate message passing iteration.
//! * [`state_evolution`] evaluates the state-evolution map by Monte Carlo (or
//!   quadrature for `Σ = I`), its fixed points, and the α ↔ λ calibration.
//! * [`phase`] computes `M(ε, α)` and the phase boundary `δ_c(ε, dε)`.
//! * [`montecarlo`] generates instances and runs the empirical experiments.

pub mod amp;
pub mod covariance;
mod error;
pub mod gaussian;
pub mod io;
pub mod lasso;
mod linalg;
pub mod montecarlo;
pub mod phase;
pub mod prior;
pub mod prox;
pub mod rng;
pub mod state_evolution;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
