//! Extrapolation of stationary Gaussian random fields beyond an observation
//! window, optimized for excursion-set fidelity rather than pointwise error.
//!
//! Given finitely many observations of a centered or non-centered stationary
//! Gaussian field, the library builds linear predictors whose excursion sets
//! `{t : X(t) > u}` match those of the underlying field as closely as
//! possible across a chosen set of levels, while reproducing the marginal
//! distribution of the field exactly. Classical simple and ordinary kriging
//! are provided as baselines, together with excursion-error metrics, an
//! exact Gaussian simulator, and a reproducible simulation-study harness.
//!
//! Module overview:
//!
//! - [`special`]: Gaussian marginals, Bessel `J0`, joint exceedance
//!   probabilities and the excursion-overlap objective.
//! - [`covariance`]: stationary covariance models, observation geometry, and
//!   the factorized covariance system.
//! - [`spd`]: symmetric positive-definite solves and the scalar quantities
//!   behind every closed-form weight vector.
//! - [`simulate`]: exact (dense Cholesky) simulation of field paths on grids.
//! - [`predictors`]: excursion-faithful weights, kriging baselines, and a
//!   Monte-Carlo feasible-point check of optimality.
//! - [`excursion`]: excursion indicators and symmetric-difference errors.
//! - [`study`]: replicated simulation studies and mesh-refinement
//!   experiments.
//! - [`io`]: deterministic CSV/JSON serialization of paths and reports.

pub mod covariance;
pub mod error;
pub mod excursion;
pub mod io;
pub mod predictors;
mod rng;
pub mod simulate;
pub mod spd;
pub mod special;
pub mod study;

pub use error::{Error, Result};
