//! Anchored regression for systems of convex equations `y_m = f_m(x⋆) + ξ_m`.
//!
//! The estimator maximizes `⟨a₀, x⟩ − Ω(x)` subject to a bound on the
//! one-sided empirical risk `R⁺_M(x) = (1/M) Σ (f_m(x) − y_m)₊`. This crate
//! provides the observation models, data-driven anchors, the solver and its
//! KKT cone certificate, Monte Carlo estimators and sample-complexity
//! calculators, and a reproducible experiment harness.

pub mod analysis;
pub mod anchor;
pub mod eigen;
pub mod error;
pub mod harness;
pub mod instance;
pub mod linalg;
pub mod models;
pub mod risk;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use instance::{NoiseSpec, ProblemInstance};
pub use models::ModelKind;
pub use rng::RngStream;
