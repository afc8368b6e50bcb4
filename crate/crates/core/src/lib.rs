//! Structured matrix factorization as log-determinant regularized least
//! squares.
//!
//! The library models an observation Y ≈ H·S where the columns of S live in
//! a geometric domain (unit simplex, ℓ∞ ball, nonnegative orthant) and fits
//! the factors by minimizing
//!
//!   J(H, S) = ‖Y − H·S‖_F² + λ·log det( (HᵀH + Ψ)/β ),
//!
//! the MAP criterion of a Bayesian model with Gaussian rows of H, an
//! inverse-Wishart prior on their covariance, uniform sources, and Gaussian
//! noise. β = M + r + φ + 1 and λ = β·σ_v² follow from the model, which also
//! supplies the generator ([`generator`]), the solver ([`solver`]: coordinate
//! descent with Nesterov-accelerated projected gradient blocks), and the
//! evaluation stack ([`metrics`]: signed-permutation alignment, SINR, and an
//! LMMSE benchmark).

pub mod domains;
pub mod error;
pub mod generator;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod solver;

pub use domains::{DomainKind, DomainSpec};
pub use error::{Error, Result};
pub use generator::{generate, psi_from_rho, sample_inverse_wishart, GeneratedData, HRowCovarianceMode, ModelParams};
pub use metrics::{align, lmmse_estimate, sinr_db, Alignment};
pub use objective::{covariance_blend, evaluate, grad_h, grad_s, log_posterior_terms, sigma_stationary, CovarianceBlend, LogPosteriorTerms, ObjectiveParams};
pub use solver::{fit, nesterov_loop, step_size_s, FitError, FitResult, InitStrategy, SolverConfig, StepRule};
