//! Effective diffusivities of periodic diffusion processes with drift.
//!
//! The crate estimates the homogenized diffusion matrix of
//! `dX = b(X) dt + σ(X) dW` with 1-periodic coefficients in two ways:
//!
//! * a Lagrangian route ([`montecarlo`]) that simulates particle ensembles
//!   with the integrators in [`schemes`] and reports `Var(X_T) / 2T`;
//! * an Eulerian route ([`eulerian`]) that solves the stationary
//!   Fokker–Planck equation and the corrector cell problem on a periodic
//!   grid and integrates `(I + ∇χ) A (I + ∇χ)ᵀ r`.
//!
//! Problem coefficients, their derivatives, the Milstein tensor and the
//! modified-equation corrections live in [`coeffs`].

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod error;
pub mod eulerian;
pub mod grid;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod schemes;

pub use coeffs::{benchmarks, DerivativeMode, Problem};
pub use error::{Error, Result};
pub use eulerian::{EulerianOptions, EulerianSolution};
pub use grid::{Sampling, TorusGridField};
pub use linalg::Matrix;
pub use montecarlo::{
    convergence_study, effective_diffusivity_estimate, invariant_histogram, simulate_ensemble, DiffusivityEstimate,
    EnsembleConfig, EnsembleResult, StudyReference,
};
pub use schemes::{GaussianDraw, SchemeConfig, SchemeKind};
