//! GARCH(r, s) models driven by standardized Lévy-increment noise, estimated
//! through the empirical characteristic function of inverted residuals.
//!
//! The crate is organised around the estimation pipeline:
//!
//! * [`noise`] — standardized noise families (Gaussian, symmetric variance
//!   gamma): characteristic functions, moments, sampling, and the Fisher
//!   scale factor μ that governs asymptotic efficiency.
//! * [`garch`] — the volatility recursion, simulation, the inversion filter
//!   recovering σ²_n from returns, and first/second parameter sensitivities.
//! * [`stability`] — Kronecker-moment spectral radii ρ(E[A^{⊗q}]) for the
//!   random state matrices, Lyapunov-exponent estimation, and the model
//!   identifiability (coprimality) check.
//! * [`ecf`] — instrumental-variable characteristic-function scores, the
//!   weighted estimation objective, the two-step estimator, and asymptotic
//!   covariance / efficiency computations.
//! * [`mle`] — Gaussian (quasi-)maximum likelihood, used both as a baseline
//!   estimator and as the initializer for the characteristic-function fit.
//! * [`optim`] — the projected Gauss–Newton solver shared by the likelihood
//!   and characteristic-function objectives.
//! * [`quad`] — adaptive Simpson quadrature used for density-based integrals.
//!
//! Estimation entry point: [`ecf::estimate`]. Simulation entry point:
//! [`garch::simulate`].

pub mod ecf;
pub mod garch;
pub mod mle;
pub mod noise;
pub mod optim;
pub mod quad;
pub mod stability;

pub use ecf::{estimate, EcfError, EcfOptions, EstimationResult, UGrid, Weighting};
pub use garch::{simulate, GarchError, GarchParams, SimulatedSeries};
pub use mle::{ml_estimate, MlError, MlFit};
pub use noise::{NoiseError, NoiseModel};
pub use stability::StabilityError;
