//! Sinkhorn bridges on discretized state spaces, the closed-form linear-Gaussian
//! flow, and numerical diagnostics for their stability: contraction coefficients,
//! divergence decay rates, Lyapunov-type condition checks and entropy identities.
//!
//! Modules:
//! - [`measure`]: discrete measures, Markov kernels, divergences and contraction coefficients
//! - [`sinkhorn`]: log-domain Sinkhorn potentials, transitions, marginals and bridges
//! - [`gaussian`]: Riccati recursions for the linear-Gaussian model
//! - [`zoo`]: example models and probes for the drift/integrability conditions
//! - [`diagnostics`]: divergence traces, rate fits, inequality audits and CSV export

pub mod diagnostics;
pub mod error;
pub mod gaussian;
pub mod measure;
pub mod quadrature;
pub mod random;
pub mod sinkhorn;
pub mod zoo;

pub use error::{Error, Result};
