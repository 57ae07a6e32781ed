//! Calibration of finite-deformation elastoplastic constitutive parameters
//! from full-field surface displacement data.
//!
//! The crate couples a stabilized mixed displacement-pressure tetrahedral
//! finite element solver (nested global/local Newton iterations over load
//! steps) with three engines for the objective gradient: finite differences,
//! forward sensitivities, and adjoint sensitivities. All derivatives of the
//! global and local residuals are obtained by forward-mode automatic
//! differentiation of the residual implementations themselves; nothing is
//! hand-linearized. A bound-constrained limited-memory quasi-Newton
//! optimizer drives the calibration loop.

pub mod ad;
pub mod fem;
pub mod mesh;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod sensitivity;
pub mod solver;
pub mod sparse;
pub mod tensor;

pub use ad::{Dual, Scalar};

/// Errors surfaced by mesh generation, the forward solver, and the gradient
/// engines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh generation: {0}")]
    Mesh(String),

    #[error("element {element}: local Newton did not converge in {iterations} iterations (|C| = {residual:.3e})")]
    LocalNonConvergence {
        element: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("load step {step}: global Newton did not converge in {iterations} iterations (|R| = {residual:.3e})")]
    GlobalNonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("element {element}: deformation gradient is not invertible (det F = {det:.3e})")]
    ElementInversion { element: usize, det: f64 },

    #[error("singular local Jacobian in element {element}")]
    SingularLocalJacobian { element: usize },

    #[error("sparse factorization failed: {0}")]
    LinearSolve(String),

    #[error("objective/data mismatch: {0}")]
    DataMismatch(String),

    #[error("optimization: {0}")]
    Optimization(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
