//! Dataset reduction by loss-curvature matching.
//!
//! Coreset selection picks a class-balanced subset whose per-sample
//! last-layer gradients and Hessian diagonals cover the full training set
//! under a facility-location objective. Condensation learns a small synthetic
//! set whose mean gradient and gradient variance track the training set
//! along a model trajectory driven by the full data.

pub mod condensation;
pub mod curvature;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod selection;

pub use error::{Error, ErrorKind, Result};
