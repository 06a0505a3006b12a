//! Numerical laboratory for neural tangent kernels of deep fully connected
//! networks on the sphere.
//!
//! The crate covers finite-width networks and their empirical kernels, the
//! infinite-width kernel recursion, spherical harmonic analysis with Sobolev
//! and Hölder norms, gradient-flow training with convergence diagnostics, and
//! config-driven experiment drivers.

pub mod activations;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod io;
pub mod kernel;
pub mod net;
pub mod numerics;
pub mod par;
pub mod sphere;

pub use activations::{ActivationKind, ActivationSpec};
pub use error::{Error, ErrorClass, Result};
