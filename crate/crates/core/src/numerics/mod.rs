//! Deterministic numerical building blocks.

pub mod hermite;
pub mod linalg;
pub mod ode;
pub mod quadrature;
pub mod rng;

pub use hermite::{hermite_eval, hermite_normalized};
pub use linalg::{spectral_norm, sym_eig, sym_eigenvalues, SpectralDecomposition};
pub use ode::{integrate, ode_solve, single_step, Control, OdeError, OdeOptions, Record, StepView, Trajectory};
pub use quadrature::{gauss_hermite_rule, gauss_jacobi_rule, QuadratureRule, RuleKind};
pub use rng::RngStream;
