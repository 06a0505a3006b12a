//! Infinite-width kernels: Gaussian pair expectations, the covariance
//! recursion, and Funk–Hecke eigenvalues of zonal kernels.

pub mod funk_hecke;
pub mod pair;
pub mod recursion;

pub use funk_hecke::{gegenbauer_normalized, harmonic_multiplicity, sphere_area, zonal_eigenvalues};
pub use pair::{gaussian_pair_expectation, pair_expectation, GaussPairMoment, PairMethod};
pub use recursion::{
    ntk_limit, ntk_limit_with, sigma_dot_kernel, sigma_kernel, sigma_recursion, RecursionValues, ZonalKernel,
    ZonalKind,
};
