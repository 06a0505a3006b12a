//! Sphere grids, harmonic analysis, Sobolev norms, Hölder estimators and
//! target functions.

pub mod grid;
pub mod harmonics;
pub mod holder;
pub mod target;

pub use grid::{make_grid, GridKind, SphereGrid};
pub use harmonics::{analyze, apply_zonal, basis_at, sobolev_inner, sobolev_norm, synthesize, HarmonicCoeffs};
pub use holder::{holder_norm, holder_seminorm, mixed_holder_seminorm, MixedHolder};
pub use target::{make_target, make_target_band, random_sobolev_coeffs, target_cutoff, NamedTarget, Target, TargetKind, TargetSpec};
