//! Target functions for regression on the sphere.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::funk_hecke::harmonic_multiplicity;
use crate::numerics::rng::RngStream;
use crate::sphere::grid::SphereGrid;
use crate::sphere::harmonics::{analyze, synthesize, HarmonicCoeffs, D3_MAX_DEGREE};

const TARGET_STREAM: u64 = 0x7461_7267;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Random signs on a power-law coefficient envelope.
    RandomSobolev,
    /// A fixed closed-form function, see [`NamedTarget`].
    Named,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedTarget {
    Zero,
    Constant,
    /// First coordinate `x₁`.
    Linear,
    /// The degree-3 harmonic `√2 cos 3θ` (circle) or `P̄_3(x₃)` (S²).
    Harmonic3,
    /// `|x₁|`, only Lipschitz.
    AbsX1,
}

/// Description of a target function.
///
/// `RandomSobolev` draws `f̂_{ℓj} = (1+ℓ)^{−α*−(d−1)/2−0.01} ζ_{ℓj}` with
/// i.i.d. signs `ζ`, so `‖f‖²_{H^{α*}}` is a multiple of `Σ (1+ℓ)^{−1.02}`
/// (finite) while `‖f‖_{H^{α*+0.02}}` diverges as the cutoff grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub kind: TargetKind,
    #[serde(default)]
    pub smoothness: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub name: Option<NamedTarget>,
    #[serde(default)]
    pub description: String,
}

impl TargetSpec {
    pub fn random_sobolev(smoothness: f64, seed: u64) -> Self {
        Self {
            kind: TargetKind::RandomSobolev,
            smoothness,
            seed,
            name: None,
            description: format!("random Sobolev target, smoothness {smoothness}"),
        }
    }

    pub fn named(name: NamedTarget) -> Self {
        Self {
            kind: TargetKind::Named,
            smoothness: 0.0,
            seed: 0,
            name: Some(name),
            description: format!("{name:?}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Target {
    pub values: Vec<f64>,
    pub coeffs: HarmonicCoeffs,
}

/// Largest degree kept for targets on this grid: `n/2 − 1` on the circle,
/// `min(n − 1, 32)` on the Gauss product grid.
pub fn target_cutoff(grid: &SphereGrid) -> Result<usize> {
    match (grid.d, grid.kind) {
        (2, crate::sphere::GridKind::UniformCircle) => Ok(grid.n / 2 - 1),
        (3, crate::sphere::GridKind::GaussSphereD3) => Ok((grid.n - 1).min(D3_MAX_DEGREE)),
        _ => invalid("targets need a uniform_circle or gauss_sphere_d3 grid"),
    }
}

pub fn random_sobolev_coeffs(d: usize, ell_max: usize, smoothness: f64, seed: u64) -> HarmonicCoeffs {
    let mut rng = RngStream::new(seed, TARGET_STREAM);
    let expo = -smoothness - (d as f64 - 1.0) / 2.0 - 0.01;
    let coeffs = (0..=ell_max)
        .map(|l| {
            let amp = (1.0 + l as f64).powf(expo);
            (0..harmonic_multiplicity(d, l)).map(|_| amp * rng.rademacher()).collect()
        })
        .collect();
    HarmonicCoeffs { d, ell_max, coeffs }
}

pub fn make_target(spec: &TargetSpec, grid: &SphereGrid) -> Result<Target> {
    make_target_band(spec, grid, target_cutoff(grid)?)
}

/// As [`make_target`] with random coefficients (and the analysis of named
/// targets) limited to degrees `0..=ell_max`.
pub fn make_target_band(spec: &TargetSpec, grid: &SphereGrid, ell_max: usize) -> Result<Target> {
    let cap = target_cutoff(grid)?;
    if ell_max > cap {
        return invalid(format!("degree {ell_max} exceeds the grid limit {cap}"));
    }
    match spec.kind {
        TargetKind::RandomSobolev => {
            if !spec.smoothness.is_finite() {
                return invalid("target smoothness must be finite");
            }
            let coeffs = random_sobolev_coeffs(grid.d, ell_max, spec.smoothness, spec.seed);
            let values = synthesize(&coeffs, grid)?;
            Ok(Target { values, coeffs })
        }
        TargetKind::Named => {
            let Some(name) = spec.name else {
                return invalid("named targets need a name");
            };
            let last = grid.d - 1;
            let values: Vec<f64> = grid
                .points
                .rows()
                .into_iter()
                .map(|p| match name {
                    NamedTarget::Zero => 0.0,
                    NamedTarget::Constant => 1.0,
                    NamedTarget::Linear => p[0],
                    NamedTarget::Harmonic3 => {
                        if grid.d == 2 {
                            2f64.sqrt() * (3.0 * p[1].atan2(p[0])).cos()
                        } else {
                            let t = p[last];
                            7f64.sqrt() * 0.5 * (5.0 * t.powi(3) - 3.0 * t)
                        }
                    }
                    NamedTarget::AbsX1 => p[0].abs(),
                })
                .collect();
            let coeffs = analyze(&values, grid, ell_max)?;
            Ok(Target { values, coeffs })
        }
    }
}
