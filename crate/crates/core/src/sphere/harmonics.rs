//! Real spherical harmonics, orthonormal for the uniform probability measure.
//!
//! On the circle degree ℓ ≥ 1 carries `√2 cos ℓθ` (index 0) and `√2 sin ℓθ`
//! (index 1). On `S²` degree ℓ carries `2ℓ + 1` functions ordered
//! `m = 0, (m = 1, cos), (m = 1, sin), …`.

use ndarray::ArrayView1;

use crate::error::{invalid, Result};
use crate::kernel::funk_hecke::harmonic_multiplicity;
use crate::par;
use crate::sphere::grid::{GridKind, SphereGrid};

/// Degree cap for harmonic analysis on `S²`.
pub const D3_MAX_DEGREE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoeffs {
    pub d: usize,
    pub ell_max: usize,
    /// `coeffs[ℓ][j]` for `j < ν(ℓ)`.
    pub coeffs: Vec<Vec<f64>>,
}

impl HarmonicCoeffs {
    pub fn zeros(d: usize, ell_max: usize) -> Self {
        Self {
            d,
            ell_max,
            coeffs: (0..=ell_max).map(|l| vec![0.0; harmonic_multiplicity(d, l)]).collect(),
        }
    }

    /// Energy per degree, `Σ_j f̂_{ℓj}²`.
    pub fn degree_energy(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.iter().map(|v| v * v).sum()).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.coeffs.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|v| v.is_finite())
    }
}

/// `(Σ (1+ℓ)^{2α} |f̂_{ℓj}|²)^{1/2}`; `α` may be negative.
pub fn sobolev_norm(coeffs: &HarmonicCoeffs, alpha: f64) -> f64 {
    coeffs
        .degree_energy()
        .iter()
        .enumerate()
        .map(|(l, e)| (1.0 + l as f64).powf(2.0 * alpha) * e)
        .sum::<f64>()
        .sqrt()
}

/// `Σ (1+ℓ)^{2α} f̂_{ℓj} ĝ_{ℓj}` over the common degrees.
pub fn sobolev_inner(f: &HarmonicCoeffs, g: &HarmonicCoeffs, alpha: f64) -> f64 {
    f.coeffs
        .iter()
        .zip(&g.coeffs)
        .enumerate()
        .map(|(l, (a, b))| {
            let w = (1.0 + l as f64).powf(2.0 * alpha);
            w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
        })
        .sum()
}

/// Applies a zonal operator given by its eigenvalues `λ_ℓ` to coefficients.
pub fn apply_zonal(eigenvalues: &[f64], f: &HarmonicCoeffs) -> Result<HarmonicCoeffs> {
    if eigenvalues.len() <= f.ell_max {
        return invalid("not enough eigenvalues for the coefficient degree");
    }
    let mut out = f.clone();
    for (l, c) in out.coeffs.iter_mut().enumerate() {
        c.iter_mut().for_each(|v| *v *= eigenvalues[l]);
    }
    Ok(out)
}

fn circle_basis(ell_max: usize, theta: f64) -> Vec<Vec<f64>> {
    let s2 = std::f64::consts::SQRT_2;
    (0..=ell_max)
        .map(|l| {
            if l == 0 {
                vec![1.0]
            } else {
                let a = l as f64 * theta;
                vec![s2 * a.cos(), s2 * a.sin()]
            }
        })
        .collect()
}

/// Fully normalized associated Legendre values `P̄_ℓ^m(t)`, `m ≤ ℓ ≤ ell_max`,
/// with `∫ P̄² dt/2 = 1` for `m = 0` and the same scaling for `m > 0`.
fn legendre_normalized(ell_max: usize, t: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - t * t).max(0.0).sqrt();
    let mut p = vec![vec![0.0; ell_max + 1]; ell_max + 1];
    p[0][0] = 1.0;
    for m in 1..=ell_max {
        let mf = m as f64;
        p[m][m] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[m - 1][m - 1];
    }
    for m in 0..ell_max {
        let mf = m as f64;
        p[m + 1][m] = (2.0 * mf + 3.0).sqrt() * t * p[m][m];
        for l in m + 2..=ell_max {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[l][m] = a * (t * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    p
}

fn sphere3_basis(ell_max: usize, x: ArrayView1<'_, f64>) -> Vec<Vec<f64>> {
    let s2 = std::f64::consts::SQRT_2;
    let t = x[2].clamp(-1.0, 1.0);
    let phi = x[1].atan2(x[0]);
    let p = legendre_normalized(ell_max, t);
    (0..=ell_max)
        .map(|l| {
            let mut row = Vec::with_capacity(2 * l + 1);
            row.push(p[l][0]);
            for m in 1..=l {
                let mp = m as f64 * phi;
                row.push(s2 * p[l][m] * mp.cos());
                row.push(s2 * p[l][m] * mp.sin());
            }
            row
        })
        .collect()
}

/// Basis values `Y_ℓ^j(x)` for `ℓ ≤ ell_max`.
pub fn basis_at(d: usize, ell_max: usize, x: ArrayView1<'_, f64>) -> Result<Vec<Vec<f64>>> {
    match d {
        2 => Ok(circle_basis(ell_max, x[1].atan2(x[0]))),
        3 => Ok(sphere3_basis(ell_max, x)),
        _ => invalid(format!("harmonic synthesis is only available for d = 2, 3 (got {d})")),
    }
}

fn check_resolution(grid: &SphereGrid, ell_max: usize) -> Result<()> {
    match grid.kind {
        GridKind::UniformCircle => {
            if 2 * ell_max >= grid.n {
                return invalid(format!(
                    "aliasing: 2*ell_max = {} must be below the grid size {}",
                    2 * ell_max,
                    grid.n
                ));
            }
        }
        GridKind::GaussSphereD3 => {
            if ell_max > D3_MAX_DEGREE {
                return invalid(format!("ell_max {ell_max} exceeds the S² cap {D3_MAX_DEGREE}"));
            }
            if ell_max + 1 > grid.n {
                return invalid(format!(
                    "aliasing: ell_max = {ell_max} needs a Gauss-Legendre order above {ell_max}"
                ));
            }
        }
        GridKind::MonteCarlo => {
            return invalid("harmonic analysis needs a uniform_circle or gauss_sphere_d3 grid");
        }
    }
    Ok(())
}

/// `f̂_{ℓj} = Σ_q w_q f(x_q) Y_ℓ^j(x_q)`.
pub fn analyze(values: &[f64], grid: &SphereGrid, ell_max: usize) -> Result<HarmonicCoeffs> {
    if values.len() != grid.len() {
        return invalid(format!("{} values for a grid of {} points", values.len(), grid.len()));
    }
    check_resolution(grid, ell_max)?;
    let d = grid.d;
    let bases: Vec<Vec<Vec<f64>>> = par::map_range(grid.len(), |q| {
        basis_at(d, ell_max, grid.point(q)).expect("dimension checked")
    });
    let mut out = HarmonicCoeffs::zeros(d, ell_max);
    for (q, basis) in bases.iter().enumerate() {
        let wf = grid.weights[q] * values[q];
        for (c, y) in out.coeffs.iter_mut().zip(basis) {
            for (cj, yj) in c.iter_mut().zip(y) {
                *cj += wf * yj;
            }
        }
    }
    Ok(out)
}

/// Evaluates `Σ f̂_{ℓj} Y_ℓ^j` at every grid point.
pub fn synthesize(coeffs: &HarmonicCoeffs, grid: &SphereGrid) -> Result<Vec<f64>> {
    if coeffs.d != grid.d {
        return invalid("coefficient and grid dimensions differ");
    }
    let d = grid.d;
    if d != 2 && d != 3 {
        return invalid("synthesis only for d = 2, 3");
    }
    Ok(par::map_range(grid.len(), |q| {
        let basis = basis_at(d, coeffs.ell_max, grid.point(q)).expect("dimension checked");
        basis
            .iter()
            .zip(&coeffs.coeffs)
            .map(|(y, c)| y.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }))
}
