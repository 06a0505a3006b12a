//! Eigenvalues of zonal integral operators on the sphere.
//!
//! For the uniform probability measure on `S^{d−1}` the operator with kernel
//! `k(x·y)` acts on degree-ℓ harmonics by
//! `λ_ℓ = ∫ k(cos θ) P_ℓ(cos θ) sin^{d−2}θ dθ / ∫ sin^{d−2}θ dθ`, with `P_ℓ` the
//! Gegenbauer polynomial normalized by `P_ℓ(1) = 1`. Eigenvalues for the
//! unnormalized surface measure are larger by `|S^{d−1}|`.
//!
//! The integral is taken in the angle `θ` with composite Gauss–Legendre
//! panels: kernels built from arc-cosine terms are analytic in `θ` on
//! `[0, π]` even where they are only Hölder in `t`.

use crate::error::{Error, Result};
use crate::kernel::recursion::ZonalKernel;
use crate::numerics::linalg::SpectralDecomposition;
use crate::numerics::quadrature::gauss_legendre;
use crate::par;

const PANEL_ORDER: usize = 16;

/// Number of linearly independent degree-ℓ harmonics on `S^{d−1}`.
pub fn harmonic_multiplicity(d: usize, ell: usize) -> usize {
    fn binom(n: usize, k: usize) -> u128 {
        if k > n {
            return 0;
        }
        let k = k.min(n - k);
        (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
    }
    match (d, ell) {
        (_, 0) => 1,
        (2, _) => 2,
        // C(ℓ + d − 1, d − 1) − C(ℓ + d − 3, d − 1)
        _ => (binom(ell + d - 1, d - 1) - binom(ell + d - 3, d - 1)) as usize,
    }
}

/// `P_0 .. P_{ell_max}` at `t`, normalized so that `P_ℓ(1) = 1`.
pub fn gegenbauer_normalized(d: usize, ell_max: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(ell_max + 1);
    p.push(1.0);
    if ell_max == 0 {
        return p;
    }
    p.push(t);
    let dm2 = d as f64 - 2.0;
    for l in 1..ell_max {
        let lf = l as f64;
        let next = ((2.0 * lf + dm2) * t * p[l] - lf * p[l - 1]) / (lf + dm2);
        p.push(next);
    }
    p
}

fn angular_rule(n_nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let panels = n_nodes.div_ceil(PANEL_ORDER).max(1);
    let width = std::f64::consts::PI / panels as f64;
    let mut nodes = Vec::with_capacity(panels * PANEL_ORDER);
    let mut weights = Vec::with_capacity(panels * PANEL_ORDER);
    for k in 0..panels {
        let r = gauss_legendre(PANEL_ORDER, k as f64 * width, (k + 1) as f64 * width)?;
        nodes.extend_from_slice(&r.nodes);
        weights.extend_from_slice(&r.weights);
    }
    Ok((nodes, weights))
}

fn eigenvalues_at(kernel: &ZonalKernel, ell_max: usize, n_nodes: usize) -> Result<Vec<f64>> {
    let (theta, w) = angular_rule(n_nodes)?;
    let ts: Vec<f64> = theta.iter().map(|th| th.cos()).collect();
    let values = kernel.eval_many(&ts)?;
    let d = kernel.d;
    let measure: Vec<f64> = theta
        .iter()
        .zip(&w)
        .map(|(th, w)| w * th.sin().powi(d as i32 - 2))
        .collect();
    let z: f64 = measure.iter().sum();
    let polys: Vec<Vec<f64>> = ts.iter().map(|&t| gegenbauer_normalized(d, ell_max, t)).collect();
    Ok(par::map_range(ell_max + 1, |l| {
        let s: f64 = (0..ts.len()).map(|q| measure[q] * values[q] * polys[q][l]).sum();
        s / z
    }))
}

/// Funk–Hecke eigenvalues `λ_0 .. λ_{ell_max}` with multiplicities.
///
/// `quad_order` (at least `4·ell_max`) is the number of angular nodes. The
/// result is cross-checked against a run with twice as many nodes and an
/// aliasing error is raised if `λ_{ell_max}` moves by more than `1e−9` of the
/// largest eigenvalue.
pub fn zonal_eigenvalues(kernel: &ZonalKernel, ell_max: usize, quad_order: usize) -> Result<SpectralDecomposition> {
    if kernel.d < 2 {
        return Err(Error::InvalidArgument("sphere dimension must be at least 2".into()));
    }
    if quad_order < 4 * ell_max.max(1) {
        return Err(Error::Aliasing(format!(
            "quadrature order {quad_order} below 4*ell_max = {}",
            4 * ell_max.max(1)
        )));
    }
    let coarse = eigenvalues_at(kernel, ell_max, quad_order)?;
    let fine = eigenvalues_at(kernel, ell_max, 2 * quad_order)?;
    let scale = coarse.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let drift = (coarse[ell_max] - fine[ell_max]).abs();
    if drift > 1e-9 * scale {
        return Err(Error::Aliasing(format!(
            "lambda_{ell_max} changed by {drift:e} when doubling the quadrature order"
        )));
    }
    Ok(SpectralDecomposition {
        multiplicities: (0..=ell_max).map(|l| harmonic_multiplicity(kernel.d, l)).collect(),
        eigenvalues: coarse,
        eigenvectors: None,
    })
}

/// Surface area `|S^{d−1}| = 2π^{d/2}/Γ(d/2)`.
pub fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    // Γ(d/2) for integer and half-integer arguments
    let mut gamma = if d % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x < d as f64 / 2.0 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(d as f64 / 2.0) / gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn multiplicities() {
        assert_eq!((0..5).map(|l| harmonic_multiplicity(2, l)).collect::<Vec<_>>(), vec![1, 2, 2, 2, 2]);
        assert_eq!((0..5).map(|l| harmonic_multiplicity(3, l)).collect::<Vec<_>>(), vec![1, 3, 5, 7, 9]);
        // d = 4: (ℓ+1)²
        assert_eq!((0..5).map(|l| harmonic_multiplicity(4, l)).collect::<Vec<_>>(), vec![1, 4, 9, 16, 25]);
    }

    #[test]
    fn gegenbauer_special_cases() {
        let t: f64 = 0.3;
        let cheb = gegenbauer_normalized(2, 5, t);
        for (l, v) in cheb.iter().enumerate() {
            assert_abs_diff_eq!(*v, (l as f64 * t.acos()).cos(), epsilon = 1e-14);
        }
        let leg = gegenbauer_normalized(3, 3, t);
        assert_abs_diff_eq!(leg[2], 0.5 * (3.0 * t * t - 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(leg[3], 0.5 * (5.0 * t.powi(3) - 3.0 * t), epsilon = 1e-15);
        for d in 2..6 {
            assert!(gegenbauer_normalized(d, 8, 1.0).iter().all(|v| (v - 1.0).abs() < 1e-13));
        }
    }

    #[test]
    fn constant_and_linear_kernels() {
        let one = ZonalKernel::custom(2, |_| 1.0);
        let e = zonal_eigenvalues(&one, 6, 24).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0], 1.0, epsilon = 1e-14);
        assert!(e.eigenvalues[1..].iter().all(|v| v.abs() < 1e-14));
        let lin = ZonalKernel::custom(2, |t| t);
        let e = zonal_eigenvalues(&lin, 6, 24).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[1], 0.5, epsilon = 1e-14);
        assert!(e.eigenvalues.iter().enumerate().all(|(l, v)| l == 1 || v.abs() < 1e-14));
        // d = 3: k(t) = t has λ_1 = 1/3
        let lin3 = ZonalKernel::custom(3, |t| t);
        let e = zonal_eigenvalues(&lin3, 4, 16).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn trace_identity() {
        // Σ ν(ℓ) λ_ℓ = k(1) for a band-limited kernel
        let k = ZonalKernel::custom(3, |t| 1.0 + t + t.powi(4));
        let e = zonal_eigenvalues(&k, 6, 24).unwrap();
        let trace: f64 = e.eigenvalues.iter().zip(&e.multiplicities).map(|(v, m)| v * *m as f64).sum();
        assert_abs_diff_eq!(trace, 3.0, epsilon = 1e-13);
    }

    #[test]
    fn order_too_small_is_aliasing() {
        let k = ZonalKernel::custom(2, |t| t);
        assert!(matches!(zonal_eigenvalues(&k, 10, 20), Err(Error::Aliasing(_))));
        // a kernel with a kink inside (−1, 1) cannot be resolved by a coarse rule
        let kink = ZonalKernel::custom(2, |t| (t - 0.3).abs());
        assert!(matches!(zonal_eigenvalues(&kink, 40, 160), Err(Error::Aliasing(_))));
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert_abs_diff_eq!(sphere_area(2), 2.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(sphere_area(3), 4.0 * PI, epsilon = 1e-13);
        assert_abs_diff_eq!(sphere_area(4), 2.0 * PI * PI, epsilon = 1e-13);
    }
}
