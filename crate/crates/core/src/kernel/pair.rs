//! Bivariate Gaussian expectations `E[σ(u)σ(v)]`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::activations::{hermite_coeffs_of, ActivationKind, ActivationSpec, HermiteCoeffs, Part};
use crate::error::{invalid, Error, Result};
use crate::numerics::quadrature::{gauss_half_line_rule, gauss_hermite_rule, gauss_legendre};

/// Hermite truncation used by the Mehler series.
pub const MEHLER_TERMS: usize = 64;
/// Largest `|ρ|` for which the truncated Mehler series is used.
pub const MEHLER_MAX_RHO: f64 = 0.99;
/// Tensor Gauss–Hermite order for smooth activations.
pub const TENSOR_ORDER: usize = 100;
const MEHLER_QUAD_ORDER: usize = 160;
const POLAR_RADIAL_ORDER: usize = 48;
const POLAR_ARC_ORDER: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMethod {
    Mehler,
    Quadrature,
    ClosedFormRelu,
    /// Closed form for the ReLU family, Mehler for smooth kinds when
    /// `|ρ| ≤ 0.99`, quadrature otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPairMoment {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub value: f64,
    pub method: PairMethod,
}

fn mehler_coeffs(spec: &ActivationSpec, part: Part, a: f64) -> Result<Arc<HermiteCoeffs>> {
    type Key = (ActivationKind, Part, u64);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<HermiteCoeffs>>>> = OnceLock::new();
    let key = (spec.kind, part, a.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(c) = cache.lock().expect("coefficient cache poisoned").get(&key) {
        return Ok(Arc::clone(c));
    }
    let c = Arc::new(hermite_coeffs_of(spec, part, a, MEHLER_TERMS, MEHLER_QUAD_ORDER)?);
    Ok(cache
        .lock()
        .expect("coefficient cache poisoned")
        .entry(key)
        .or_insert(c)
        .clone())
}

fn relu_scale_sq(kind: ActivationKind) -> Option<f64> {
    match kind {
        ActivationKind::Relu => Some(1.0),
        ActivationKind::ReluSqrt2 => Some(2.0),
        _ => None,
    }
}

fn closed_form(spec: &ActivationSpec, part: Part, a: f64, b: f64, rho: f64) -> Result<f64> {
    let Some(s2) = relu_scale_sq(spec.kind) else {
        return invalid(format!("closed form only exists for the ReLU family, not {}", spec.kind));
    };
    let theta = rho.acos();
    Ok(match part {
        Part::Value => s2 * a * b * ((1.0 - rho * rho).max(0.0).sqrt() + rho * (PI - theta)) / (2.0 * PI),
        Part::Derivative => s2 * (PI - theta) / (2.0 * PI),
    })
}

fn mehler(spec: &ActivationSpec, part: Part, a: f64, b: f64, rho: f64) -> Result<f64> {
    if rho.abs() > MEHLER_MAX_RHO {
        return Err(Error::MethodDomain(format!(
            "Mehler series needs |rho| <= {MEHLER_MAX_RHO}, got {rho}"
        )));
    }
    let ca = mehler_coeffs(spec, part, a)?;
    let cb = mehler_coeffs(spec, part, b)?;
    let mut pow = 1.0;
    let mut sum = 0.0;
    for (x, y) in ca.coeffs.iter().zip(&cb.coeffs) {
        sum += x * y * pow;
        pow *= rho;
    }
    Ok(sum)
}

fn tensor_quadrature(spec: &ActivationSpec, part: Part, a: f64, b: f64, rho: f64) -> Result<f64> {
    let rule = gauss_hermite_rule(TENSOR_ORDER)?;
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let mut total = 0.0;
    for (&z1, &w1) in rule.nodes.iter().zip(&rule.weights) {
        let su = spec.part(part, a * z1);
        if su == 0.0 {
            continue;
        }
        let inner: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&z2, &w2)| w2 * spec.part(part, b * (rho * z1 + s * z2)))
            .sum();
        total += w1 * su * inner;
    }
    Ok(total)
}

/// Polar quadrature for activations with a kink at the origin.
///
/// With `(u, v) = (a r cos φ, b r cos(φ − φ₀))`, `cos φ₀ = ρ`, the integrand is
/// smooth in `φ` between the four kink angles and smooth in `r`, so each arc
/// gets a Gauss–Legendre rule and the radius a Gauss rule for `r e^{−r²/2}`.
fn polar_quadrature(spec: &ActivationSpec, part: Part, a: f64, b: f64, rho: f64) -> Result<f64> {
    let radial = gauss_half_line_rule(POLAR_RADIAL_ORDER, 1)?;
    let two_pi = 2.0 * PI;
    let phi0 = rho.clamp(-1.0, 1.0).acos();
    let mut cuts: Vec<f64> = [0.5 * PI, 1.5 * PI, phi0 + 0.5 * PI, phi0 + 1.5 * PI]
        .iter()
        .map(|&c| c.rem_euclid(two_pi))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    let mut total = 0.0;
    for i in 0..cuts.len() {
        let lo = cuts[i];
        let hi = if i + 1 < cuts.len() { cuts[i + 1] } else { cuts[0] + two_pi };
        if hi - lo < 1e-15 {
            continue;
        }
        let arc = gauss_legendre(POLAR_ARC_ORDER, lo, hi)?;
        for (&phi, &wphi) in arc.nodes.iter().zip(&arc.weights) {
            let cu = a * phi.cos();
            let cv = b * (phi - phi0).cos();
            let inner: f64 = radial
                .nodes
                .iter()
                .zip(&radial.weights)
                .map(|(&r, &wr)| wr * spec.part(part, r * cu) * spec.part(part, r * cv))
                .sum();
            total += wphi * inner;
        }
    }
    // radial weights carry 1/√(2π); the angular measure is dφ/(2π)
    Ok(total * (two_pi).sqrt() / two_pi)
}

/// `E[g(u) g(v)]` with `g = σ` or `g = σ'` and
/// `(u, v) ~ N(0, [[a², cov], [cov, b²]])`.
pub fn pair_expectation(
    spec: &ActivationSpec,
    part: Part,
    a: f64,
    b: f64,
    cov: f64,
    method: PairMethod,
) -> Result<GaussPairMoment> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return invalid(format!("standard deviations must be positive, got {a}, {b}"));
    }
    if !cov.is_finite() || cov * cov > a * a * b * b * (1.0 + 1e-10) {
        return invalid(format!("covariance {cov} inconsistent with variances {}, {}", a * a, b * b));
    }
    let rho = (cov / (a * b)).clamp(-1.0, 1.0);
    let resolved = match method {
        PairMethod::Auto => {
            if relu_scale_sq(spec.kind).is_some() {
                PairMethod::ClosedFormRelu
            } else if !spec.is_kinked() && rho.abs() <= MEHLER_MAX_RHO {
                PairMethod::Mehler
            } else {
                PairMethod::Quadrature
            }
        }
        m => m,
    };
    let value = match resolved {
        PairMethod::ClosedFormRelu => closed_form(spec, part, a, b, rho)?,
        PairMethod::Mehler => mehler(spec, part, a, b, rho)?,
        PairMethod::Quadrature => {
            if spec.is_kinked() {
                polar_quadrature(spec, part, a, b, rho)?
            } else {
                tensor_quadrature(spec, part, a, b, rho)?
            }
        }
        PairMethod::Auto => unreachable!("resolved above"),
    };
    Ok(GaussPairMoment {
        a,
        b,
        rho,
        value,
        method: resolved,
    })
}

/// `E[σ(u)σ(v)]`; see [`pair_expectation`].
pub fn gaussian_pair_expectation(
    spec: &ActivationSpec,
    a: f64,
    b: f64,
    cov: f64,
    method: PairMethod,
) -> Result<GaussPairMoment> {
    pair_expectation(spec, Part::Value, a, b, cov, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::expect_standard_normal;
    use approx::assert_abs_diff_eq;

    const SMOOTH: [ActivationKind; 4] = [
        ActivationKind::Gelu,
        ActivationKind::Erf,
        ActivationKind::Tanh,
        ActivationKind::Softplus,
    ];

    #[test]
    fn independence_factorizes() {
        for kind in ActivationKind::ALL {
            let s = kind.spec();
            for method in [PairMethod::Quadrature, PairMethod::Auto] {
                let m = gaussian_pair_expectation(&s, 0.8, 1.2, 0.0, method).unwrap();
                let ea = expect_standard_normal(s.is_kinked(), 100, |u| s.value(0.8 * u)).unwrap();
                let eb = expect_standard_normal(s.is_kinked(), 100, |u| s.value(1.2 * u)).unwrap();
                assert_abs_diff_eq!(m.value, ea * eb, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn identity_returns_covariance() {
        let s = ActivationKind::Identity.spec();
        for method in [PairMethod::Mehler, PairMethod::Quadrature] {
            let m = gaussian_pair_expectation(&s, 1.1, 0.9, 0.5, method).unwrap();
            assert_abs_diff_eq!(m.value, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn relu_method_triangle() {
        let s = ActivationKind::Relu.spec();
        let cf = gaussian_pair_expectation(&s, 1.0, 1.0, 0.5, PairMethod::ClosedFormRelu).unwrap();
        let q = gaussian_pair_expectation(&s, 1.0, 1.0, 0.5, PairMethod::Quadrature).unwrap();
        let m = gaussian_pair_expectation(&s, 1.0, 1.0, 0.5, PairMethod::Mehler).unwrap();
        assert!((cf.value - q.value).abs() <= 1e-9);
        assert!((cf.value - m.value).abs() <= 1e-4);
    }

    #[test]
    fn relu_derivative_closed_form() {
        let s = ActivationKind::ReluSqrt2.spec();
        for rho in [-0.9, -0.3, 0.0, 0.4, 0.99, 1.0] {
            let cf = pair_expectation(&s, Part::Derivative, 1.0, 1.3, rho * 1.3, PairMethod::ClosedFormRelu).unwrap();
            let q = pair_expectation(&s, Part::Derivative, 1.0, 1.3, rho * 1.3, PairMethod::Quadrature).unwrap();
            assert!((cf.value - q.value).abs() <= 1e-12, "rho={rho}");
        }
    }

    #[test]
    fn mehler_matches_quadrature_for_smooth_kinds() {
        for kind in SMOOTH {
            let s = kind.spec();
            for a in [0.7, 1.0, 1.3] {
                for b in [0.7, 1.0, 1.3] {
                    for rho in [0.0, 0.3, -0.3, 0.7, -0.7, 0.95, -0.95] {
                        let cov = rho * a * b;
                        let m = gaussian_pair_expectation(&s, a, b, cov, PairMethod::Mehler).unwrap();
                        let q = gaussian_pair_expectation(&s, a, b, cov, PairMethod::Quadrature).unwrap();
                        assert!((m.value - q.value).abs() <= 1e-6, "{kind} {a} {b} {rho}");
                    }
                }
            }
        }
    }

    #[test]
    fn mehler_refuses_near_one() {
        let s = ActivationKind::Gelu.spec();
        let err = gaussian_pair_expectation(&s, 1.0, 1.0, 0.995, PairMethod::Mehler).unwrap_err();
        assert!(matches!(err, Error::MethodDomain(_)));
        let auto = gaussian_pair_expectation(&s, 1.0, 1.0, 0.995, PairMethod::Auto).unwrap();
        assert_eq!(auto.method, PairMethod::Quadrature);
    }

    #[test]
    fn elu_quadrature_at_full_correlation_is_second_moment() {
        let s = ActivationKind::Elu.spec();
        let m = gaussian_pair_expectation(&s, 1.0, 1.0, 1.0, PairMethod::Quadrature).unwrap();
        let direct = expect_standard_normal(true, 100, |u| s.value(u).powi(2)).unwrap();
        assert_abs_diff_eq!(m.value, direct, epsilon = 1e-12);
    }

    #[test]
    fn rejects_inconsistent_covariance() {
        let s = ActivationKind::Tanh.spec();
        assert!(gaussian_pair_expectation(&s, 1.0, 1.0, 1.01, PairMethod::Auto).is_err());
        assert!(gaussian_pair_expectation(&s, 0.0, 1.0, 0.0, PairMethod::Auto).is_err());
        // roundoff just above one is clamped
        let m = gaussian_pair_expectation(&s, 1.0, 1.0, 1.0 + 1e-12, PairMethod::Auto).unwrap();
        assert_eq!(m.rho, 1.0);
    }
}
