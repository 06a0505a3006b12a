//! Activation registry: values, derivatives, growth metadata and Hermite
//! coefficients of rescaled activations `σ_a(x) = σ(a x)`.

use std::f64::consts::{LN_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::hermite::hermite_normalized;
use crate::numerics::quadrature::{gauss_half_line_rule, gauss_hermite_rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    ReluSqrt2,
    Elu,
    Gelu,
    Softplus,
    Erf,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 8] = [
        ActivationKind::Relu,
        ActivationKind::ReluSqrt2,
        ActivationKind::Elu,
        ActivationKind::Gelu,
        ActivationKind::Softplus,
        ActivationKind::Erf,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::ReluSqrt2 => "relu_sqrt2",
            ActivationKind::Elu => "elu",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Erf => "erf",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
        }
    }

    pub fn spec(self) -> ActivationSpec {
        ActivationSpec::new(self)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown activation '{s}'")))
    }
}

/// An activation together with its regularity metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    /// Highest everywhere-continuous derivative; `-1` means infinitely smooth.
    pub smoothness_class: i32,
    /// `G` in `|σ(x)| ≤ G|x| + growth_offset`.
    pub growth_constant: f64,
    /// Nonzero only for softplus, whose value at the origin is `ln 2`.
    pub growth_offset: f64,
    /// Upper bound of `|σ'|` on the real line.
    pub derivative_bound: f64,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind) -> Self {
        let two_over_sqrt_pi = 2.0 / PI.sqrt();
        let (smoothness_class, growth_constant, growth_offset, derivative_bound) = match kind {
            ActivationKind::Relu => (0, 1.0, 0.0, 1.0),
            ActivationKind::ReluSqrt2 => (0, SQRT_2, 0.0, SQRT_2),
            ActivationKind::Elu => (1, 1.0, 0.0, 1.0),
            // max of Φ(x) + xφ(x), attained at x = √2
            ActivationKind::Gelu => (-1, 1.0, 0.0, 1.13),
            ActivationKind::Softplus => (-1, 1.0, LN_2, 1.0),
            ActivationKind::Erf => (-1, two_over_sqrt_pi, 0.0, two_over_sqrt_pi),
            ActivationKind::Tanh => (-1, 1.0, 0.0, 1.0),
            ActivationKind::Identity => (-1, 1.0, 0.0, 1.0),
        };
        Self {
            kind,
            smoothness_class,
            growth_constant,
            growth_offset,
            derivative_bound,
        }
    }

    /// True for kinds whose value or derivative has a kink at the origin.
    pub fn is_kinked(&self) -> bool {
        self.smoothness_class >= 0
    }

    /// Smoothness of at least `k` continuous derivatives.
    pub fn is_at_least(&self, k: i32) -> bool {
        self.smoothness_class < 0 || self.smoothness_class >= k
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::ReluSqrt2 => SQRT_2 * x.max(0.0),
            ActivationKind::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            ActivationKind::Gelu => x * normal_cdf(x),
            ActivationKind::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            ActivationKind::Erf => libm::erf(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative; at kinks the right-hand value is returned.
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::ReluSqrt2 => {
                if x >= 0.0 {
                    SQRT_2
                } else {
                    0.0
                }
            }
            ActivationKind::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            ActivationKind::Gelu => normal_cdf(x) + x * normal_pdf(x),
            ActivationKind::Softplus => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            ActivationKind::Erf => 2.0 / PI.sqrt() * (-x * x).exp(),
            ActivationKind::Tanh => 1.0 - x.tanh().powi(2),
            ActivationKind::Identity => 1.0,
        }
    }
}

pub fn act_eval(spec: &ActivationSpec, x: f64) -> f64 {
    spec.value(x)
}

pub fn act_deriv(spec: &ActivationSpec, x: f64) -> f64 {
    spec.derivative(x)
}

/// `E[g(u)]` for a standard normal `u`, where `g` may have a kink or jump at
/// `u = 0` when `kinked` is set. Kinked integrands are split at the origin and
/// each half integrated with a half-line Gauss rule, which is exact for
/// piecewise polynomials of degree below `2·order`.
pub fn expect_standard_normal<G>(kinked: bool, order: usize, g: G) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    if kinked {
        let rule = gauss_half_line_rule(order, 0)?;
        Ok(rule.integrate(|u| g(u) + g(-u)))
    } else {
        let rule = gauss_hermite_rule(order)?;
        Ok(rule.integrate(g))
    }
}

/// Coefficients of `σ_a` in the normalized Hermite basis `H̄_k = H_k/√(k!)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteCoeffs {
    pub scale: f64,
    pub coeffs: Vec<f64>,
    pub truncation: usize,
    /// `E[σ_a(u)²]`.
    pub norm_sq: f64,
    /// `E[σ_a(u)²] − Σ c_k²`, clamped at zero.
    pub tail_bound: f64,
}

/// Which function of the activation is expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Value,
    Derivative,
}

impl ActivationSpec {
    pub fn part(&self, part: Part, x: f64) -> f64 {
        match part {
            Part::Value => self.value(x),
            Part::Derivative => self.derivative(x),
        }
    }
}

/// `c_k = E[σ(a u) H̄_k(u)]` for `k = 0..=k_max`.
pub fn hermite_coeffs(spec: &ActivationSpec, a: f64, k_max: usize, quad_order: usize) -> Result<HermiteCoeffs> {
    hermite_coeffs_of(spec, Part::Value, a, k_max, quad_order)
}

/// Same as [`hermite_coeffs`] for either the activation or its derivative.
pub fn hermite_coeffs_of(
    spec: &ActivationSpec,
    part: Part,
    a: f64,
    k_max: usize,
    quad_order: usize,
) -> Result<HermiteCoeffs> {
    if !(a > 0.0 && a <= 10.0) {
        return invalid(format!("scale a = {a} outside (0, 10]"));
    }
    if k_max > 128 {
        return invalid(format!("truncation {k_max} exceeds 128"));
    }
    if quad_order < 2 * k_max {
        return invalid(format!(
            "quadrature order {quad_order} below 2K = {} (aliasing risk)",
            2 * k_max
        ));
    }
    let kinked = spec.is_kinked();
    let (nodes, weights): (Vec<f64>, Vec<f64>) = if kinked {
        let rule = gauss_half_line_rule(quad_order, 0)?;
        let mut nodes = rule.nodes.clone();
        nodes.extend(rule.nodes.iter().map(|x| -x));
        let mut weights = rule.weights.clone();
        weights.extend_from_slice(&rule.weights);
        (nodes, weights)
    } else {
        let rule = gauss_hermite_rule(quad_order)?;
        (rule.nodes.clone(), rule.weights.clone())
    };
    let mut coeffs = vec![0.0; k_max + 1];
    let mut norm_sq = 0.0;
    for (&u, &w) in nodes.iter().zip(&weights) {
        let s = spec.part(part, a * u);
        norm_sq += w * s * s;
        let h = hermite_normalized(k_max, u);
        for (c, hk) in coeffs.iter_mut().zip(&h) {
            *c += w * s * hk;
        }
    }
    let energy: f64 = coeffs.iter().map(|c| c * c).sum();
    Ok(HermiteCoeffs {
        scale: a,
        coeffs,
        truncation: k_max,
        norm_sq,
        tail_bound: (norm_sq - energy).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::hermite::hermite_eval;
    use approx::assert_abs_diff_eq;

    fn grid() -> impl Iterator<Item = f64> {
        (0..10_000).map(|i| -50.0 + 100.0 * i as f64 / 9_999.0)
    }

    #[test]
    fn closed_form_values() {
        let relu = ActivationKind::Relu.spec();
        assert_eq!(relu.value(-1.0), 0.0);
        assert_abs_diff_eq!(ActivationKind::Softplus.spec().value(0.0), LN_2, epsilon = 1e-15);
        let gelu = ActivationKind::Gelu.spec();
        assert_eq!(gelu.value(0.0), 0.0);
        assert_abs_diff_eq!(gelu.derivative(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ActivationKind::ReluSqrt2.spec().value(2.0), 2.0 * SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn kinks_use_right_derivative() {
        assert_eq!(ActivationKind::Relu.spec().derivative(0.0), 1.0);
        assert_eq!(ActivationKind::Elu.spec().derivative(0.0), 1.0);
    }

    #[test]
    fn names_round_trip() {
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("swish".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn growth_and_derivative_bounds() {
        for k in ActivationKind::ALL {
            let s = k.spec();
            for x in grid() {
                assert!(s.value(x).abs() <= s.growth_constant * x.abs() + s.growth_offset + 1e-12, "{k} at {x}");
                assert!(s.derivative(x).abs() <= s.derivative_bound + 1e-12, "{k}' at {x}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for k in ActivationKind::ALL {
            let s = k.spec();
            if !s.is_at_least(1) {
                continue;
            }
            for i in 0..=1000 {
                let x = -5.0 + 10.0 * i as f64 / 1000.0;
                if s.smoothness_class >= 0 && x.abs() < 2.0 * h {
                    continue;
                }
                let fd = (s.value(x + h) - s.value(x - h)) / (2.0 * h);
                assert!((fd - s.derivative(x)).abs() <= 1e-6, "{k} at {x}");
            }
        }
    }

    #[test]
    fn identity_coefficients() {
        let c = hermite_coeffs(&ActivationKind::Identity.spec(), 1.0, 10, 20).unwrap();
        for (k, &v) in c.coeffs.iter().enumerate() {
            assert_abs_diff_eq!(v, if k == 1 { 1.0 } else { 0.0 }, epsilon = 1e-13);
        }
    }

    #[test]
    fn relu_coefficients() {
        let c = hermite_coeffs(&ActivationKind::Relu.spec(), 1.0, 64, 128).unwrap();
        assert_abs_diff_eq!(c.coeffs[0], 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(c.coeffs[1], 0.5, epsilon = 1e-14);
        for k in (3..=64).step_by(2) {
            assert!(c.coeffs[k].abs() <= 1e-10, "c_{k} = {}", c.coeffs[k]);
        }
        // c_2 = E[max(u,0)(u²−1)]/√2 = 1/(2√π)
        assert_abs_diff_eq!(c.coeffs[2], 1.0 / (2.0 * PI.sqrt()), epsilon = 1e-14);
        assert_abs_diff_eq!(c.norm_sq, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn aliasing_guard() {
        assert!(hermite_coeffs(&ActivationKind::Gelu.spec(), 1.0, 64, 100).is_err());
        assert!(hermite_coeffs(&ActivationKind::Gelu.spec(), 0.0, 4, 10).is_err());
        assert!(hermite_coeffs(&ActivationKind::Gelu.spec(), 11.0, 4, 10).is_err());
    }

    #[test]
    fn gelu_coefficients_stable_under_refinement() {
        let spec = ActivationKind::Gelu.spec();
        let lo = hermite_coeffs(&spec, 1.0, 64, 128).unwrap();
        let hi = hermite_coeffs(&spec, 1.0, 64, 200).unwrap();
        for (a, b) in lo.coeffs.iter().zip(&hi.coeffs) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn parseval_for_smooth_kinds() {
        for k in [ActivationKind::Gelu, ActivationKind::Erf, ActivationKind::Tanh, ActivationKind::Softplus] {
            for a in [0.7, 1.0, 1.3] {
                let c = hermite_coeffs(&k.spec(), a, 64, 160).unwrap();
                assert!(c.tail_bound <= 1e-6, "{k} a={a}: tail {}", c.tail_bound);
                let energy: f64 = c.coeffs.iter().map(|v| v * v).sum();
                assert!(energy <= c.norm_sq + 1e-12);
            }
        }
    }

    #[test]
    fn derivative_shift() {
        // E[σ(u) H_n(u)] = E[σ'(u) H_{n-1}(u)]
        for k in [ActivationKind::Gelu, ActivationKind::Erf, ActivationKind::Tanh, ActivationKind::Softplus] {
            let s = k.spec();
            for n in 1..=6 {
                let lhs = expect_standard_normal(false, 120, |u| s.value(u) * hermite_eval(n, u)).unwrap();
                let rhs = expect_standard_normal(false, 120, |u| s.derivative(u) * hermite_eval(n - 1, u)).unwrap();
                assert!((lhs - rhs).abs() <= 1e-10, "{k} n={n}: {lhs} vs {rhs}");
            }
        }
    }
}
