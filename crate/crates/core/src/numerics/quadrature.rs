//! Gaussian quadrature rules.
//!
//! Gauss rules are built with Golub–Welsch: nodes are the eigenvalues of the
//! symmetric Jacobi matrix of the weight's three-term recurrence, weights come
//! from the Christoffel function `1 / Σ_k p_k(x)²` of the orthonormal
//! polynomials, which keeps tiny tail weights accurate in relative terms.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Largest supported Gauss order.
pub const MAX_ORDER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// Standard normal probability density on the real line.
    GaussHermiteProb,
    /// Normalized `(1 - t²)^a` on `[-1, 1]`.
    GaussJacobi,
    /// `r^p e^{-r²/2}` on `[0, ∞)`, total mass `∫ r^p e^{-r²/2} dr / √(2π)`.
    GaussHalfLine,
    /// Equispaced nodes on the circle, weights `1/n`.
    TrapezoidCircle,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Makes a rule exactly symmetric about zero by averaging mirrored pairs.
    fn symmetrize(&mut self) {
        let n = self.nodes.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (self.nodes[j] - self.nodes[i]);
            let w = 0.5 * (self.weights[i] + self.weights[j]);
            self.nodes[i] = -x;
            self.nodes[j] = x;
            self.weights[i] = w;
            self.weights[j] = w;
        }
        if n % 2 == 1 {
            self.nodes[n / 2] = 0.0;
        }
    }
}

/// Gauss rule from recurrence coefficients of an orthonormal family:
/// `√β_{k+1} p_{k+1} = (x − α_k) p_k − √β_k p_{k−1}`, `p_0 = 1/√mass`.
/// `alpha` has length n and `beta` holds β_1..β_{n−1}.
fn golub_welsch(alpha: &[f64], beta: &[f64], mass: f64, kind: RuleKind) -> QuadratureRule {
    let n = alpha.len();
    debug_assert_eq!(beta.len() + 1, n);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = alpha[i];
        if i + 1 < n {
            let s = beta[i].sqrt();
            jac[(i, i + 1)] = s;
            jac[(i + 1, i)] = s;
        }
    }
    let mut nodes: Vec<f64> = jac.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let weights = nodes
        .iter()
        .map(|&x| {
            // Christoffel function with probability-normalized p_0 = 1.
            let mut prev = 0.0;
            let mut cur = 1.0;
            let mut sum = 1.0;
            for k in 0..n - 1 {
                let sb_prev = if k == 0 { 0.0 } else { beta[k - 1].sqrt() };
                let next = ((x - alpha[k]) * cur - sb_prev * prev) / beta[k].sqrt();
                prev = cur;
                cur = next;
                sum += cur * cur;
            }
            mass / sum
        })
        .collect();
    QuadratureRule {
        nodes,
        weights,
        kind,
    }
}

type CacheKey = (RuleKind, usize, u64);

fn cached<F>(key: CacheKey, build: F) -> Arc<QuadratureRule>
where
    F: FnOnce() -> QuadratureRule,
{
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&key) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(build());
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .entry(key)
        .or_insert(rule)
        .clone()
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        return invalid("quadrature order must be at least 1");
    }
    if order > MAX_ORDER {
        return invalid(format!("quadrature order {order} exceeds cap {MAX_ORDER}"));
    }
    Ok(())
}

/// Gauss–Hermite rule for the standard normal density (probabilists'
/// convention). The physicists' rule for `e^{-x²}` has nodes `x/√2` and
/// weights multiplied by `√π`.
pub fn gauss_hermite_rule(order: usize) -> Result<Arc<QuadratureRule>> {
    check_order(order)?;
    Ok(cached((RuleKind::GaussHermiteProb, order, 0), || {
        let alpha = vec![0.0; order];
        let beta: Vec<f64> = (1..order).map(|k| k as f64).collect();
        let mut rule = golub_welsch(&alpha, &beta, 1.0, RuleKind::GaussHermiteProb);
        rule.symmetrize();
        rule
    }))
}

/// Gauss–Jacobi rule for the probability weight proportional to
/// `(1 − t²)^a` on `[−1, 1]`, `a > −1`.
pub fn gauss_jacobi_rule(order: usize, a: f64) -> Result<Arc<QuadratureRule>> {
    check_order(order)?;
    if !(a > -1.0) {
        return invalid(format!("Jacobi exponent {a} must exceed -1"));
    }
    Ok(cached((RuleKind::GaussJacobi, order, a.to_bits()), || {
        let alpha = vec![0.0; order];
        let beta: Vec<f64> = (1..order)
            .map(|k| {
                let k = k as f64;
                if k == 1.0 {
                    1.0 / (3.0 + 2.0 * a)
                } else {
                    k * (k + 2.0 * a) / ((2.0 * k + 2.0 * a + 1.0) * (2.0 * k + 2.0 * a - 1.0))
                }
            })
            .collect();
        let mut rule = golub_welsch(&alpha, &beta, 1.0, RuleKind::GaussJacobi);
        rule.symmetrize();
        rule
    }))
}

/// Gauss–Legendre nodes and weights on `[lo, hi]` (weights sum to `hi − lo`).
pub fn gauss_legendre(order: usize, lo: f64, hi: f64) -> Result<QuadratureRule> {
    let base = gauss_jacobi_rule(order, 0.0)?;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Ok(QuadratureRule {
        nodes: base.nodes.iter().map(|&t| mid + half * t).collect(),
        weights: base.weights.iter().map(|&w| 2.0 * half * w).collect(),
        kind: RuleKind::GaussJacobi,
    })
}

/// Gauss rule for `r^p e^{−r²/2} / √(2π)` on `[0, ∞)`, `p ∈ {0, 1, ...}`.
///
/// Recurrence coefficients come from a discretized Stieltjes procedure on a
/// fine composite Gauss–Legendre grid over `[0, 40]`, where the weight is
/// below `e^{−800}` relative to any polynomial of degree ≤ 400.
pub fn gauss_half_line_rule(order: usize, p: u32) -> Result<Arc<QuadratureRule>> {
    check_order(order)?;
    Ok(cached((RuleKind::GaussHalfLine, order, u64::from(p)), || {
        let (alpha, beta, mass) = half_line_recurrence(order, p);
        golub_welsch(&alpha, &beta, mass, RuleKind::GaussHalfLine)
    }))
}

fn half_line_recurrence(order: usize, p: u32) -> (Vec<f64>, Vec<f64>, f64) {
    const PANELS: usize = 80;
    const PANEL_ORDER: usize = 24;
    const R_MAX: f64 = 40.0;
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut xs = Vec::with_capacity(PANELS * PANEL_ORDER);
    let mut ws = Vec::with_capacity(PANELS * PANEL_ORDER);
    let width = R_MAX / PANELS as f64;
    for k in 0..PANELS {
        let panel = gauss_legendre(PANEL_ORDER, k as f64 * width, (k + 1) as f64 * width)
            .expect("panel order is valid");
        for (&x, &w) in panel.nodes.iter().zip(&panel.weights) {
            xs.push(x);
            ws.push(w * x.powi(p as i32) * (-0.5 * x * x).exp() * inv_sqrt_2pi);
        }
    }
    let mass: f64 = ws.iter().sum();
    let n = xs.len();
    // q_k are orthonormal in the discrete inner product <f,g> = Σ w f g.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    basis.push(vec![1.0 / mass.sqrt(); n]);
    let mut alpha: Vec<f64> = Vec::with_capacity(order);
    let mut beta: Vec<f64> = Vec::with_capacity(order);
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(&ws).map(|((x, y), w)| w * x * y).sum()
    };
    for k in 0..order {
        let qk = &basis[k];
        let xq: Vec<f64> = xs.iter().zip(qk).map(|(x, q)| x * q).collect();
        let a_k = dot(qk, &xq);
        alpha.push(a_k);
        if k + 1 == order {
            break;
        }
        let mut r: Vec<f64> = xq.iter().zip(qk).map(|(v, q)| v - a_k * q).collect();
        if k > 0 {
            let sb = beta[k - 1].sqrt();
            for (ri, qi) in r.iter_mut().zip(&basis[k - 1]) {
                *ri -= sb * qi;
            }
        }
        // One full reorthogonalization pass guards against drift.
        for q in &basis {
            let c = dot(&r, q);
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= c * qi;
            }
        }
        let b = dot(&r, &r);
        beta.push(b);
        let s = b.sqrt();
        basis.push(r.into_iter().map(|v| v / s).collect());
    }
    (alpha, beta, mass)
}

/// Equispaced circle rule: angles `2πk/n`, weights `1/n`.
pub fn trapezoid_circle(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return invalid("trapezoid rule needs at least one node");
    }
    let step = 2.0 * std::f64::consts::PI / n as f64;
    Ok(QuadratureRule {
        nodes: (0..n).map(|k| k as f64 * step).collect(),
        weights: vec![1.0 / n as f64; n],
        kind: RuleKind::TrapezoidCircle,
    })
}
