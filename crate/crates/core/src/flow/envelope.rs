//! The convergence envelope for `‖κ(t)‖²_{L₂}` and a fit of its constants.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::FlowTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub m: usize,
    pub d: usize,
    /// Constant in the width branch `c·√(d/m)` of `h`.
    pub c_h: f64,
    /// `‖κ(0)‖_{H^{−α}}`.
    pub kappa0_neg: f64,
    /// `‖κ(0)‖_{H^{α}}`.
    pub kappa0_pos: f64,
    /// Prefactor.
    pub c1: f64,
    /// Rate constant in the exponent.
    pub c2: f64,
}

impl EnvelopeParams {
    /// Defaults `β = d/2`, `γ = 1/2`, `c_h = c₁ = c₂ = 1`.
    pub fn new(alpha: f64, d: usize, m: usize, kappa0_neg: f64, kappa0_pos: f64) -> Self {
        Self {
            alpha,
            beta: d as f64 / 2.0,
            gamma: 0.5,
            m,
            d,
            c_h: 1.0,
            kappa0_neg,
            kappa0_pos,
            c1: 1.0,
            c2: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b, g) = (self.alpha, self.beta, self.gamma);
        if !(a > 0.0 && a <= b / 2.0) {
            return invalid(format!("need 0 < alpha <= beta/2, got alpha = {a}, beta = {b}"));
        }
        if !(g > 0.0 && g < 1.0 - a) {
            return invalid(format!("need 0 < gamma < 1 - alpha, got gamma = {g}"));
        }
        if self.m == 0 || self.d == 0 {
            return invalid("m and d must be positive");
        }
        let nonneg = [self.c_h, self.kappa0_neg, self.kappa0_pos, self.c1, self.c2];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return invalid("constants and norms must be finite and nonnegative");
        }
        if h_branches(self).0.max(h_branches(self).1) <= 0.0 {
            return invalid("h must be positive");
        }
        Ok(())
    }

    /// `h^{βγ/(β−α)}`.
    fn h_power(&self) -> f64 {
        let (data, width) = h_branches(self);
        data.max(width).powf(self.beta * self.gamma / (self.beta - self.alpha))
    }

    /// Time-independent summand `A` and coefficient `B` of the exponential.
    fn summands(&self) -> (f64, f64) {
        let q = self.beta / self.alpha;
        (self.h_power() * self.kappa0_pos.powf(q), self.kappa0_neg.powf(q))
    }

    /// Decay rate of the exponential per unit `c₂`.
    fn rate(&self) -> f64 {
        self.h_power() * self.beta / (2.0 * self.alpha)
    }
}

/// The two branches of `h`: the data branch
/// `[‖κ(0)‖_{−α}^{1/2}‖κ(0)‖_α^{1/2}/√m]^{(β−α)/(β(1+γ)−α)}` and the width
/// branch `c_h √(d/m)`.
pub fn h_branches(p: &EnvelopeParams) -> (f64, f64) {
    let m = p.m as f64;
    let base = (p.kappa0_neg * p.kappa0_pos).sqrt() / m.sqrt();
    let expo = (p.beta - p.alpha) / (p.beta * (1.0 + p.gamma) - p.alpha);
    (base.powf(expo), p.c_h * (p.d as f64 / m).sqrt())
}

/// `c₁ [h^{βγ/(β−α)} ‖κ(0)‖_α^{β/α} + ‖κ(0)‖_{−α}^{β/α} e^{−c₂ h^{βγ/(β−α)} (β/2α) t}]^{α/β} ‖κ(0)‖_α`.
pub fn theorem_envelope(p: &EnvelopeParams, t: f64) -> Result<f64> {
    p.validate()?;
    if !(t >= 0.0) {
        return invalid(format!("time {t} must be nonnegative"));
    }
    Ok(p.c1 * shape(p, p.c2, t))
}

fn shape(p: &EnvelopeParams, c2: f64, t: f64) -> f64 {
    let (a, b) = p.summands();
    (a + b * (-c2 * p.rate() * t).exp()).powf(p.alpha / p.beta) * p.kappa0_pos
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeFit {
    /// Prefactor raised until the envelope covers every checkpoint.
    pub c1: f64,
    pub c2: f64,
    /// Least-squares prefactor before raising.
    pub c1_ls: f64,
    pub coverage: f64,
    /// Coverage with `c1_ls`.
    pub coverage_ls: f64,
    /// Root-mean-square residual of the log fit.
    pub rms_log_residual: f64,
    /// Data and width branches of `h`.
    pub h_data: f64,
    pub h_width: f64,
    pub skipped: bool,
}

fn coverage(values: &[f64], env: &[f64]) -> f64 {
    let hits = values.iter().zip(env).filter(|(v, e)| **v <= **e * (1.0 + 1e-12)).count();
    hits as f64 / values.len() as f64
}

/// Fits `c₁, c₂` to `‖κ(t)‖²_{L₂}` in log space.
///
/// For fixed `c₂` the optimal `log c₁` is the mean log residual; `c₂` is
/// found by a scan over `log c₂ ∈ [−14, 6]` followed by golden-section
/// refinement. The reported `c₁` is the least-squares value raised by the
/// largest log residual, so that the envelope bounds the whole trace.
pub fn envelope_fit(trace: &FlowTrace, base: &EnvelopeParams) -> Result<EnvelopeFit> {
    let p = EnvelopeParams {
        c1: 1.0,
        c2: 1.0,
        ..*base
    };
    p.validate()?;
    if trace.len() < 10 {
        return invalid(format!("need at least 10 checkpoints, got {}", trace.len()));
    }
    let values: Vec<f64> = trace.norm_l2.iter().map(|v| v * v).collect();
    let (h_data, h_width) = h_branches(&p);
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    let (a, b) = p.summands();
    if pts.is_empty() || p.kappa0_pos == 0.0 || !(a + b > 0.0) {
        return Ok(EnvelopeFit {
            c1: 0.0,
            c2: 0.0,
            c1_ls: 0.0,
            coverage: 1.0,
            coverage_ls: 1.0,
            rms_log_residual: 0.0,
            h_data,
            h_width,
            skipped: true,
        });
    }
    let residuals = |c2: f64| -> Vec<f64> { pts.iter().map(|(t, ly)| ly - shape(&p, c2, *t).ln()).collect() };
    let sse = |log_c2: f64| -> f64 {
        let r = residuals(log_c2.exp());
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|x| (x - mean).powi(2)).sum()
    };
    let time_dependent = b > 0.0 && p.rate() > 0.0 && pts.iter().any(|(t, _)| *t > 0.0);
    let c2 = if time_dependent {
        let (lo, hi, n) = (-14.0, 6.0, 400);
        let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let best = (0..=n)
            .min_by(|&i, &j| sse(grid[i]).total_cmp(&sse(grid[j])))
            .expect("nonempty scan");
        let (mut x0, mut x1) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = x1 - phi * (x1 - x0);
            let b = x0 + phi * (x1 - x0);
            if sse(a) <= sse(b) {
                x1 = b;
            } else {
                x0 = a;
            }
            if (x1 - x0).abs() < 1e-14 {
                break;
            }
        }
        (0.5 * (x0 + x1)).exp()
    } else {
        0.0
    };
    let r = residuals(c2);
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let max = r.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let rms = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
    let c1_ls = mean.exp();
    let c1 = c1_ls * (max - mean).exp();
    let env = |c1: f64| -> Vec<f64> { trace.times.iter().map(|t| c1 * shape(&p, c2, *t)).collect() };
    Ok(EnvelopeFit {
        c1,
        c2,
        c1_ls,
        coverage: coverage(&values, &env(c1)),
        coverage_ls: coverage(&values, &env(c1_ls)),
        rms_log_residual: rms,
        h_data,
        h_width,
        skipped: false,
    })
}
