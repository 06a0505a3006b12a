//! Infinite-width covariance recursion and zonal kernels.

use std::fmt;
use std::sync::Arc;

use crate::activations::{ActivationSpec, Part};
use crate::error::{invalid, Result};
use crate::kernel::pair::{pair_expectation, PairMethod};
use crate::par;

/// Kernel values along the recursion at one inner product `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionValues {
    /// `Σ^0(t) .. Σ^L(t)`.
    pub sigma: Vec<f64>,
    /// `v_0 .. v_L` with `v_ℓ = Σ^ℓ(1)`.
    pub variances: Vec<f64>,
    /// `Σ̇^L(t)`, using the top layer's derivative.
    pub sigma_dot_top: f64,
}

/// Per-layer activations: either one per layer `1..=L` or a single one that is
/// broadcast.
pub(crate) fn layer_acts(acts: &[ActivationSpec], depth: usize) -> Result<Vec<ActivationSpec>> {
    match acts.len() {
        0 => invalid("at least one activation is required"),
        1 => Ok(vec![acts[0]; depth]),
        n if n == depth => Ok(acts.to_vec()),
        n => invalid(format!("{n} activations given for {depth} layers")),
    }
}

fn variance_track(acts: &[ActivationSpec], method: PairMethod) -> Result<Vec<f64>> {
    let mut v = vec![1.0f64];
    for act in acts {
        let prev = *v.last().expect("nonempty");
        let s = prev.sqrt();
        v.push(pair_expectation(act, Part::Value, s, s, prev, method)?.value);
    }
    Ok(v)
}

fn sigma_with_variances(
    acts: &[ActivationSpec],
    variances: &[f64],
    upto: usize,
    t: f64,
    method: PairMethod,
) -> Result<Vec<f64>> {
    let mut sigma: Vec<f64> = vec![t];
    for l in 0..upto {
        let s = variances[l].sqrt();
        let cov = sigma[l];
        sigma.push(pair_expectation(&acts[l], Part::Value, s, s, cov, method)?.value);
    }
    Ok(sigma)
}

fn check_t(t: f64) -> Result<f64> {
    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&t) {
        return invalid(format!("inner product {t} outside [-1, 1]"));
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// `Σ^0(t) = t`, `Σ^{ℓ+1}(t) = E[σ(u)σ(v)]` with `(u, v)` centered Gaussian
/// of variances `v_ℓ` and covariance `Σ^ℓ(t)`.
pub fn sigma_recursion(acts: &[ActivationSpec], depth: usize, t: f64, method: PairMethod) -> Result<RecursionValues> {
    if depth == 0 {
        return invalid("depth must be at least 1");
    }
    let t = check_t(t)?;
    let acts = layer_acts(acts, depth)?;
    let variances = variance_track(&acts, method)?;
    let sigma = sigma_with_variances(&acts, &variances, depth, t, method)?;
    let s = variances[depth - 1].sqrt();
    let sigma_dot_top = pair_expectation(&acts[depth - 1], Part::Derivative, s, s, sigma[depth - 1], method)?.value;
    Ok(RecursionValues {
        sigma,
        variances,
        sigma_dot_top,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZonalKind {
    /// `Σ^ℓ`.
    Sigma(usize),
    /// `Σ̇^ℓ`.
    SigmaDot(usize),
    /// `Γ = Σ̇^L · Σ^{L−1}`.
    Ntk,
    Custom,
}

#[derive(Clone)]
enum Evaluator {
    Recursion {
        acts: Vec<ActivationSpec>,
        method: PairMethod,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A kernel on the sphere that depends only on `t = x·y`.
#[derive(Clone)]
pub struct ZonalKernel {
    pub d: usize,
    pub kind: ZonalKind,
    /// `v_1 .. v_L` for recursion kernels; empty for custom ones.
    pub variance_track: Vec<f64>,
    evaluator: Evaluator,
}

impl fmt::Debug for ZonalKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZonalKernel")
            .field("d", &self.d)
            .field("kind", &self.kind)
            .field("variance_track", &self.variance_track)
            .finish_non_exhaustive()
    }
}

impl ZonalKernel {
    /// A kernel given by an explicit profile `t ↦ k(t)`.
    pub fn custom<F>(d: usize, profile: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            d,
            kind: ZonalKind::Custom,
            variance_track: Vec::new(),
            evaluator: Evaluator::Custom(Arc::new(profile)),
        }
    }

    fn recursion(d: usize, kind: ZonalKind, acts: &[ActivationSpec], depth: usize, method: PairMethod) -> Result<Self> {
        if d < 2 {
            return invalid("sphere dimension d must be at least 2");
        }
        let acts = layer_acts(acts, depth)?;
        let variances = variance_track(&acts, method)?;
        Ok(Self {
            d,
            kind,
            variance_track: variances[1..].to_vec(),
            evaluator: Evaluator::Recursion { acts, method },
        })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let t = check_t(t)?;
        let (acts, method) = match &self.evaluator {
            Evaluator::Custom(f) => return Ok(f(t)),
            Evaluator::Recursion { acts, method } => (acts, *method),
        };
        let mut variances = vec![1.0];
        variances.extend_from_slice(&self.variance_track);
        match self.kind {
            ZonalKind::Sigma(l) => Ok(sigma_with_variances(acts, &variances, l, t, method)?[l]),
            ZonalKind::SigmaDot(l) => {
                let sigma = sigma_with_variances(acts, &variances, l - 1, t, method)?;
                let s = variances[l - 1].sqrt();
                Ok(pair_expectation(&acts[l - 1], Part::Derivative, s, s, sigma[l - 1], method)?.value)
            }
            ZonalKind::Ntk => {
                let depth = acts.len();
                let sigma = sigma_with_variances(acts, &variances, depth - 1, t, method)?;
                let s = variances[depth - 1].sqrt();
                let dot = pair_expectation(&acts[depth - 1], Part::Derivative, s, s, sigma[depth - 1], method)?.value;
                Ok(dot * sigma[depth - 1])
            }
            ZonalKind::Custom => unreachable!("custom kernels return early"),
        }
    }

    /// Evaluates at many points in parallel, preserving order.
    pub fn eval_many(&self, ts: &[f64]) -> Result<Vec<f64>> {
        par::map_slice(ts, |&t| self.eval(t)).into_iter().collect()
    }

    /// Checks `lo ≤ v_ℓ ≤ hi` for the whole variance track.
    pub fn check_variance_bounds(&self, lo: f64, hi: f64) -> Result<()> {
        for (l, &v) in self.variance_track.iter().enumerate() {
            if v < lo || v > hi {
                return invalid(format!("variance v_{} = {v} outside [{lo}, {hi}]", l + 1));
            }
        }
        Ok(())
    }
}

/// `Σ^ℓ` as a zonal kernel.
pub fn sigma_kernel(acts: &[ActivationSpec], d: usize, layer: usize, method: PairMethod) -> Result<ZonalKernel> {
    if layer == 0 {
        return invalid("layer must be at least 1");
    }
    ZonalKernel::recursion(d, ZonalKind::Sigma(layer), acts, layer, method)
}

/// `Σ̇^ℓ` as a zonal kernel.
pub fn sigma_dot_kernel(acts: &[ActivationSpec], d: usize, layer: usize, method: PairMethod) -> Result<ZonalKernel> {
    if layer == 0 {
        return invalid("layer must be at least 1");
    }
    ZonalKernel::recursion(d, ZonalKind::SigmaDot(layer), acts, layer, method)
}

/// The infinite-width NTK `Γ(t) = Σ̇^L(t)·Σ^{L−1}(t)`.
pub fn ntk_limit(acts: &[ActivationSpec], d: usize, depth: usize) -> Result<ZonalKernel> {
    ntk_limit_with(acts, d, depth, PairMethod::Auto)
}

pub fn ntk_limit_with(acts: &[ActivationSpec], d: usize, depth: usize, method: PairMethod) -> Result<ZonalKernel> {
    if depth < 2 {
        return invalid(format!("NTK needs depth L >= 2, got {depth}"));
    }
    ZonalKernel::recursion(d, ZonalKind::Ntk, acts, depth, method)
}
