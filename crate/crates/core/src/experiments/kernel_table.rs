//! Tabulation of limit kernels and their Funk–Hecke eigenvalues.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::activations::ActivationKind;
use crate::error::{invalid, Result};
use crate::experiments::{Budget, DriverOutput, ResultTable};
use crate::kernel::funk_hecke::zonal_eigenvalues;
use crate::kernel::pair::PairMethod;
use crate::kernel::recursion::{ntk_limit_with, sigma_dot_kernel, sigma_kernel, ZonalKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    #[default]
    Ntk,
    Sigma,
    SigmaDot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelTableParams {
    pub activations: Vec<ActivationKind>,
    pub d: usize,
    pub depth: usize,
    pub kernel: KernelChoice,
    /// Layer of `Σ`/`Σ̇`; the depth when absent.
    pub layer: Option<usize>,
    /// Equispaced values of `t` in `[−1, 1]`.
    pub points: usize,
    pub ell_max: usize,
    pub quad_order: usize,
    pub method: PairMethod,
}

impl Default for KernelTableParams {
    fn default() -> Self {
        Self {
            activations: vec![ActivationKind::Relu],
            d: 2,
            depth: 2,
            kernel: KernelChoice::Ntk,
            layer: None,
            points: 201,
            ell_max: 20,
            quad_order: 200,
            method: PairMethod::Auto,
        }
    }
}

impl KernelTableParams {
    pub fn validate(&self) -> Result<()> {
        if self.activations.is_empty() || self.points < 2 || self.d < 2 {
            return invalid("kernel_table needs activations, d >= 2 and at least two points");
        }
        if self.kernel == KernelChoice::Ntk && self.depth < 2 {
            return invalid("the NTK needs depth >= 2");
        }
        if self.layer.is_some_and(|l| l == 0 || l > self.depth) {
            return invalid("layer must lie in 1..=depth");
        }
        Ok(())
    }

    fn build(&self, act: ActivationKind) -> Result<ZonalKernel> {
        let acts = [act.spec()];
        let layer = self.layer.unwrap_or(self.depth);
        match self.kernel {
            KernelChoice::Ntk => ntk_limit_with(&acts, self.d, self.depth, self.method),
            KernelChoice::Sigma => sigma_kernel(&acts, self.d, layer, self.method),
            KernelChoice::SigmaDot => sigma_dot_kernel(&acts, self.d, layer, self.method),
        }
    }
}

pub fn exp_kernel_table(p: &KernelTableParams, budget: &Budget) -> Result<DriverOutput> {
    p.validate()?;
    let ts: Vec<f64> = (0..p.points)
        .map(|i| (-1.0 + 2.0 * i as f64 / (p.points - 1) as f64).clamp(-1.0, 1.0))
        .collect();
    let mut values = ResultTable::new("kernel", &["activation", "t", "value"]);
    let mut eigen = ResultTable::new("eigenvalues", &["activation", "ell", "multiplicity", "lambda"]);
    let mut variances = serde_json::Map::new();
    for &act in &p.activations {
        budget.check()?;
        let k = p.build(act)?;
        for (t, v) in ts.iter().zip(k.eval_many(&ts)?) {
            values.push(vec![act.name().into(), (*t).into(), v.into()]);
        }
        let spec = zonal_eigenvalues(&k, p.ell_max, p.quad_order)?;
        for (l, (v, m)) in spec.eigenvalues.iter().zip(&spec.multiplicities).enumerate() {
            eigen.push(vec![act.name().into(), l.into(), (*m).into(), (*v).into()]);
        }
        variances.insert(act.name().into(), json!(k.variance_track));
    }
    Ok(DriverOutput {
        tables: vec![values, eigen],
        summary: json!({ "variance_track": variances }),
        checks: Vec::new(),
        artifacts: Vec::new(),
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_ntk_is_linear() {
        let p = KernelTableParams {
            activations: vec![ActivationKind::Identity],
            points: 5,
            ..Default::default()
        };
        let out = exp_kernel_table(&p, &Budget::new(30.0)).unwrap();
        let t = out.tables[0].numeric_column("t").unwrap();
        let v = out.tables[0].numeric_column("value").unwrap();
        for (t, v) in t.iter().zip(&v) {
            assert!((t - v).abs() < 1e-12);
        }
        assert_eq!(t, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn layer_bounds() {
        assert!(KernelTableParams { layer: Some(3), ..Default::default() }.validate().is_err());
        assert!(KernelTableParams { layer: Some(0), ..Default::default() }.validate().is_err());
    }
}
