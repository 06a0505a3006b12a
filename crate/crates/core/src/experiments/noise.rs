//! Spread between empirical NTKs of independently initialized networks.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::activations::ActivationKind;
use crate::error::{invalid, Result};
use crate::experiments::{seeded_network, Budget, Check, DriverOutput, ResultTable};
use crate::net::{empirical_ntk, NetDims};
use crate::numerics::linalg::sym_eigenvalues;
use crate::par;
use crate::sphere::grid::{make_grid, GridKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    pub d: usize,
    pub depth: usize,
    pub m: usize,
    pub n: usize,
    pub grid: GridKind,
    /// Seed of the sample points; the master seed when absent.
    pub grid_seed: Option<u64>,
    pub activations: Vec<ActivationKind>,
    /// Network seeds compared with each other.
    pub seed_pairs: Vec<[u64; 2]>,
    /// Acceptance band for the spectral norm.
    pub band: [f64; 2],
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            d: 2,
            depth: 2,
            m: 1000,
            n: 100,
            grid: GridKind::MonteCarlo,
            grid_seed: None,
            activations: vec![ActivationKind::Relu, ActivationKind::Elu, ActivationKind::Gelu],
            seed_pairs: vec![[1, 2]],
            band: [0.1, 0.6],
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        NetDims::uniform(self.d, self.depth, self.m)?;
        if self.depth < 2 {
            return invalid("noise needs depth >= 2");
        }
        if self.activations.is_empty() || self.seed_pairs.is_empty() {
            return invalid("noise needs at least one activation and one seed pair");
        }
        if !(self.band[0] <= self.band[1]) {
            return invalid("band must be ordered");
        }
        Ok(())
    }
}

/// Spectral and Frobenius norms of a symmetric matrix.
pub fn symmetric_norms(a: &Array2<f64>) -> Result<(f64, f64)> {
    let eig = sym_eigenvalues(a)?;
    let spectral = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let frobenius = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((spectral, frobenius))
}

/// `Γ̂_{seed_a} − Γ̂_{seed_b}` on the sample points.
pub fn ntk_difference(p: &NoiseParams, act: ActivationKind, seed: u64, pair: [u64; 2]) -> Result<Array2<f64>> {
    let dims = NetDims::uniform(p.d, p.depth, p.m)?;
    let grid = make_grid(p.d, p.n, p.grid, p.grid_seed.unwrap_or(seed))?;
    let acts = [act.spec()];
    let gram = |key| -> Result<Array2<f64>> {
        Ok(empirical_ntk(&seeded_network(&dims, seed, key), grid.points.view(), &acts)?.values)
    };
    Ok(gram(pair[0])? - gram(pair[1])?)
}

pub fn exp_sampling_noise(p: &NoiseParams, seed: u64, budget: &Budget) -> Result<DriverOutput> {
    p.validate()?;
    let cells: Vec<(ActivationKind, [u64; 2])> = p
        .activations
        .iter()
        .flat_map(|&a| p.seed_pairs.iter().map(move |&s| (a, s)))
        .collect();
    let norms = par::map_slice(&cells, |&(act, pair)| -> Result<(f64, f64, f64)> {
        budget.check()?;
        let diff = ntk_difference(p, act, seed, pair)?;
        let (spectral, frobenius) = symmetric_norms(&diff)?;
        let max_entry = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok((spectral, frobenius, max_entry))
    });
    let mut table = ResultTable::new(
        "noise",
        &["activation", "seed_a", "seed_b", "spectral", "frobenius", "max_entry"],
    );
    let mut checks = Vec::new();
    let mut summary = Vec::new();
    for (&(act, pair), res) in cells.iter().zip(norms) {
        let (spectral, frobenius, max_entry) = res?;
        table.push(vec![
            act.name().into(),
            pair[0].into(),
            pair[1].into(),
            spectral.into(),
            frobenius.into(),
            max_entry.into(),
        ]);
        if pair[0] != pair[1] {
            checks.push(Check::new(
                &format!("spectral_in_band_{}_{}_{}", act.name(), pair[0], pair[1]),
                spectral >= p.band[0] && spectral <= p.band[1],
                format!("spectral norm {spectral:.4} vs band [{}, {}]", p.band[0], p.band[1]),
            ));
        }
        summary.push(json!({"activation": act.name(), "seeds": pair, "spectral": spectral, "frobenius": frobenius}));
    }
    Ok(DriverOutput {
        tables: vec![table],
        summary: json!({ "differences": summary }),
        checks,
        artifacts: Vec::new(),
        failure: None,
    })
}
