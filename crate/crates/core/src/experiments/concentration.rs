//! Width dependence of the sup-entry gap between empirical and limit NTK.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::activations::ActivationKind;
use crate::error::{invalid, Result};
use crate::experiments::fit::fit_loglog;
use crate::experiments::{check_geometric, seeded_network, Budget, Check, DriverOutput, ResultTable};
use crate::kernel::pair::PairMethod;
use crate::kernel::recursion::ntk_limit_with;
use crate::net::{empirical_ntk, GramMatrix, NetDims};
use crate::par;
use crate::sphere::grid::{make_grid, GridKind, SphereGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConcentrationParams {
    pub d: usize,
    pub depth: usize,
    pub activations: Vec<ActivationKind>,
    /// Increasing geometric list of widths.
    pub widths: Vec<usize>,
    /// Networks per width.
    pub seeds: usize,
    /// Points of the fixed evaluation grid (uniform circle for `d = 2`).
    pub grid_n: usize,
    pub method: PairMethod,
    /// Acceptance interval for the fitted slope.
    pub slope_band: [f64; 2],
}

impl Default for ConcentrationParams {
    fn default() -> Self {
        Self {
            d: 2,
            depth: 2,
            activations: vec![ActivationKind::Relu, ActivationKind::Gelu],
            widths: (6..=12).map(|k| 1usize << k).collect(),
            seeds: 10,
            grid_n: 20,
            method: PairMethod::Auto,
            slope_band: [-0.65, -0.35],
        }
    }
}

impl ConcentrationParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return invalid("concentration needs depth >= 2");
        }
        if self.widths.len() < 4 {
            return invalid("concentration needs at least four widths");
        }
        let w: Vec<f64> = self.widths.iter().map(|&m| m as f64).collect();
        check_geometric(&w, "widths")?;
        if self.seeds < 10 {
            return invalid("concentration needs at least ten seeds");
        }
        if self.activations.is_empty() {
            return invalid("concentration needs at least one activation");
        }
        evaluation_grid(self.d, self.grid_n)?;
        Ok(())
    }
}

/// Uniform circle for `d = 2`, seeded random points otherwise.
pub fn evaluation_grid(d: usize, n: usize) -> Result<SphereGrid> {
    if d == 2 {
        make_grid(2, n, GridKind::UniformCircle, 0)
    } else {
        make_grid(d, n, GridKind::MonteCarlo, 0)
    }
}

/// `max_ij |Γ̂(x_i, x_j) − Γ(x_i·x_j)|` for network `key` of width `m`.
pub fn sup_gap(
    limit: &GramMatrix,
    grid: &SphereGrid,
    act: ActivationKind,
    depth: usize,
    m: usize,
    seed: u64,
    key: u64,
) -> Result<f64> {
    let dims = NetDims::uniform(grid.d, depth, m)?;
    let net = seeded_network(&dims, seed, key);
    let emp = empirical_ntk(&net, grid.points.view(), &[act.spec()])?;
    Ok(emp
        .values
        .iter()
        .zip(&limit.values)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs())))
}

/// Standard error over seeds of the per-seed log-log slopes; `gaps` is
/// width-major with `seeds` entries per width.
pub fn seed_slope_stderr(widths: &[f64], gaps: &[f64], seeds: usize) -> Result<f64> {
    let slopes = (0..seeds)
        .map(|k| {
            let ys: Vec<f64> = (0..widths.len()).map(|w| gaps[w * seeds + k]).collect();
            fit_loglog(widths, &ys).map(|f| f.slope)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / n;
    let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var / n).sqrt())
}

pub fn exp_concentration(p: &ConcentrationParams, seed: u64, budget: &Budget) -> Result<DriverOutput> {
    p.validate()?;
    let grid = evaluation_grid(p.d, p.grid_n)?;
    let mut raw = ResultTable::new("gaps", &["activation", "m", "seed", "sup_gap"]);
    let mut means = ResultTable::new("widths", &["activation", "m", "mean_sup_gap", "std_sup_gap"]);
    let mut slopes = ResultTable::new(
        "slopes",
        &["activation", "slope", "slope_stderr", "regression_stderr", "intercept", "r_squared"],
    );
    let mut checks = Vec::new();
    let mut curves = serde_json::Map::new();
    for &act in &p.activations {
        let kernel = ntk_limit_with(&[act.spec()], p.d, p.depth, p.method)?;
        let limit = GramMatrix::from_zonal(&kernel, grid.points.view())?;
        let cells: Vec<(usize, usize)> = p
            .widths
            .iter()
            .flat_map(|&m| (0..p.seeds).map(move |k| (m, k)))
            .collect();
        let gaps = par::map_slice(&cells, |&(m, k)| -> Result<f64> {
            budget.check()?;
            sup_gap(&limit, &grid, act, p.depth, m, seed, k as u64)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let mut mean_curve = Vec::with_capacity(p.widths.len());
        for (w, &m) in p.widths.iter().enumerate() {
            let chunk = &gaps[w * p.seeds..(w + 1) * p.seeds];
            for (k, g) in chunk.iter().enumerate() {
                raw.push(vec![act.name().into(), m.into(), k.into(), (*g).into()]);
            }
            let mean = chunk.iter().sum::<f64>() / p.seeds as f64;
            let var = chunk.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (p.seeds as f64 - 1.0);
            means.push(vec![act.name().into(), m.into(), mean.into(), var.sqrt().into()]);
            mean_curve.push(mean);
        }
        let ws: Vec<f64> = p.widths.iter().map(|&m| m as f64).collect();
        let fit = fit_loglog(&ws, &mean_curve)?;
        let stderr = seed_slope_stderr(&ws, &gaps, p.seeds)?;
        slopes.push(vec![
            act.name().into(),
            fit.slope.into(),
            stderr.into(),
            fit.slope_stderr.into(),
            fit.intercept.into(),
            fit.r_squared.into(),
        ]);
        checks.push(Check::new(
            &format!("rate_{}", act.name()),
            fit.slope >= p.slope_band[0] && fit.slope <= p.slope_band[1],
            format!(
                "slope {:.4} ± {:.4} vs [{}, {}]",
                fit.slope, stderr, p.slope_band[0], p.slope_band[1]
            ),
        ));
        curves.insert(
            act.name().into(),
            json!({"mean_sup_gap": mean_curve, "fit": fit, "slope_stderr": stderr}),
        );
    }
    let below = |a: &str, b: &str| -> Option<bool> {
        let ca = curves.get(a)?["mean_sup_gap"].as_array()?.clone();
        let cb = curves.get(b)?["mean_sup_gap"].as_array()?.clone();
        Some(ca.iter().zip(&cb).all(|(x, y)| x.as_f64() < y.as_f64()))
    };
    let observation = below("gelu", "relu");
    Ok(DriverOutput {
        tables: vec![raw, means, slopes],
        summary: json!({"widths": p.widths, "curves": curves, "gelu_below_relu_at_every_width": observation}),
        checks,
        artifacts: Vec::new(),
        failure: None,
    })
}
