//! Mixed-Hölder size of the change of the empirical NTK under weight
//! perturbations of prescribed size.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::activations::ActivationKind;
use crate::error::{invalid, Result};
use crate::experiments::concentration::evaluation_grid;
use crate::experiments::fit::fit_loglog;
use crate::experiments::{check_geometric, powers_of_two, seeded_network, Budget, Check, DriverOutput, ResultTable};
use crate::net::{empirical_ntk, NetDims, NetworkParams};
use crate::numerics::linalg::spectral_norm;
use crate::numerics::rng::RngStream;
use crate::par;
use crate::sphere::holder::mixed_holder_seminorm;

const PERTURB_STREAM: u64 = 0x7065_7274;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolderParams {
    pub d: usize,
    pub depth: usize,
    pub m: usize,
    pub activation: ActivationKind,
    /// Hölder exponent used in both arguments.
    pub alpha: f64,
    /// Increasing geometric perturbation sizes in `(0, 1]`.
    pub hs: Vec<f64>,
    pub grid_n: usize,
    /// The fitted slope must reach `1 − α − slope_margin`.
    pub slope_margin: f64,
    /// Perturbed kernels must satisfy `‖Γ̂_pert‖ ≤ bound_factor·‖Γ̂‖`.
    pub bound_factor: f64,
}

impl Default for HolderParams {
    fn default() -> Self {
        Self {
            d: 2,
            depth: 3,
            m: 512,
            activation: ActivationKind::Gelu,
            alpha: 0.25,
            hs: powers_of_two(-7, -1),
            grid_n: 32,
            slope_margin: 0.25,
            bound_factor: 2.0,
        }
    }
}

impl HolderParams {
    pub fn validate(&self) -> Result<()> {
        NetDims::uniform(self.d, self.depth, self.m)?;
        if self.depth < 2 {
            return invalid("holder needs depth >= 2");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        check_geometric(&self.hs, "hs")?;
        if self.hs.len() < 3 || self.hs.iter().any(|h| *h > 1.0) {
            return invalid("hs needs at least three sizes in (0, 1]");
        }
        evaluation_grid(self.d, self.grid_n)?;
        Ok(())
    }
}

/// Fixed directions `√n_ℓ·G^ℓ/‖G^ℓ‖₂` with Gaussian `G^ℓ` drawn from `seed`,
/// one per trained matrix.
pub fn perturbation_directions(params: &NetworkParams, seed: u64) -> Vec<Array2<f64>> {
    let rng = RngStream::new(seed, PERTURB_STREAM);
    par::map_range(params.w.len(), |l| {
        let mut r = rng.derive(l as u64);
        let g = Array2::from_shape_simple_fn(params.w[l].dim(), || r.normal());
        let scale = (params.dims.widths[l] as f64).sqrt() / spectral_norm(g.view(), 1e-13);
        g * scale
    })
}

fn apply_directions(params: &NetworkParams, dirs: &[Array2<f64>], h: f64) -> NetworkParams {
    let mut out = params.clone();
    for (w, d) in out.w.iter_mut().zip(dirs) {
        w.zip_mut_with(d, |a, b| *a += h * b);
    }
    out
}

/// Adds `h` times the directions of [`perturbation_directions`] to every
/// trained matrix; the result is at weight distance `h`.
pub fn perturb_weights(params: &NetworkParams, h: f64, seed: u64) -> NetworkParams {
    apply_directions(params, &perturbation_directions(params, seed), h)
}

pub fn exp_holder_perturbation(p: &HolderParams, seed: u64, budget: &Budget) -> Result<DriverOutput> {
    p.validate()?;
    let grid = evaluation_grid(p.d, p.grid_n)?;
    let dims = NetDims::uniform(p.d, p.depth, p.m)?;
    let acts = [p.activation.spec()];
    let base = seeded_network(&dims, seed, 0);
    let k0 = empirical_ntk(&base, grid.points.view(), &acts)?.values;
    let base_norm = mixed_holder_seminorm(&k0, &grid, p.alpha, p.alpha)?;
    let dirs = perturbation_directions(&base, seed);
    let rows = par::map_slice(&p.hs, |&h| -> Result<_> {
        budget.check()?;
        let k1 = empirical_ntk(&apply_directions(&base, &dirs, h), grid.points.view(), &acts)?.values;
        let diff = mixed_holder_seminorm(&(&k0 - &k1), &grid, p.alpha, p.alpha)?;
        let pert_norm = mixed_holder_seminorm(&k1, &grid, p.alpha, p.alpha)?;
        Ok((h, diff, pert_norm.norm()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut table = ResultTable::new(
        "perturbation",
        &[
            "h",
            "diff_norm",
            "diff_sup",
            "diff_alpha0",
            "diff_0alpha",
            "diff_alphaalpha",
            "perturbed_norm",
            "base_norm",
        ],
    );
    for (h, diff, pert_norm) in &rows {
        table.push(vec![
            (*h).into(),
            diff.norm().into(),
            diff.c00.into(),
            diff.c_alpha0.into(),
            diff.c_0beta.into(),
            diff.c_alphabeta.into(),
            (*pert_norm).into(),
            base_norm.norm().into(),
        ]);
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let diffs: Vec<f64> = rows.iter().map(|r| r.1.norm()).collect();
    let fit = fit_loglog(&hs, &diffs)?;
    let required = 1.0 - p.alpha - p.slope_margin;
    let worst_ratio = rows.iter().map(|r| r.2 / base_norm.norm()).fold(0.0f64, f64::max);
    let checks = vec![
        Check::new(
            "holder_slope",
            fit.slope >= required,
            format!("slope {:.4} vs required {required:.4}", fit.slope),
        ),
        Check::new(
            "perturbed_kernels_bounded",
            worst_ratio <= p.bound_factor,
            format!("largest perturbed/base norm ratio {worst_ratio:.4} vs {}", p.bound_factor),
        ),
    ];
    let mut slope_table = ResultTable::new("slope", &["slope", "slope_stderr", "intercept", "r_squared", "required"]);
    slope_table.push(vec![
        fit.slope.into(),
        fit.slope_stderr.into(),
        fit.intercept.into(),
        fit.r_squared.into(),
        required.into(),
    ]);
    Ok(DriverOutput {
        tables: vec![table, slope_table],
        summary: json!({"fit": fit, "required_slope": required, "base": base_norm, "worst_ratio": worst_ratio}),
        checks,
        artifacts: Vec::new(),
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::weight_distance;

    #[test]
    fn perturbation_has_the_requested_distance() {
        let dims = NetDims::uniform(2, 3, 24).unwrap();
        let net = seeded_network(&dims, 0, 0);
        for h in [0.0, 0.01, 0.5] {
            let pert = perturb_weights(&net, h, 9);
            assert!((weight_distance(&net, &pert).unwrap() - h).abs() < 1e-9 * (1.0 + h));
        }
    }

    #[test]
    fn zero_perturbation_leaves_the_kernel_unchanged() {
        let grid = evaluation_grid(2, 8).unwrap();
        let dims = NetDims::uniform(2, 3, 16).unwrap();
        let net = seeded_network(&dims, 0, 0);
        let acts = [ActivationKind::Gelu.spec()];
        let k0 = empirical_ntk(&net, grid.points.view(), &acts).unwrap().values;
        let k1 = empirical_ntk(&perturb_weights(&net, 0.0, 1), grid.points.view(), &acts).unwrap().values;
        let diff = mixed_holder_seminorm(&(&k0 - &k1), &grid, 0.25, 0.25).unwrap();
        assert_eq!(diff.norm(), 0.0);
    }

    #[test]
    fn small_run_has_a_positive_slope() {
        let p = HolderParams {
            m: 32,
            grid_n: 10,
            hs: powers_of_two(-6, -2),
            ..Default::default()
        };
        let out = exp_holder_perturbation(&p, 0, &Budget::new(60.0)).unwrap();
        let slope = out.tables[1].numeric_column("slope").unwrap()[0];
        assert!(slope > 0.5, "slope {slope}");
    }
}
