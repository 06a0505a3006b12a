//! Gradient-flow training against the convergence envelope, the width law
//! for the weight distance and the stability of the empirical NTK.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, Result};
use crate::experiments::concentration::evaluation_grid;
use crate::experiments::eigendecay::EigendecayParams;
use crate::experiments::fit::{fit_loglog, LineFit};
use crate::experiments::{Artifact, Budget, Check, DriverOutput, ResultTable};
use crate::flow::{envelope_fit, run_flow, theorem_envelope, EnvelopeFit, EnvelopeParams, FlowConfig, FlowTrace};
use crate::kernel::funk_hecke::zonal_eigenvalues;
use crate::kernel::recursion::ntk_limit;
use crate::net::snapshot::{encode_snapshot, SnapshotHeader};
use crate::net::{empirical_ntk, NetDims};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    /// The base run. Its seed is replaced by the master seed.
    pub flow: FlowConfig,
    /// Widths of the weight-distance sweep (same depth and dimension as the
    /// base run); empty disables the sweep.
    pub widths: Vec<usize>,
    /// Coercivity exponent of the envelope; `d/2` when absent.
    pub beta: Option<f64>,
    pub gamma: f64,
    /// Constant of the width branch of `h`.
    pub c_h: f64,
    /// Points of the grid on which NTK changes are measured.
    pub stability_grid_n: usize,
    /// Allowed growth factor of `‖κ(t)‖_{H^α}`.
    pub smoothness_factor: f64,
    pub min_coverage: f64,
    pub weight_slope_band: [f64; 2],
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            widths: vec![64, 128, 256, 512, 1024],
            beta: None,
            gamma: 0.5,
            c_h: 1.0,
            stability_grid_n: 20,
            smoothness_factor: 5.0,
            min_coverage: 0.95,
            weight_slope_band: [-0.7, -0.3],
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        if self.flow.dims.depth() < 2 {
            return invalid("train needs depth >= 2");
        }
        if self.widths.len() == 1 {
            return invalid("the width sweep needs at least two widths");
        }
        if self.widths.contains(&0) {
            return invalid("widths must be positive");
        }
        if self.flow.checkpoints < 10 {
            return invalid("envelope fits need at least ten checkpoints");
        }
        evaluation_grid(self.flow.dims.d, self.stability_grid_n)?;
        Ok(())
    }

    fn envelope_base(&self, trace: &FlowTrace) -> EnvelopeParams {
        let d = self.flow.dims.d;
        let mut p = EnvelopeParams::new(
            self.flow.alpha,
            d,
            self.flow.dims.m(),
            trace.norm_neg_alpha[0],
            trace.norm_alpha[0],
        );
        p.beta = self.beta.unwrap_or(d as f64 / 2.0);
        p.gamma = self.gamma;
        p.c_h = self.c_h;
        p
    }
}

/// Largest entry of `|Γ̂_{θ(T)} − Γ̂_{θ(0)}|` on the stability grid.
fn ntk_change(trace: &FlowTrace, cfg: &FlowConfig, grid_n: usize) -> Result<f64> {
    let grid = evaluation_grid(cfg.dims.d, grid_n)?;
    let acts = cfg.activation_specs();
    let k0 = empirical_ntk(&trace.initial_params, grid.points.view(), &acts)?.values;
    let k1 = empirical_ntk(&trace.final_params, grid.points.view(), &acts)?.values;
    Ok(k0.iter().zip(&k1).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// `β ≈ −slope/2` from the decay of the limit kernel's eigenvalues.
fn estimated_beta(cfg: &FlowConfig) -> Option<(f64, LineFit)> {
    let window = EigendecayParams::default();
    let kernel = ntk_limit(&cfg.activation_specs(), cfg.dims.d, cfg.dims.depth()).ok()?;
    let spec = zonal_eigenvalues(&kernel, window.fit_hi, 8 * window.fit_hi).ok()?;
    let top = spec.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let (xs, ys): (Vec<f64>, Vec<f64>) = spec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(l, v)| *l >= window.fit_lo && **v > 1e-12 * top)
        .map(|(l, v)| ((l + 1) as f64, *v))
        .unzip();
    let fit = fit_loglog(&xs, &ys).ok()?;
    Some((-fit.slope / 2.0, fit))
}

fn trace_checks(p: &TrainParams, trace: &FlowTrace, fit: &EnvelopeFit) -> Vec<Check> {
    let slack = 10.0 * p.flow.rel_tol;
    let monotone = trace.loss.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack));
    let interpolation = (0..trace.len()).all(|i| {
        trace.norm_l2[i] <= (trace.norm_neg_alpha[i] * trace.norm_alpha[i]).sqrt() * (1.0 + 1e-10)
    });
    let growth = trace.norm_alpha.iter().fold(0.0f64, |m, v| m.max(*v)) / trace.norm_alpha[0];
    vec![
        Check::new("flow_completed", trace.failure.is_none(), trace.failure.clone().unwrap_or_default()),
        Check::new("loss_monotone", monotone, format!("relative slack {slack:e}")),
        Check::new("interpolation", interpolation, "relative tolerance 1e-10"),
        Check::new(
            "smoothness_control",
            growth <= p.smoothness_factor,
            format!("max ‖κ(t)‖_α / ‖κ(0)‖_α = {growth:.4} vs {}", p.smoothness_factor),
        ),
        Check::new(
            "envelope_coverage",
            fit.coverage >= p.min_coverage,
            format!("coverage {:.3} (least-squares constants {:.3})", fit.coverage, fit.coverage_ls),
        ),
    ]
}

pub fn exp_convergence(p: &TrainParams, seed: u64, budget: &Budget) -> Result<DriverOutput> {
    p.validate()?;
    let base_cfg = FlowConfig {
        seed,
        ..p.flow.clone()
    };
    let width_cfg = |m: usize| -> Result<FlowConfig> {
        Ok(FlowConfig {
            dims: NetDims::uniform(base_cfg.dims.d, base_cfg.dims.depth(), m)?,
            ..base_cfg.clone()
        })
    };
    let base_reused = p.widths.iter().position(|&m| width_cfg(m).is_ok_and(|c| c == base_cfg));
    let mut configs = vec![base_cfg.clone()];
    for (i, &m) in p.widths.iter().enumerate() {
        if Some(i) != base_reused {
            configs.push(width_cfg(m)?);
        }
    }
    let traces = par::map_slice(&configs, |cfg| -> Result<FlowTrace> {
        budget.check()?;
        run_flow(cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    budget.check()?;
    let trace = &traces[0];

    let env_base = p.envelope_base(trace);
    let fit = envelope_fit(trace, &env_base)?;
    let fitted = EnvelopeParams {
        c1: fit.c1,
        c2: fit.c2,
        ..env_base
    };
    let fitted_ls = EnvelopeParams { c1: fit.c1_ls, ..fitted };
    let mut envelope = ResultTable::new("envelope", &["t", "norm_l2_sq", "envelope", "envelope_ls"]);
    for (&t, &l2) in trace.times.iter().zip(&trace.norm_l2) {
        let (e, e_ls) = if fit.skipped {
            (f64::NAN, f64::NAN)
        } else {
            (theorem_envelope(&fitted, t)?, theorem_envelope(&fitted_ls, t)?)
        };
        envelope.push(vec![t.into(), (l2 * l2).into(), e.into(), e_ls.into()]);
    }
    let mut trace_table = ResultTable::new("trace", &crate::flow::FlowTrace::COLUMNS);
    for row in trace.rows() {
        trace_table.push(row);
    }
    let mut checks = trace_checks(p, trace, &fit);

    let mut summary = serde_json::Map::new();
    summary.insert("envelope_fit".into(), json!(fit));
    summary.insert("envelope_params".into(), json!(fitted));
    summary.insert("steps".into(), json!(trace.steps));
    summary.insert("failure".into(), json!(trace.failure));
    summary.insert(
        "beta_estimate".into(),
        json!(estimated_beta(&base_cfg).map(|(b, f)| json!({"beta": b, "fit": f}))),
    );

    let stability_exponent = 1.0 - p.flow.alpha - 0.05;
    let mut widths_table = ResultTable::new(
        "widths",
        &["m", "final_loss", "final_weight_distance", "ntk_change", "steps", "failed"],
    );
    if !p.widths.is_empty() {
        let mut sweep: Vec<(usize, &FlowTrace)> = Vec::new();
        let mut next = 1;
        for (i, &m) in p.widths.iter().enumerate() {
            if Some(i) == base_reused {
                sweep.push((m, &traces[0]));
            } else {
                sweep.push((m, &traces[next]));
                next += 1;
            }
        }
        let changes = par::map_slice(&sweep, |(m, t)| ntk_change(t, &width_cfg(*m)?, p.stability_grid_n))
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        let mut ms = Vec::new();
        let mut dists = Vec::new();
        let mut ratios = Vec::new();
        for ((m, t), change) in sweep.iter().zip(&changes) {
            let wd = *t.weight_distance.last().expect("trace has checkpoints");
            widths_table.push(vec![
                (*m).into(),
                (*t.loss.last().expect("trace has checkpoints")).into(),
                wd.into(),
                (*change).into(),
                t.steps.into(),
                t.failure.is_some().into(),
            ]);
            ms.push(*m as f64);
            dists.push(wd);
            ratios.push(change / wd.powf(stability_exponent));
        }
        let wfit = fit_loglog(&ms, &dists)?;
        let band = p.weight_slope_band;
        checks.push(Check::new(
            "weight_distance_law",
            wfit.slope >= band[0] && wfit.slope <= band[1],
            format!("slope {:.4} vs [{}, {}]", wfit.slope, band[0], band[1]),
        ));
        checks.push(Check::new(
            "sweep_completed",
            sweep.iter().all(|(_, t)| t.failure.is_none()),
            "",
        ));
        let c_fit = ratios.iter().fold(0.0f64, |m, v| m.max(*v));
        summary.insert("weight_distance_fit".into(), json!(wfit));
        summary.insert(
            "ntk_stability".into(),
            json!({"exponent": stability_exponent, "fitted_constant": c_fit, "ratios": ratios}),
        );
    }

    let header = SnapshotHeader {
        dims: base_cfg.dims.clone(),
        seed: base_cfg.seed,
        activations: base_cfg.activations.clone(),
    };
    let artifacts = vec![Artifact {
        file_name: "final_params.ntkp".into(),
        bytes: encode_snapshot(&trace.final_params, &header)?,
    }];
    Ok(DriverOutput {
        tables: vec![trace_table, envelope, widths_table],
        summary: serde_json::Value::Object(summary),
        checks,
        artifacts,
        failure: trace.failure.clone(),
    })
}
