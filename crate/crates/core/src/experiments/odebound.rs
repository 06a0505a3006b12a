//! Numerical checks of the coupled ODE bound: one configured system and a
//! randomized sweep over the admissible region.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, Result};
use crate::experiments::{Budget, Check, DriverOutput, ResultTable};
use crate::flow::odebound::{admissible_draw, ode_bound_check, OdeBoundParams, OdeBoundReport};
use crate::numerics::rng::RngStream;
use crate::par;

const SWEEP_STREAM: u64 = 0x6f64_6562;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeBoundExpParams {
    /// A single system whose trajectory is tabulated.
    pub check: Option<OdeBoundParams>,
    /// Number of random admissible systems; 0 disables the sweep.
    pub sweep_draws: usize,
    pub rho_range: [f64; 2],
    pub coef_range: [f64; 2],
    pub t_end: f64,
    pub rel_tol: f64,
}

impl Default for OdeBoundExpParams {
    fn default() -> Self {
        Self {
            check: None,
            sweep_draws: 100,
            rho_range: [0.5, 3.0],
            coef_range: [0.1, 10.0],
            t_end: 3.0,
            rel_tol: 1e-10,
        }
    }
}

impl OdeBoundExpParams {
    pub fn validate(&self) -> Result<()> {
        if self.check.is_none() && self.sweep_draws == 0 {
            return invalid("odebound needs a check system or sweep_draws > 0");
        }
        if !(self.rho_range[0] >= 0.5 && self.rho_range[0] <= self.rho_range[1]) {
            return invalid("rho_range must be ordered and start at 1/2 or above");
        }
        if !(self.coef_range[0] > 0.0 && self.coef_range[0] <= self.coef_range[1]) {
            return invalid("coef_range must be positive and ordered");
        }
        if !(self.t_end > 0.0 && self.rel_tol > 0.0) {
            return invalid("t_end and rel_tol must be positive");
        }
        Ok(())
    }
}

fn trajectory_table(r: &OdeBoundReport) -> ResultTable {
    let mut t = ResultTable::new("trajectory", &["t", "x", "y", "x_rho_bound", "x_bound"]);
    for i in 0..r.times.len() {
        t.push(vec![
            r.times[i].into(),
            r.x[i].into(),
            r.y[i].into(),
            r.x_rho_bound[i].into(),
            r.x_bound[i].unwrap_or(f64::NAN).into(),
        ]);
    }
    t
}

pub fn exp_odebound(p: &OdeBoundExpParams, seed: u64, budget: &Budget) -> Result<DriverOutput> {
    p.validate()?;
    let mut tables = Vec::new();
    let mut checks = Vec::new();
    let mut summary = serde_json::Map::new();
    if let Some(sys) = &p.check {
        let r = ode_bound_check(sys)?;
        checks.push(Check::new(
            "configured_system",
            r.satisfied,
            format!("worst excess {:e}, horizon {}", r.worst_excess, r.horizon),
        ));
        summary.insert(
            "configured_system".into(),
            json!({"horizon": r.horizon, "collapsed": r.collapsed, "worst_excess": r.worst_excess, "satisfied": r.satisfied}),
        );
        tables.push(trajectory_table(&r));
    }
    if p.sweep_draws > 0 {
        let mut rng = RngStream::new(seed, SWEEP_STREAM);
        let draws: Vec<OdeBoundParams> = (0..p.sweep_draws)
            .map(|_| admissible_draw(&mut rng, p.rho_range, p.coef_range, p.t_end, p.rel_tol))
            .collect();
        let reports = par::map_slice(&draws, |d| {
            budget.check()?;
            ode_bound_check(d)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut t = ResultTable::new(
            "sweep",
            &[
                "draw", "a", "b", "c", "d_coef", "rho", "x0", "y0", "horizon", "collapsed", "worst_excess", "satisfied",
            ],
        );
        for (k, (d, r)) in draws.iter().zip(&reports).enumerate() {
            t.push(vec![
                k.into(),
                d.a.into(),
                d.b.into(),
                d.c.into(),
                d.d_coef.into(),
                d.rho.into(),
                d.x0.into(),
                d.y0.into(),
                r.horizon.into(),
                r.collapsed.into(),
                r.worst_excess.into(),
                r.satisfied.into(),
            ]);
        }
        let passed = reports.iter().filter(|r| r.satisfied).count();
        let worst = reports.iter().map(|r| r.worst_excess).fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new(
            "sweep_all_satisfied",
            passed == reports.len(),
            format!("{passed}/{} draws within slack, worst excess {worst:e}", reports.len()),
        ));
        summary.insert(
            "sweep".into(),
            json!({"draws": reports.len(), "satisfied": passed, "worst_excess": worst,
                   "collapsed": reports.iter().filter(|r| r.collapsed).count()}),
        );
        tables.push(t);
    }
    Ok(DriverOutput {
        tables,
        summary: serde_json::Value::Object(summary),
        checks,
        artifacts: Vec::new(),
        failure: None,
    })
}
