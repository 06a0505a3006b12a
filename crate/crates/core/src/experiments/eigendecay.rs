//! Eigenvalue decay of the empirical and infinite-width NTK on the sphere.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::activations::ActivationKind;
use crate::error::{invalid, Result};
use crate::experiments::fit::{fit_loglog, LineFit};
use crate::experiments::{seeded_network, Budget, Check, DriverOutput, ResultTable};
use crate::io::Cell;
use crate::kernel::funk_hecke::zonal_eigenvalues;
use crate::kernel::pair::PairMethod;
use crate::kernel::recursion::ntk_limit_with;
use crate::net::{empirical_ntk, GramMatrix, NetDims};
use crate::numerics::linalg::sym_eigenvalues;
use crate::par;
use crate::sphere::grid::{make_grid, GridKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    Empirical,
    Analytic,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigendecayParams {
    pub mode: DecayMode,
    pub d: usize,
    pub depth: usize,
    pub m: usize,
    /// Sample points of the empirical Gram matrix.
    pub n: usize,
    pub grid: GridKind,
    /// Seed of the sample points; the master seed when absent.
    pub grid_seed: Option<u64>,
    pub activations: Vec<ActivationKind>,
    /// Networks averaged per activation (eigenvalues are averaged rank by rank).
    pub trials: usize,
    /// Inclusive rank (empirical) or degree (analytic) window of the fit.
    pub fit_lo: usize,
    pub fit_hi: usize,
    pub ell_max: usize,
    pub quad_order: usize,
    /// Size of the uniform circle on which the limit kernel is discretized
    /// for comparison; 0 disables it.
    pub discretized_n: usize,
    pub method: PairMethod,
}

impl Default for EigendecayParams {
    fn default() -> Self {
        Self {
            mode: DecayMode::Both,
            d: 2,
            depth: 2,
            m: 1000,
            n: 100,
            grid: GridKind::MonteCarlo,
            grid_seed: None,
            activations: vec![ActivationKind::Relu, ActivationKind::Elu, ActivationKind::Gelu],
            trials: 1,
            fit_lo: 2,
            fit_hi: 20,
            ell_max: 40,
            quad_order: 400,
            discretized_n: 256,
            method: PairMethod::Auto,
        }
    }
}

impl EigendecayParams {
    pub fn validate(&self) -> Result<()> {
        NetDims::uniform(self.d, self.depth, self.m.max(1))?;
        if self.depth < 2 || self.m == 0 || self.trials == 0 {
            return invalid("eigendecay needs depth >= 2, m >= 1 and trials >= 1");
        }
        if self.activations.is_empty() {
            return invalid("eigendecay needs at least one activation");
        }
        if !(1 <= self.fit_lo && self.fit_lo < self.fit_hi) {
            return invalid("need 1 <= fit_lo < fit_hi");
        }
        if self.mode != DecayMode::Analytic && self.fit_hi > self.n {
            return invalid(format!("fit_hi = {} exceeds the number of samples {}", self.fit_hi, self.n));
        }
        if self.mode != DecayMode::Empirical && self.fit_hi > self.ell_max {
            return invalid(format!("fit_hi = {} exceeds ell_max = {}", self.fit_hi, self.ell_max));
        }
        if self.discretized_n > 0 && self.d != 2 {
            return invalid("the discretized operator comparison needs d = 2");
        }
        Ok(())
    }
}

const EIGEN_COLUMNS: [&str; 5] = ["activation", "mode", "index", "multiplicity", "eigenvalue"];
const SLOPE_COLUMNS: [&str; 8] = [
    "activation",
    "mode",
    "slope",
    "intercept",
    "r_squared",
    "slope_stderr",
    "fit_lo",
    "fit_hi",
];

/// Rank-wise mean of the descending eigenvalues of `(1/n)·Γ̂` over trials.
pub fn empirical_spectrum(p: &EigendecayParams, act: ActivationKind, seed: u64, budget: &Budget) -> Result<Vec<f64>> {
    let dims = NetDims::uniform(p.d, p.depth, p.m)?;
    let grid = make_grid(p.d, p.n, p.grid, p.grid_seed.unwrap_or(seed))?;
    let acts = [act.spec()];
    let mut sum = vec![0.0; p.n];
    for trial in 0..p.trials {
        budget.check()?;
        let net = seeded_network(&dims, seed, trial as u64);
        let gram = empirical_ntk(&net, grid.points.view(), &acts)?.values / p.n as f64;
        for (s, v) in sum.iter_mut().zip(sym_eigenvalues(&gram)?) {
            *s += v;
        }
    }
    Ok(sum.into_iter().map(|s| s / p.trials as f64).collect())
}

/// Eigenvalues of `(1/n)·[Γ(x_i·x_j)]` on `n` equispaced circle points.
pub fn discretized_spectrum(act: ActivationKind, depth: usize, n: usize, method: PairMethod) -> Result<Vec<f64>> {
    let kernel = ntk_limit_with(&[act.spec()], 2, depth, method)?;
    let grid = make_grid(2, n, GridKind::UniformCircle, 0)?;
    let gram = GramMatrix::from_zonal(&kernel, grid.points.view())?.values / n as f64;
    sym_eigenvalues(&gram)
}

/// Log-log fit over the inclusive window, dropping values below `1e−12`
/// of the largest.
fn windowed_fit(xs: &[f64], ys: &[f64], lo: usize, hi: usize, positions: &[usize]) -> Option<LineFit> {
    let top = ys.iter().fold(0.0f64, |m, v| m.max(*v));
    let (fx, fy): (Vec<f64>, Vec<f64>) = positions
        .iter()
        .zip(xs.iter().zip(ys))
        .filter(|(pos, (_, y))| (lo..=hi).contains(*pos) && **y > 1e-12 * top)
        .map(|(_, (x, y))| (*x, *y))
        .unzip();
    fit_loglog(&fx, &fy).ok()
}

fn slope_row(act: ActivationKind, mode: &str, fit: Option<LineFit>, lo: usize, hi: usize) -> Vec<Cell> {
    let f = fit.unwrap_or(LineFit {
        slope: f64::NAN,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        slope_stderr: f64::NAN,
        points: 0,
    });
    vec![
        act.name().into(),
        mode.into(),
        f.slope.into(),
        f.intercept.into(),
        f.r_squared.into(),
        f.slope_stderr.into(),
        lo.into(),
        hi.into(),
    ]
}

/// Ordering `gelu ≤ elu ≤ relu` of the fitted slopes plus `relu < −1`, when
/// all three activations are present.
fn ordering_checks(mode: &str, slopes: &[(ActivationKind, f64)]) -> Vec<Check> {
    let get = |k| slopes.iter().find(|(a, _)| *a == k).map(|(_, s)| *s);
    let (Some(relu), Some(elu), Some(gelu)) = (
        get(ActivationKind::Relu),
        get(ActivationKind::Elu),
        get(ActivationKind::Gelu),
    ) else {
        return Vec::new();
    };
    vec![
        Check::new(
            &format!("{mode}_decay_ordering"),
            gelu <= elu && elu <= relu,
            format!("slopes gelu {gelu:.4}, elu {elu:.4}, relu {relu:.4}"),
        ),
        Check::new(
            &format!("{mode}_relu_steeper_than_minus_one"),
            relu < -1.0,
            format!("relu slope {relu:.4}"),
        ),
    ]
}

pub fn exp_eigendecay(p: &EigendecayParams, seed: u64, budget: &Budget) -> Result<DriverOutput> {
    p.validate()?;
    let mut eigen = ResultTable::new("eigenvalues", &EIGEN_COLUMNS);
    let mut slopes = ResultTable::new("slopes", &SLOPE_COLUMNS);
    let mut checks = Vec::new();
    let mut summary = serde_json::Map::new();

    if p.mode != DecayMode::Analytic {
        let spectra = par::map_slice(&p.activations, |&act| empirical_spectrum(p, act, seed, budget));
        let mut fitted = Vec::new();
        for (&act, spectrum) in p.activations.iter().zip(spectra) {
            let spectrum = spectrum?;
            for (r, v) in spectrum.iter().enumerate() {
                eigen.push(vec![act.name().into(), "empirical".into(), (r + 1).into(), 1usize.into(), (*v).into()]);
            }
            let ranks: Vec<f64> = (1..=spectrum.len()).map(|r| r as f64).collect();
            let positions: Vec<usize> = (1..=spectrum.len()).collect();
            let fit = windowed_fit(&ranks, &spectrum, p.fit_lo, p.fit_hi, &positions);
            fitted.push((act, fit.map_or(f64::NAN, |f| f.slope)));
            slopes.push(slope_row(act, "empirical", fit, p.fit_lo, p.fit_hi));
        }
        checks.extend(ordering_checks("empirical", &fitted));
        summary.insert("empirical_slopes".into(), json!(fitted.iter().map(|(a, s)| (a.name(), s)).collect::<Vec<_>>()));
    }

    if p.mode != DecayMode::Empirical {
        let results = par::map_slice(&p.activations, |&act| -> Result<_> {
            budget.check()?;
            let kernel = ntk_limit_with(&[act.spec()], p.d, p.depth, p.method)?;
            let spec = zonal_eigenvalues(&kernel, p.ell_max, p.quad_order)?;
            let discrete = if p.discretized_n > 0 {
                Some(discretized_spectrum(act, p.depth, p.discretized_n, p.method)?)
            } else {
                None
            };
            Ok((spec, discrete))
        });
        let mut fitted = Vec::new();
        for (&act, res) in p.activations.iter().zip(results) {
            let (spec, discrete) = res?;
            for (l, (v, mult)) in spec.eigenvalues.iter().zip(&spec.multiplicities).enumerate() {
                eigen.push(vec![act.name().into(), "analytic".into(), l.into(), (*mult).into(), (*v).into()]);
            }
            if let Some(values) = discrete {
                for (r, v) in values.iter().enumerate() {
                    eigen.push(vec![act.name().into(), "discretized".into(), (r + 1).into(), 1usize.into(), (*v).into()]);
                }
            }
            let degrees: Vec<usize> = (0..spec.eigenvalues.len()).collect();
            let shifted: Vec<f64> = degrees.iter().map(|&l| (l + 1) as f64).collect();
            let fit = windowed_fit(&shifted, &spec.eigenvalues, p.fit_lo, p.fit_hi, &degrees);
            fitted.push((act, fit.map_or(f64::NAN, |f| f.slope)));
            slopes.push(slope_row(act, "analytic", fit, p.fit_lo, p.fit_hi));
        }
        checks.extend(ordering_checks("analytic", &fitted));
        summary.insert("analytic_slopes".into(), json!(fitted.iter().map(|(a, s)| (a.name(), s)).collect::<Vec<_>>()));
    }

    Ok(DriverOutput {
        tables: vec![eigen, slopes],
        summary: serde_json::Value::Object(summary),
        checks,
        artifacts: Vec::new(),
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EigendecayParams {
        EigendecayParams {
            m: 64,
            n: 24,
            fit_hi: 10,
            ell_max: 12,
            quad_order: 64,
            discretized_n: 0,
            ..Default::default()
        }
    }

    #[test]
    fn identity_has_a_single_degree_one_eigenvalue() {
        let p = EigendecayParams {
            mode: DecayMode::Analytic,
            activations: vec![ActivationKind::Identity],
            ..small()
        };
        let out = exp_eigendecay(&p, 0, &Budget::new(60.0)).unwrap();
        let rows = out.tables[0].filter("activation", "identity");
        for r in rows {
            let (l, v) = (r[2].as_f64().unwrap(), r[4].as_f64().unwrap());
            if l == 1.0 {
                assert!((v - 0.5).abs() < 1e-12, "lambda_1 = {v}");
            } else {
                assert!(v.abs() < 1e-12, "lambda_{l} = {v}");
            }
        }
    }

    #[test]
    fn empirical_trace_matches_mean_diagonal() {
        // trace of Γ̂/n is the mean of the diagonal
        let p = EigendecayParams {
            mode: DecayMode::Empirical,
            activations: vec![ActivationKind::Gelu],
            ..small()
        };
        let spectrum = empirical_spectrum(&p, ActivationKind::Gelu, 3, &Budget::new(60.0)).unwrap();
        let grid = make_grid(2, p.n, p.grid, 3).unwrap();
        let net = seeded_network(&NetDims::uniform(2, 2, p.m).unwrap(), 3, 0);
        let gram = empirical_ntk(&net, grid.points.view(), &[ActivationKind::Gelu.spec()]).unwrap();
        let mean_diag = gram.values.diag().sum() / p.n as f64;
        assert!((spectrum.iter().sum::<f64>() - mean_diag).abs() < 1e-12);
        assert!(spectrum.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn tables_follow_schema_and_repeat_exactly() {
        let p = small();
        let a = exp_eigendecay(&p, 5, &Budget::new(60.0)).unwrap();
        let b = exp_eigendecay(&p, 5, &Budget::new(60.0)).unwrap();
        assert_eq!(a.tables, b.tables);
        assert_eq!(a.tables[1].rows.len(), 6);
        assert_eq!(a.tables[0].columns, EIGEN_COLUMNS);
    }

    #[test]
    fn invalid_windows_are_rejected() {
        assert!(EigendecayParams { fit_hi: 500, ..small() }.validate().is_err());
        assert!(EigendecayParams { fit_lo: 0, ..small() }.validate().is_err());
        assert!(EigendecayParams { depth: 1, ..small() }.validate().is_err());
    }
}
