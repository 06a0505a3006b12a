//! Gradient-flow training with residual diagnostics, the convergence envelope
//! and a numerical check of the coupled ODE bound.

pub mod envelope;
pub mod odebound;

use std::cell::RefCell;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activations::{ActivationKind, ActivationSpec};
use crate::error::{invalid, Error, Result};
use crate::io::{write_csv, Cell};
use crate::net::{init, loss_and_grad, outputs, weight_distance, NetDims, NetworkParams};
use crate::numerics::ode::{integrate, Control, OdeOptions, Record, StepView};
use crate::numerics::rng::RngStream;
use crate::sphere::grid::{make_grid, GridKind, SphereGrid};
use crate::sphere::harmonics::{analyze, sobolev_norm};
use crate::sphere::target::{make_target_band, TargetSpec};

pub use envelope::{envelope_fit, h_branches, theorem_envelope, EnvelopeFit, EnvelopeParams};
pub use odebound::{admissible_draw, ode_bound_check, OdeBoundParams, OdeBoundReport};

/// Stream id for network initialization inside flow runs.
pub const NET_STREAM: u64 = 0x6e65_74;

/// Which weight matrices follow the gradient flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLayers {
    /// `W^0 .. W^{L−1}`.
    #[default]
    All,
    /// Only `W^{L−1}`; the output is then linear in the trained weights.
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub dims: NetDims,
    pub activations: Vec<ActivationKind>,
    pub target: TargetSpec,
    /// Points on the circle, or the Gauss order for `d = 3`.
    pub grid_n: usize,
    /// Highest harmonic degree tracked; defaults to `⌈n/4⌉ − 1`.
    pub cutoff: Option<usize>,
    pub alpha: f64,
    pub t_end: f64,
    pub rel_tol: f64,
    pub checkpoints: usize,
    pub seed: u64,
    pub train: TrainLayers,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dims: NetDims::uniform(2, 3, 256).expect("valid default dims"),
            activations: vec![ActivationKind::Gelu],
            target: TargetSpec::random_sobolev(0.3, 1),
            grid_n: 128,
            cutoff: None,
            alpha: 0.25,
            t_end: 50.0,
            rel_tol: 1e-7,
            checkpoints: 20,
            seed: 0,
            train: TrainLayers::All,
        }
    }
}

impl FlowConfig {
    pub fn cutoff(&self) -> usize {
        self.cutoff.unwrap_or(self.grid_n.div_ceil(4).saturating_sub(1))
    }

    pub fn grid(&self) -> Result<SphereGrid> {
        match self.dims.d {
            2 => make_grid(2, self.grid_n, GridKind::UniformCircle, 0),
            3 => make_grid(3, self.grid_n, GridKind::GaussSphereD3, 0),
            d => invalid(format!("flow runs support d = 2 or 3, got {d}")),
        }
    }

    pub fn activation_specs(&self) -> Vec<ActivationSpec> {
        self.activations.iter().map(|k| k.spec()).collect()
    }

    /// Checkpoint times `t_end·k/K`, `k = 0..=K`.
    pub fn checkpoint_times(&self) -> Vec<f64> {
        let k = self.checkpoints as f64;
        (0..=self.checkpoints).map(|i| self.t_end * i as f64 / k).collect()
    }

    pub fn validate(&self) -> Result<()> {
        NetDims::new(self.dims.d, self.dims.widths.clone())?;
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return invalid(format!("alpha = {} outside (0, 1/2)", self.alpha));
        }
        if self.grid_n <= 4 * self.cutoff() {
            return invalid(format!(
                "grid size {} must exceed 4 * cutoff = {}",
                self.grid_n,
                4 * self.cutoff()
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return invalid("t_end must be positive");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return invalid("rel_tol must lie in (0, 1e-2]");
        }
        if self.checkpoints == 0 {
            return invalid("need at least one checkpoint");
        }
        if self.activations.is_empty() {
            return invalid("need at least one activation");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    /// `½ Σ_q w_q κ(x_q)²`.
    pub loss: Vec<f64>,
    pub norm_neg_alpha: Vec<f64>,
    pub norm_l2: Vec<f64>,
    pub norm_alpha: Vec<f64>,
    pub weight_distance: Vec<f64>,
    pub steps: usize,
    /// Integrator failure message when the run stopped early.
    pub failure: Option<String>,
    pub initial_params: NetworkParams,
    pub final_params: NetworkParams,
}

impl FlowTrace {
    pub const COLUMNS: [&'static str; 6] = ["t", "loss", "norm_neg_alpha", "norm_l2", "norm_alpha", "weight_distance"];

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn rows(&self) -> Vec<Vec<Cell>> {
        (0..self.len())
            .map(|i| {
                vec![
                    self.times[i].into(),
                    self.loss[i].into(),
                    self.norm_neg_alpha[i].into(),
                    self.norm_l2[i].into(),
                    self.norm_alpha[i].into(),
                    self.weight_distance[i].into(),
                ]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let cols: Vec<String> = Self::COLUMNS.iter().map(|s| s.to_string()).collect();
        write_csv(path, &cols, &self.rows())
    }
}

/// Residual diagnostics at one parameter state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub loss: f64,
    pub norm_neg_alpha: f64,
    pub norm_l2: f64,
    pub norm_alpha: f64,
    pub weight_distance: f64,
}

struct FlowProblem {
    config: FlowConfig,
    acts: Vec<ActivationSpec>,
    grid: SphereGrid,
    target: Vec<f64>,
    params0: NetworkParams,
    first_trained: usize,
}

impl FlowProblem {
    fn new(config: &FlowConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let target = make_target_band(&config.target, &grid, config.cutoff())?.values;
        let params0 = init(&config.dims, &RngStream::new(config.seed, NET_STREAM));
        let first_trained = match config.train {
            TrainLayers::All => 0,
            TrainLayers::Last => config.dims.depth() - 1,
        };
        Ok(Self {
            config: config.clone(),
            acts: config.activation_specs(),
            grid,
            target,
            params0,
            first_trained,
        })
    }

    fn theta0(&self) -> Vec<f64> {
        self.params0.w[self.first_trained..].iter().flat_map(|w| w.iter().copied()).collect()
    }

    fn load(&self, work: &mut NetworkParams, theta: &[f64]) {
        let mut offset = 0;
        for w in &mut work.w[self.first_trained..] {
            let len = w.len();
            w.iter_mut().zip(&theta[offset..offset + len]).for_each(|(a, b)| *a = *b);
            offset += len;
        }
    }

    fn neg_grad(&self, work: &NetworkParams, out: &mut [f64]) -> Result<()> {
        let lg = loss_and_grad(work, &self.target, &self.grid, &self.acts)?;
        let flat = lg.grads[self.first_trained..].iter().flat_map(|g| g.iter());
        for (o, g) in out.iter_mut().zip(flat) {
            *o = -g;
        }
        Ok(())
    }

    fn diagnostics(&self, params: &NetworkParams) -> Result<Diagnostics> {
        let out = outputs(params, self.grid.points.view(), &self.acts)?;
        let kappa: Vec<f64> = out.iter().zip(&self.target).map(|(o, y)| o - y).collect();
        let loss = 0.5 * kappa.iter().zip(&self.grid.weights).map(|(k, w)| w * k * k).sum::<f64>();
        let coeffs = analyze(&kappa, &self.grid, self.config.cutoff())?;
        let a = self.config.alpha;
        Ok(Diagnostics {
            loss,
            norm_neg_alpha: sobolev_norm(&coeffs, -a),
            norm_l2: sobolev_norm(&coeffs, 0.0),
            norm_alpha: sobolev_norm(&coeffs, a),
            weight_distance: weight_distance(params, &self.params0)?,
        })
    }
}

/// Runs the gradient flow `dθ/dt = −∇L(θ)`.
pub fn run_flow(config: &FlowConfig) -> Result<FlowTrace> {
    run_flow_observed(config, |_| {})
}

/// As [`run_flow`], handing every accepted integrator step to `hook`.
pub fn run_flow_observed<H>(config: &FlowConfig, mut hook: H) -> Result<FlowTrace>
where
    H: FnMut(&StepView<'_>),
{
    let problem = FlowProblem::new(config)?;
    let checkpoints = config.checkpoint_times();
    let mut trace = FlowTrace {
        times: Vec::new(),
        loss: Vec::new(),
        norm_neg_alpha: Vec::new(),
        norm_l2: Vec::new(),
        norm_alpha: Vec::new(),
        weight_distance: Vec::new(),
        steps: 0,
        failure: None,
        initial_params: problem.params0.clone(),
        final_params: problem.params0.clone(),
    };
    let push = |trace: &mut FlowTrace, t: f64, diag: Diagnostics| {
        trace.times.push(t);
        trace.loss.push(diag.loss);
        trace.norm_neg_alpha.push(diag.norm_neg_alpha);
        trace.norm_l2.push(diag.norm_l2);
        trace.norm_alpha.push(diag.norm_alpha);
        trace.weight_distance.push(diag.weight_distance);
    };
    push(&mut trace, 0.0, problem.diagnostics(&problem.params0)?);

    let field_work = RefCell::new(problem.params0.clone());
    let field_err: RefCell<Option<Error>> = RefCell::new(None);
    let field = |_t: f64, theta: &[f64], dtheta: &mut [f64]| {
        let mut work = field_work.borrow_mut();
        problem.load(&mut work, theta);
        if let Err(e) = problem.neg_grad(&work, dtheta) {
            dtheta.fill(f64::NAN);
            field_err.borrow_mut().get_or_insert(e);
        }
    };
    let mut obs_work = problem.params0.clone();
    let mut obs_err: Option<Error> = None;
    let mut next = 1;
    let mut steps = 0;
    let opts = OdeOptions {
        record: Record::Landings(checkpoints[1..].to_vec()),
        ..OdeOptions::new(config.rel_tol)
    };
    let result = integrate(field, &problem.theta0(), config.t_end, &opts, |step| {
        steps += 1;
        hook(step);
        if next < checkpoints.len() && step.t1 == checkpoints[next] {
            next += 1;
            problem.load(&mut obs_work, step.y1);
            match problem.diagnostics(&obs_work) {
                Ok(diag) => push(&mut trace, step.t1, diag),
                Err(e) => {
                    obs_err = Some(e);
                    return Control::Stop;
                }
            }
        }
        Control::Continue
    });
    if let Some(e) = obs_err.or(field_err.into_inner()) {
        return Err(e);
    }
    trace.steps = steps;
    match result {
        Ok(traj) => {
            let last = traj.last_state().expect("trajectory holds the final state");
            problem.load(&mut trace.final_params, last);
        }
        Err(Error::Ode(e)) => {
            if let Some(last) = e.partial.last_state() {
                problem.load(&mut trace.final_params, last);
            }
            trace.failure = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::empirical_ntk;
    use crate::numerics::linalg::sym_eig;
    use crate::sphere::target::NamedTarget;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    fn small() -> FlowConfig {
        FlowConfig {
            dims: NetDims::uniform(2, 2, 16).unwrap(),
            grid_n: 32,
            t_end: 5.0,
            checkpoints: 5,
            rel_tol: 1e-8,
            ..FlowConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(FlowConfig::default().validate().is_ok());
        assert_eq!(FlowConfig::default().cutoff(), 31);
        let bad = FlowConfig {
            alpha: 0.5,
            ..small()
        };
        assert!(bad.validate().is_err());
        let bad = FlowConfig {
            cutoff: Some(8),
            ..small()
        };
        assert!(bad.validate().is_err());
        let json = r#"{"grid_n": 64, "bogus": 1}"#;
        assert!(serde_json::from_str::<FlowConfig>(json).is_err());
        let json = r#"{"grid_n": 64, "alpha": 0.2}"#;
        let cfg: FlowConfig = serde_json::from_str(json).unwrap();
        assert_eq!((cfg.grid_n, cfg.alpha, cfg.t_end), (64, 0.2, 50.0));
    }

    #[test]
    fn loss_decreases_and_norms_interpolate() {
        let trace = run_flow(&small()).unwrap();
        assert!(trace.failure.is_none());
        assert_eq!(trace.times, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        for w in trace.loss.windows(2) {
            assert!(w[1] < w[0]);
        }
        for i in 0..trace.len() {
            let bound = (trace.norm_neg_alpha[i] * trace.norm_alpha[i]).sqrt();
            assert!(trace.norm_l2[i] <= bound * (1.0 + 1e-10));
            // truncated coefficients carry almost all of the residual energy
            let energy = 2.0 * trace.loss[i];
            assert!(trace.norm_l2[i].powi(2) <= energy * (1.0 + 1e-12));
            assert!(trace.norm_l2[i].powi(2) >= energy * (1.0 - 1e-4));
        }
        assert_eq!(trace.weight_distance[0], 0.0);
        assert!(trace.weight_distance[5] > 0.0);
    }

    #[test]
    fn field_is_negative_gradient_at_every_step() {
        let cfg = small();
        let grid = cfg.grid().unwrap();
        let target = make_target_band(&cfg.target, &grid, cfg.cutoff()).unwrap().values;
        let acts = cfg.activation_specs();
        let base = init(&cfg.dims, &RngStream::new(cfg.seed, NET_STREAM));
        let mut worst = 0.0f64;
        let mut count = 0;
        run_flow_observed(&cfg, |s| {
            let p = base.with_trained_flat(s.y1).unwrap();
            let g = loss_and_grad(&p, &target, &grid, &acts).unwrap().flat_grads();
            for (f, g) in s.f1.iter().zip(&g) {
                worst = worst.max((f + g).abs());
            }
            count += 1;
        })
        .unwrap();
        assert!(count > 5);
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn own_output_is_an_equilibrium() {
        let cfg = FlowConfig {
            target: TargetSpec::named(NamedTarget::Zero),
            ..small()
        };
        // the zero target is not the network output; build one that is
        let grid = cfg.grid().unwrap();
        let problem = FlowProblem::new(&cfg).unwrap();
        let own = outputs(&problem.params0, grid.points.view(), &problem.acts).unwrap().to_vec();
        let problem = FlowProblem { target: own, ..problem };
        let d = problem.diagnostics(&problem.params0).unwrap();
        assert_eq!(d.loss, 0.0);
        let mut g = vec![1.0; problem.theta0().len()];
        problem.neg_grad(&problem.params0, &mut g).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_dynamics_match_kernel_spectrum() {
        // identity activations and only W^{L−1} trained: κ' = −K W κ on the grid
        let cfg = FlowConfig {
            dims: NetDims::uniform(2, 2, 24).unwrap(),
            activations: vec![ActivationKind::Identity],
            target: TargetSpec::named(NamedTarget::Harmonic3),
            grid_n: 32,
            t_end: 4.0,
            checkpoints: 8,
            rel_tol: 1e-10,
            train: TrainLayers::Last,
            ..FlowConfig::default()
        };
        let trace = run_flow(&cfg).unwrap();
        let problem = FlowProblem::new(&cfg).unwrap();
        let grid = &problem.grid;
        let k = empirical_ntk(&problem.params0, grid.points.view(), &problem.acts).unwrap().values;
        let sw: Array1<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
        let a = ndarray::Array2::from_shape_fn(k.dim(), |(i, j)| sw[i] * k[[i, j]] * sw[j]);
        let eig = sym_eig(&a).unwrap();
        let q = eig.eigenvectors.unwrap();
        let out0 = outputs(&problem.params0, grid.points.view(), &problem.acts).unwrap();
        let z0: Array1<f64> = (0..grid.len()).map(|i| sw[i] * (out0[i] - problem.target[i])).collect();
        let c0 = q.t().dot(&z0);
        for (i, &t) in trace.times.iter().enumerate() {
            let norm2: f64 = c0
                .iter()
                .zip(&eig.eigenvalues)
                .map(|(c, l)| (c * (-l * t).exp()).powi(2))
                .sum();
            assert_abs_diff_eq!(trace.norm_l2[i], norm2.sqrt(), epsilon = 1e-4);
        }
        assert!(trace.norm_l2[8] < trace.norm_l2[0]);
    }
}
