//! Adaptive Dormand–Prince 5(4) integrator for non-stiff systems.
//!
//! Error control uses the RMS norm of the embedded error estimate scaled by
//! `abs_tol + rel_tol·max(|y|, |y_new|)`; the fifth-order solution is
//! propagated (local extrapolation) and the last stage is reused as the first
//! stage of the next step.

use thiserror::Error;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    fn push(&mut self, t: f64, y: &[f64]) {
        self.times.push(t);
        self.states.push(y.to_vec());
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeFailure {
    /// The controller asked for a step below `1e−12·t_end`.
    StepUnderflow { h: f64 },
    MaxSteps(usize),
}

impl std::fmt::Display for OdeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OdeFailure::StepUnderflow { h } => write!(f, "step size {h:e} underflow (stiff or singular system)"),
            OdeFailure::MaxSteps(n) => write!(f, "exceeded {n} steps"),
        }
    }
}

/// Integration failure, carrying everything accepted before it.
#[derive(Debug, Error)]
#[error("integrator failed at t = {t}: {reason}")]
pub struct OdeError {
    pub t: f64,
    pub reason: OdeFailure,
    pub partial: Box<Trajectory>,
}

/// Which states end up in the returned trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    /// Every accepted step.
    Steps,
    /// Only `t = 0`, the listed times (steps are clipped to land on them) and `t_end`.
    Checkpoints(Vec<f64>),
    /// Steps land on the listed times but only `t = 0` and the final state are kept.
    Landings(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub record: Record,
}

impl OdeOptions {
    pub fn new(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol: rel_tol,
            max_steps: 1_000_000,
            record: Record::Steps,
        }
    }

    pub fn with_checkpoints(mut self, times: Vec<f64>) -> Self {
        self.record = Record::Checkpoints(times);
        self
    }
}

/// An accepted step handed to the observer.
pub struct StepView<'a> {
    pub t0: f64,
    pub y0: &'a [f64],
    pub t1: f64,
    pub y1: &'a [f64],
    /// Vector field at `(t1, y1)`.
    pub f1: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    /// One step from `(t, y)` with `k[0] = f(t, y)` already set. Leaves the
    /// fifth-order state in `y_new`, the error estimate in `err` and
    /// `f(t + h, y_new)` in `k[6]`.
    fn step<F: FnMut(f64, &[f64], &mut [f64])>(&mut self, field: &mut F, t: f64, y: &[f64], h: f64) {
        let n = y.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * self.k[j][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            field(t + C[s] * h, &self.tmp, &mut self.k[s]);
        }
        // Stage 7 is evaluated at the fifth-order solution, which is tmp.
        self.y_new.copy_from_slice(&self.tmp);
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * self.k[s][i];
            }
            self.err[i] = h * e;
        }
    }
}

fn scaled_rms(v: &[f64], y0: &[f64], y1: &[f64], atol: f64, rtol: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / v.len() as f64).sqrt()
}

fn initial_step<F: FnMut(f64, &[f64], &mut [f64])>(
    field: &mut F,
    y0: &[f64],
    f0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
) -> f64 {
    let d0 = scaled_rms(y0, y0, y0, opts.abs_tol, opts.rel_tol);
    let d1 = scaled_rms(f0, y0, y0, opts.abs_tol, opts.rel_tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(t_end);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    field(h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_rms(&diff, y0, y0, opts.abs_tol, opts.rel_tol) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (1e-6f64).max(h0 * 1e-3)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}

/// Integrates `y' = field(t, y)` from `t = 0` to `t_end`.
///
/// `observer` sees every accepted step and may stop the integration early;
/// the returned trajectory then ends at the stopping step.
pub fn integrate<F, O>(
    mut field: F,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(&StepView<'_>) -> Control,
{
    if !(t_end > 0.0) || !t_end.is_finite() {
        return invalid(format!("t_end must be positive and finite, got {t_end}"));
    }
    if !(opts.rel_tol > 0.0 && opts.rel_tol <= 1e-2) {
        return invalid(format!("rel_tol must lie in (0, 1e-2], got {}", opts.rel_tol));
    }
    if !(opts.abs_tol > 0.0) {
        return invalid("abs_tol must be positive");
    }
    let mut stops: Vec<f64> = match &opts.record {
        Record::Steps => Vec::new(),
        Record::Checkpoints(ts) | Record::Landings(ts) => {
            if ts.iter().any(|&t| !(t > 0.0 && t <= t_end)) {
                return invalid("checkpoints must lie in (0, t_end]");
            }
            ts.clone()
        }
    };
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    if stops.last() != Some(&t_end) {
        stops.push(t_end);
    }
    let record_all = matches!(opts.record, Record::Steps);
    let record_landings = matches!(opts.record, Record::Checkpoints(_));

    let n = y0.len();
    let mut traj = Trajectory::default();
    traj.push(0.0, y0);
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut st = Stepper::new(n);
    field(0.0, &y, &mut st.k[0]);
    let mut h = initial_step(&mut field, &y, &st.k[0], t_end, opts);
    let h_min = 1e-12 * t_end;
    let mut next_stop = 0;
    let mut steps = 0;

    while next_stop < stops.len() {
        if steps >= opts.max_steps {
            return Err(OdeError {
                t,
                reason: OdeFailure::MaxSteps(opts.max_steps),
                partial: Box::new(traj),
            }
            .into());
        }
        let target = stops[next_stop];
        let mut landing = false;
        let mut h_try = h;
        if t + h_try >= target - 1e-14 * t_end.max(1.0) {
            h_try = target - t;
            landing = true;
        }
        if h_try < h_min && !landing {
            return Err(OdeError {
                t,
                reason: OdeFailure::StepUnderflow { h: h_try },
                partial: Box::new(traj),
            }
            .into());
        }
        st.step(&mut field, t, &y, h_try);
        steps += 1;
        let err = scaled_rms(&st.err, &y, &st.y_new, opts.abs_tol, opts.rel_tol);
        let err = if err.is_finite() && st.y_new.iter().all(|v| v.is_finite()) {
            err
        } else {
            f64::INFINITY
        };
        if err <= 1.0 {
            let t_new = if landing { target } else { t + h_try };
            let view = StepView {
                t0: t,
                y0: &y,
                t1: t_new,
                y1: &st.y_new,
                f1: &st.k[6],
            };
            let control = observer(&view);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // Keep the unclipped step proposal after landing on a stop.
            h = if landing { h.max(h_try * fac) } else { h_try * fac };
            t = t_new;
            y.copy_from_slice(&st.y_new);
            let (first, rest) = st.k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            if landing {
                next_stop += 1;
            }
            let done = control == Control::Stop || next_stop == stops.len();
            let keep = record_all || (landing && record_landings);
            if keep || done {
                traj.push(t, &y);
            }
            if control == Control::Stop {
                return Ok(traj);
            }
        } else {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
            h = h_try * fac;
            if h < h_min {
                return Err(OdeError {
                    t,
                    reason: OdeFailure::StepUnderflow { h },
                    partial: Box::new(traj),
                }
                .into());
            }
        }
    }
    Ok(traj)
}

/// Every accepted step from `0` to `t_end` at the given tolerance.
pub fn ode_solve<F>(field: F, y0: &[f64], t_end: f64, rel_tol: f64) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate(field, y0, t_end, &OdeOptions::new(rel_tol), |_| Control::Continue)
}

/// A single fifth-order step of size `h` from `(t, y)`; used to refine event
/// locations inside an accepted step.
pub fn single_step<F>(mut field: F, t: f64, y: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut st = Stepper::new(y.len());
    field(t, y, &mut st.k[0]);
    st.step(&mut field, t, y, h);
    st.y_new
}
