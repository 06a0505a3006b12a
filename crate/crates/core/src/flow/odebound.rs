//! Numerical check of the closed-form bounds for the coupled system
//! `x′ = −a x^{1+ρ} y^{−ρ} + b x`, `y′ = −c x^ρ y^{1−ρ} + d √(xy)`.
//!
//! While `x ≥ (d/c)^{2/(2ρ−1)} y` holds, `y` is non-increasing and `x` obeys
//! `x^ρ ≤ A/(1 − B(t))` with `A = (b/a) y0^ρ` and
//! `B(t) = [1 − (b/a)(x0/y0)^{−ρ}] e^{−bρt}`; when `B(t) ≥ 0` also
//! `x ≤ (A + x0^ρ e^{−bρt})^{1/ρ}`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::ode::{integrate, single_step, Control, OdeFailure, OdeOptions};
use crate::numerics::rng::RngStream;

const SLACK: f64 = 1e-6;
/// States below this fraction of the initial scale count as having reached
/// the axes.
const COLLAPSE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeBoundParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d_coef: f64,
    pub rho: f64,
    pub x0: f64,
    pub y0: f64,
    pub t_end: f64,
    pub rel_tol: f64,
}

impl OdeBoundParams {
    /// `(d/c)^{2/(2ρ−1)}`, the smallest admissible ratio `x/y`.
    pub fn ratio_threshold(&self) -> f64 {
        (self.d_coef / self.c).powf(2.0 / (2.0 * self.rho - 1.0))
    }

    fn condition_margin(&self, x: f64, y: f64) -> f64 {
        x - self.ratio_threshold() * y
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.5 && self.rho.is_finite()) {
            return invalid(format!("rho = {} must be at least 1/2", self.rho));
        }
        let positive = [self.a, self.b, self.c, self.x0, self.y0, self.t_end];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.d_coef >= 0.0 && self.d_coef.is_finite()) {
            return invalid("a, b, c, x0, y0, t_end must be positive and d_coef nonnegative");
        }
        let threshold = self.ratio_threshold() * self.y0;
        if self.x0 < threshold {
            return invalid(format!(
                "precondition x0 >= (d/c)^(2/(2 rho - 1)) * y0 violated: x0 = {} < {threshold}",
                self.x0
            ));
        }
        Ok(())
    }

    fn field(&self) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
        move |_t, s, ds| {
            let (x, y) = (s[0].max(0.0), s[1].max(0.0));
            let r = self.rho;
            ds[0] = -self.a * x.powf(1.0 + r) * y.powf(-r) + self.b * x;
            ds[1] = -self.c * x.powf(r) * y.powf(1.0 - r) + self.d_coef * (x * y).sqrt();
        }
    }

    /// `A/(1 − B(t))`, the bound for `x(t)^ρ`.
    pub fn x_rho_bound(&self, t: f64) -> f64 {
        let (a_const, b_t) = self.bound_terms(t);
        a_const / (1.0 - b_t)
    }

    /// `(A + x0^ρ e^{−bρt})^{1/ρ}` when `B(t) ≥ 0`.
    pub fn x_bound(&self, t: f64) -> Option<f64> {
        let (a_const, b_t) = self.bound_terms(t);
        (b_t >= 0.0).then(|| (a_const + self.x0.powf(self.rho) * (-self.b * self.rho * t).exp()).powf(1.0 / self.rho))
    }

    fn bound_terms(&self, t: f64) -> (f64, f64) {
        let r = self.rho;
        let a_const = self.b / self.a * self.y0.powf(r);
        let b_t = (1.0 - self.b / self.a * (self.x0 / self.y0).powf(-r)) * (-self.b * r * t).exp();
        (a_const, b_t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeBoundReport {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `A/(1 − B(t))` at each time.
    pub x_rho_bound: Vec<f64>,
    /// `(A + x0^ρ e^{−bρt})^{1/ρ}` where `B(t) ≥ 0`.
    pub x_bound: Vec<Option<f64>>,
    /// End of the interval on which the ratio condition holds and the
    /// solution stays away from the origin.
    pub horizon: f64,
    /// Whether the solution ran into the singular set `{x = 0} ∪ {y = 0}`
    /// before `t_end`.
    pub collapsed: bool,
    /// Largest relative excess over any bound inside the horizon.
    pub worst_excess: f64,
    pub satisfied: bool,
}

/// Integrates the equality system and checks both bounds up to the time the
/// ratio condition first fails (located by bisection to `1e−9`). Solutions
/// that reach the axes, where the field is singular, are checked up to the
/// last accepted step before they get there.
pub fn ode_bound_check(p: &OdeBoundParams) -> Result<OdeBoundReport> {
    p.validate()?;
    let field = p.field();
    let mut horizon = p.t_end;
    let mut times = vec![0.0];
    let mut xs = vec![p.x0];
    let mut ys = vec![p.y0];
    let floor = COLLAPSE * p.x0.max(p.y0);
    let mut collapsed = false;
    let run = integrate(&field, &[p.x0, p.y0], p.t_end, &OdeOptions::new(p.rel_tol), |s| {
        if s.y1[0] <= floor || s.y1[1] <= floor {
            collapsed = true;
            horizon = s.t0;
            return Control::Stop;
        }
        if p.condition_margin(s.y1[0], s.y1[1]) < 0.0 {
            let (mut lo, mut hi) = (0.0, s.t1 - s.t0);
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                let z = single_step(&field, s.t0, s.y0, mid);
                if p.condition_margin(z[0], z[1]) < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            horizon = s.t0 + lo;
            return Control::Stop;
        }
        times.push(s.t1);
        xs.push(s.y1[0]);
        ys.push(s.y1[1]);
        Control::Continue
    });
    match run {
        Ok(_) => {}
        Err(Error::Ode(e)) if matches!(e.reason, OdeFailure::StepUnderflow { .. }) => {
            // the field is singular on the axes and the solution reaches them in finite time
            collapsed = true;
            horizon = e.t;
        }
        Err(e) => return Err(e),
    }
    let mut worst = f64::NEG_INFINITY;
    let mut x_rho_bound = Vec::with_capacity(times.len());
    let mut x_bound = Vec::with_capacity(times.len());
    for ((&t, &x), &y) in times.iter().zip(&xs).zip(&ys) {
        let xr = p.x_rho_bound(t);
        let xb = p.x_bound(t);
        worst = worst.max(y / p.y0 - 1.0);
        worst = worst.max(x.powf(p.rho) / xr - 1.0);
        if let Some(b) = xb {
            worst = worst.max(x / b - 1.0);
        }
        x_rho_bound.push(xr);
        x_bound.push(xb);
    }
    Ok(OdeBoundReport {
        times,
        x: xs,
        y: ys,
        x_rho_bound,
        x_bound,
        horizon,
        collapsed,
        worst_excess: worst,
        satisfied: worst <= SLACK,
    })
}

/// Draws coefficients uniformly from `coef`, `ρ` from `rho` and
/// `x0 = r·y0·(1 + U[0, 2])` with `r` the ratio threshold, redrawing until
/// `x0 ∈ [1e−6, 1e6]`.
pub fn admissible_draw(rng: &mut RngStream, rho: [f64; 2], coef: [f64; 2], t_end: f64, rel_tol: f64) -> OdeBoundParams {
    loop {
        let mut p = OdeBoundParams {
            a: rng.uniform_in(coef[0], coef[1]),
            b: rng.uniform_in(coef[0], coef[1]),
            c: rng.uniform_in(coef[0], coef[1]),
            d_coef: rng.uniform_in(coef[0], coef[1]),
            rho: rng.uniform_in(rho[0], rho[1]),
            x0: 0.0,
            y0: rng.uniform_in(coef[0], coef[1]),
            t_end,
            rel_tol,
        };
        p.x0 = p.ratio_threshold() * p.y0 * (1.0 + rng.uniform_in(0.0, 2.0));
        if (1e-6..=1e6).contains(&p.x0) {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> OdeBoundParams {
        OdeBoundParams {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            d_coef: 1.0,
            rho: 1.0,
            x0: 1.0,
            y0: 1.0,
            t_end: 5.0,
            rel_tol: 1e-10,
        }
    }

    #[test]
    fn unit_coefficients() {
        let p = unit();
        assert_eq!(p.x_rho_bound(0.0), 1.0);
        let r = ode_bound_check(&p).unwrap();
        assert!(r.satisfied);
        assert_eq!(r.horizon, 5.0);
        for (t, x) in r.times.iter().zip(&r.x) {
            assert!(*x <= 1.0 + (-t).exp() + 1e-6);
        }
    }

    #[test]
    fn precondition_is_enforced() {
        let p = OdeBoundParams {
            d_coef: 2.0,
            x0: 1.0,
            ..unit()
        };
        // threshold (2/1)^2 = 4 > 1
        assert!(ode_bound_check(&p).is_err());
        assert!(ode_bound_check(&OdeBoundParams { rho: 0.4, ..unit() }).is_err());
    }

    /// `x^{−ρ}(t) = (a/b)Y^{−ρ} + (x0^{−ρ} − (a/b)Y^{−ρ}) e^{−bρt}` with `y ≡ Y`.
    fn bernoulli(p: &OdeBoundParams, y: f64, t: f64) -> f64 {
        let r = p.rho;
        let k = p.a / p.b * y.powf(-r);
        (k + (p.x0.powf(-r) - k) * (-p.b * r * t).exp()).powf(-1.0 / r)
    }

    #[test]
    fn no_coupling_is_bracketed_by_bernoulli() {
        let p = OdeBoundParams {
            a: 0.7,
            b: 1.3,
            c: 0.4,
            d_coef: 0.0,
            rho: 1.5,
            x0: 2.0,
            y0: 1.5,
            t_end: 6.0,
            rel_tol: 1e-11,
        };
        let r = ode_bound_check(&p).unwrap();
        assert!(r.satisfied);
        assert!(r.y.windows(2).all(|w| w[1] <= w[0]));
        let y_inf = *r.y.last().unwrap();
        for ((t, x), y) in r.times.iter().zip(&r.x).zip(&r.y) {
            assert!(*y >= y_inf);
            assert!(*x <= bernoulli(&p, p.y0, *t) * (1.0 + 1e-8));
            assert!(*x >= bernoulli(&p, y_inf, *t) * (1.0 - 1e-8));
        }
    }

    #[test]
    fn tiny_growth_decays() {
        let p = OdeBoundParams {
            b: 1e-8,
            d_coef: 0.5,
            x0: 3.0,
            ..unit()
        };
        let r = ode_bound_check(&p).unwrap();
        assert!(r.x.iter().all(|x| *x <= 3.0 * (1.0 + 1e-6)));
        assert!(r.x.last().unwrap() < &3.0);
    }

    #[test]
    fn randomized_admissible_draws() {
        let mut rng = RngStream::new(17, 0);
        for _ in 0..25 {
            let p = admissible_draw(&mut rng, [0.5, 3.0], [0.1, 10.0], 3.0, 1e-10);
            let r = ode_bound_check(&p).unwrap();
            assert!(r.satisfied, "{p:?}: excess {}", r.worst_excess);
        }
    }
}
