//! Empirical Hölder and mixed-Hölder seminorms on sampled points.
//!
//! Every estimator is the supremum of the defining difference quotient over
//! all sampled pairs, measured in the chordal (ambient Euclidean) metric. This
//! is a lower bound for the true seminorm.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::par;
use crate::sphere::grid::SphereGrid;

fn chordal_distances(grid: &SphereGrid) -> Array2<f64> {
    let n = grid.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let a = grid.point(i);
        let b = grid.point(j);
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    })
}

fn check_exponent(a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return invalid(format!("Hölder exponent {a} outside (0, 1]"));
    }
    Ok(())
}

/// `sup_{x ≠ y} |f(x) − f(y)| / ‖x − y‖^α`.
pub fn holder_seminorm(values: &[f64], grid: &SphereGrid, alpha: f64) -> Result<f64> {
    check_exponent(alpha)?;
    let n = grid.len();
    if n < 2 || values.len() != n {
        return invalid("need at least two points and one value per point");
    }
    let dist = chordal_distances(grid);
    Ok(par::max_range(n, |i| {
        (0..n)
            .filter(|&j| j != i && dist[[i, j]] > 0.0)
            .map(|j| (values[i] - values[j]).abs() / dist[[i, j]].powf(alpha))
            .fold(0.0, f64::max)
    }))
}

/// `sup |f| + |f|_α`.
pub fn holder_norm(values: &[f64], grid: &SphereGrid, alpha: f64) -> Result<f64> {
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(sup + holder_seminorm(values, grid, alpha)?)
}

/// The four parts of the mixed Hölder norm of a kernel sampled on `grid × grid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedHolder {
    /// `sup |k|`.
    pub c00: f64,
    /// Hölder quotient in the first argument, sup over the second.
    pub c_alpha0: f64,
    /// Hölder quotient in the second argument, sup over the first.
    pub c_0beta: f64,
    /// Mixed second difference quotient.
    pub c_alphabeta: f64,
}

impl MixedHolder {
    pub fn norm(&self) -> f64 {
        self.c00 + self.c_alpha0 + self.c_0beta + self.c_alphabeta
    }
}

pub fn mixed_holder_seminorm(kernel: &Array2<f64>, grid: &SphereGrid, alpha: f64, beta: f64) -> Result<MixedHolder> {
    check_exponent(alpha)?;
    check_exponent(beta)?;
    let n = grid.len();
    if n < 2 || kernel.dim() != (n, n) {
        return invalid("kernel must be n×n on a grid with at least two points");
    }
    let dist = chordal_distances(grid);
    let c00 = kernel.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let da = dist.mapv(|r| if r > 0.0 { r.powf(-alpha) } else { 0.0 });
    let db = dist.mapv(|r| if r > 0.0 { r.powf(-beta) } else { 0.0 });
    let c_alpha0 = par::max_range(n, |x| {
        let mut best = 0.0f64;
        for xb in 0..n {
            if da[[x, xb]] == 0.0 {
                continue;
            }
            for y in 0..n {
                best = best.max((kernel[[x, y]] - kernel[[xb, y]]).abs() * da[[x, xb]]);
            }
        }
        best
    });
    let c_0beta = par::max_range(n, |y| {
        let mut best = 0.0f64;
        for yb in 0..n {
            if db[[y, yb]] == 0.0 {
                continue;
            }
            for x in 0..n {
                best = best.max((kernel[[x, y]] - kernel[[x, yb]]).abs() * db[[y, yb]]);
            }
        }
        best
    });
    let c_alphabeta = par::max_range(n, |x| {
        let mut best = 0.0f64;
        for xb in (x + 1)..n {
            if da[[x, xb]] == 0.0 {
                continue;
            }
            for y in 0..n {
                let dx_y = kernel[[x, y]] - kernel[[xb, y]];
                for yb in (y + 1)..n {
                    if db[[y, yb]] == 0.0 {
                        continue;
                    }
                    let diff = dx_y - kernel[[x, yb]] + kernel[[xb, yb]];
                    best = best.max(diff.abs() * da[[x, xb]] * db[[y, yb]]);
                }
            }
        }
        best
    });
    Ok(MixedHolder {
        c00,
        c_alpha0,
        c_0beta,
        c_alphabeta,
    })
}
