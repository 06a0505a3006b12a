//! Point sets on the sphere with probability quadrature weights.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::{write_csv, Cell};
use crate::numerics::quadrature::gauss_jacobi_rule;
use crate::numerics::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Angles `2πk/n` on the circle.
    UniformCircle,
    /// Normalized Gaussian draws.
    MonteCarlo,
    /// Gauss–Legendre in `cos θ` times `2n` equispaced longitudes on `S²`.
    GaussSphereD3,
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub d: usize,
    /// One unit vector per row.
    pub points: Array2<f64>,
    /// Nonnegative, summing to one.
    pub weights: Vec<f64>,
    pub kind: GridKind,
    /// Gauss–Legendre order for `GaussSphereD3`, number of points otherwise.
    pub n: usize,
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// Angle of each point on the circle.
    pub fn angles(&self) -> Option<Vec<f64>> {
        (self.d == 2).then(|| (0..self.len()).map(|i| self.points[[i, 1]].atan2(self.points[[i, 0]])).collect())
    }

    /// Largest degree that analysis resolves exactly on this grid.
    pub fn max_exact_degree(&self) -> Option<usize> {
        match self.kind {
            GridKind::UniformCircle => Some((self.n - 1) / 2),
            GridKind::GaussSphereD3 => Some(self.n - 1),
            GridKind::MonteCarlo => None,
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// CSV with columns `x0..x{d−1}, weight, value`.
    pub fn write_csv(&self, path: &Path, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return invalid("value count does not match grid size");
        }
        let mut cols: Vec<String> = (0..self.d).map(|k| format!("x{k}")).collect();
        cols.push("weight".into());
        cols.push("value".into());
        let rows: Vec<Vec<Cell>> = (0..self.len())
            .map(|i| {
                let mut r: Vec<Cell> = self.points.row(i).iter().map(|&x| x.into()).collect();
                r.push(self.weights[i].into());
                r.push(values[i].into());
                r
            })
            .collect();
        write_csv(path, &cols, &rows)
    }
}

/// Builds a grid. For `GaussSphereD3`, `n` is the Gauss–Legendre order and the
/// grid has `2n²` points; `seed` is used only by `MonteCarlo`.
pub fn make_grid(d: usize, n: usize, kind: GridKind, seed: u64) -> Result<SphereGrid> {
    if d < 2 {
        return invalid(format!("sphere dimension d = {d} must be at least 2"));
    }
    if n < 4 {
        return invalid(format!("grid size n = {n} must be at least 4"));
    }
    match kind {
        GridKind::UniformCircle => {
            if d != 2 {
                return invalid("uniform_circle grids need d = 2");
            }
            let step = 2.0 * PI / n as f64;
            let points = Array2::from_shape_fn((n, 2), |(k, c)| {
                let th = k as f64 * step;
                if c == 0 {
                    th.cos()
                } else {
                    th.sin()
                }
            });
            Ok(SphereGrid {
                d,
                points,
                weights: vec![1.0 / n as f64; n],
                kind,
                n,
            })
        }
        GridKind::MonteCarlo => {
            let mut rng = RngStream::new(seed, 0x6772_6964);
            let mut points = Array2::zeros((n, d));
            for mut row in points.rows_mut() {
                let v: Vec<f64> = rng.normal_vec(d);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                for (r, x) in row.iter_mut().zip(&v) {
                    *r = x / norm;
                }
            }
            Ok(SphereGrid {
                d,
                points,
                weights: vec![1.0 / n as f64; n],
                kind,
                n,
            })
        }
        GridKind::GaussSphereD3 => {
            if d != 3 {
                return invalid("gauss_sphere_d3 grids need d = 3");
            }
            let lat = gauss_jacobi_rule(n, 0.0)?;
            let n_lon = 2 * n;
            let mut points = Array2::zeros((n * n_lon, 3));
            let mut weights = Vec::with_capacity(n * n_lon);
            let mut row = 0;
            for (&t, &w) in lat.nodes.iter().zip(&lat.weights) {
                let s = (1.0 - t * t).max(0.0).sqrt();
                for k in 0..n_lon {
                    let phi = 2.0 * PI * k as f64 / n_lon as f64;
                    points[[row, 0]] = s * phi.cos();
                    points[[row, 1]] = s * phi.sin();
                    points[[row, 2]] = t;
                    weights.push(w / n_lon as f64);
                    row += 1;
                }
            }
            Ok(SphereGrid {
                d,
                points,
                weights,
                kind,
                n,
            })
        }
    }
}
