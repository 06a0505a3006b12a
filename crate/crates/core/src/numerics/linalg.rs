//! Dense symmetric eigendecomposition and spectral norms.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{invalid, Result};

/// Eigenvalues of a kernel operator or matrix.
///
/// For matrices every multiplicity is 1 and eigenvalues are sorted descending.
/// For zonal kernels entry `ℓ` holds the eigenvalue shared by the `ν(ℓ)`
/// spherical harmonics of degree `ℓ`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Option<Array2<f64>>,
}

impl SpectralDecomposition {
    /// Eigenvalues repeated according to multiplicity, sorted descending.
    pub fn expanded(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .eigenvalues
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(&v, &m)| std::iter::repeat_n(v, m))
            .collect();
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }
}

fn max_abs(a: &ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0, |m, &v| m.max(v.abs()))
}

fn check_symmetric(a: &ArrayView2<f64>) -> Result<()> {
    let (r, c) = a.dim();
    if r != c {
        return invalid(format!("matrix is {r}x{c}, not square"));
    }
    let scale = max_abs(a).max(1.0);
    for i in 0..r {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-10 * scale {
                return invalid(format!("matrix not symmetric at ({i}, {j})"));
            }
        }
    }
    Ok(())
}

fn to_nalgebra_symmetrized(a: &ArrayView2<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]))
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eig(a: &Array2<f64>) -> Result<SpectralDecomposition> {
    let view = a.view();
    check_symmetric(&view)?;
    let n = a.nrows();
    if n == 0 {
        return invalid("empty matrix");
    }
    let eig = to_nalgebra_symmetrized(&view).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, k)| eig.eigenvectors[(i, order[k])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        multiplicities: vec![1; n],
        eigenvectors: Some(vectors),
    })
}

/// Eigenvalues only, descending.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    let view = a.view();
    check_symmetric(&view)?;
    if a.nrows() == 0 {
        return invalid("empty matrix");
    }
    let mut vals: Vec<f64> = to_nalgebra_symmetrized(&view)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok(vals)
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// Starts from the all-ones vector and stops once the Rayleigh-quotient
/// residual `‖AᵀAv − λv‖` drops below `tol·λ` (1000 iterations at most).
/// If the start vector is numerically orthogonal to the row space, the
/// largest-norm row of `A` is used as a restart.
pub fn spectral_norm(a: ArrayView2<f64>, tol: f64) -> f64 {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 || max_abs(&a) == 0.0 {
        return 0.0;
    }
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ones = Array1::from_elem(cols, 1.0 / (cols as f64).sqrt());
    let sigma = power_iterate(&a, ones, tol);
    if sigma > 1e-8 * fro {
        return sigma;
    }
    let best = (0..rows)
        .max_by(|&i, &j| {
            let ni = a.row(i).dot(&a.row(i));
            let nj = a.row(j).dot(&a.row(j));
            ni.total_cmp(&nj)
        })
        .unwrap_or(0);
    let row = a.row(best).to_owned();
    let norm = row.dot(&row).sqrt();
    power_iterate(&a, row / norm, tol).max(sigma)
}

fn power_iterate(a: &ArrayView2<f64>, mut v: Array1<f64>, tol: f64) -> f64 {
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let av = a.dot(&v);
        let u = a.t().dot(&av);
        lambda = v.dot(&u);
        if lambda <= 0.0 {
            return 0.0;
        }
        let resid = (&u - &(lambda * &v)).mapv(|x| x * x).sum().sqrt();
        let norm_u = u.dot(&u).sqrt();
        v = u / norm_u;
        if resid <= tol * lambda {
            break;
        }
    }
    lambda.sqrt()
}
