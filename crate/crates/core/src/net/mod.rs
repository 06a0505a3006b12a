//! Finite-width fully connected networks without biases.
//!
//! `f^1 = W^0 V x`, `f^{ℓ+1} = W^ℓ n_ℓ^{−1/2} σ(f^ℓ)` and the scalar output
//! `w_out n_L^{−1/2} σ(f^L)`. The matrices `W^0 .. W^{L−1}` are trained; `V`
//! (orthonormal columns) and the `±1` output row are fixed.

pub mod snapshot;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::activations::ActivationSpec;
use crate::error::{invalid, Result};
use crate::kernel::recursion::{layer_acts, ZonalKernel};
use crate::numerics::linalg::spectral_norm;
use crate::numerics::rng::RngStream;
use crate::par;
use crate::sphere::grid::SphereGrid;

pub use snapshot::{read_snapshot, write_snapshot, SnapshotHeader};

/// Grid points per block in batched loss evaluation.
const LOSS_BLOCK: usize = 32;
const UNIT_TOL: f64 = 1e-9;

/// Layer widths `n_0 .. n_L` on inputs from `S^{d−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub d: usize,
    pub widths: Vec<usize>,
}

impl NetDims {
    pub fn new(d: usize, widths: Vec<usize>) -> Result<Self> {
        if d == 0 {
            return invalid("input dimension must be positive");
        }
        if widths.len() < 2 {
            return invalid("need widths n_0 and at least n_1");
        }
        if widths.iter().any(|&w| w == 0) {
            return invalid("all widths must be at least 1");
        }
        if d > widths[0] {
            return invalid(format!("input dimension {d} exceeds n_0 = {}", widths[0]));
        }
        Ok(Self { d, widths })
    }

    /// From a layer tuple `(d, n_1, .., n_L, 1)`, taking `n_0 = n_1`.
    pub fn from_layers(layers: &[usize]) -> Result<Self> {
        if layers.len() < 3 || *layers.last().expect("nonempty") != 1 {
            return invalid("layer tuple must look like (d, n_1, .., n_L, 1)");
        }
        let d = layers[0];
        let mut widths = vec![layers[1]];
        widths.extend_from_slice(&layers[1..layers.len() - 1]);
        Self::new(d, widths)
    }

    /// All widths `n_0 .. n_L` equal to `m`.
    pub fn uniform(d: usize, depth: usize, m: usize) -> Result<Self> {
        Self::new(d, vec![m; depth + 1])
    }

    /// `L`, the number of trained matrices.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    /// `n_ℓ`.
    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    /// `m = n_{L−1}`.
    pub fn m(&self) -> usize {
        self.widths[self.depth() - 1]
    }

    /// Shape `(n_{ℓ+1}, n_ℓ)` of `W^ℓ`.
    pub fn weight_shape(&self, layer: usize) -> (usize, usize) {
        (self.widths[layer + 1], self.widths[layer])
    }

    pub fn trained_len(&self) -> usize {
        (0..self.depth()).map(|l| self.widths[l] * self.widths[l + 1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub dims: NetDims,
    /// `n_0 × d` with orthonormal columns.
    pub v: Array2<f64>,
    /// `W^0 .. W^{L−1}`.
    pub w: Vec<Array2<f64>>,
    /// Entries in `{−1, +1}`, length `n_L`.
    pub w_out: Array1<f64>,
}

fn gaussian_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), rng.normal_vec(rows * cols)).expect("shape matches length")
}

fn orthonormal_columns(rng: &mut RngStream, rows: usize, cols: usize) -> Array2<f64> {
    let g = gaussian_matrix(rng, rows, cols);
    let qr = nalgebra::DMatrix::from_row_slice(rows, cols, g.as_slice().expect("standard layout")).qr();
    let (q, r) = (qr.q(), qr.r());
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        sign * q[(i, j)]
    })
}

/// Seeded initialization. Each component draws from its own derived stream.
pub fn init(dims: &NetDims, rng: &RngStream) -> NetworkParams {
    let v = orthonormal_columns(&mut rng.derive(0), dims.widths[0], dims.d);
    let w = (0..dims.depth())
        .map(|l| {
            let (r, c) = dims.weight_shape(l);
            gaussian_matrix(&mut rng.derive(1 + l as u64), r, c)
        })
        .collect();
    let mut out_rng = rng.derive(u64::MAX);
    let w_out = (0..dims.widths[dims.depth()]).map(|_| out_rng.rademacher()).collect();
    NetworkParams {
        dims: dims.clone(),
        v,
        w,
        w_out,
    }
}

impl NetworkParams {
    /// Trained matrices flattened row-major in layer order.
    pub fn trained_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims.trained_len());
        for w in &self.w {
            out.extend(w.iter().copied());
        }
        out
    }

    pub fn with_trained_flat(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.dims.trained_len() {
            return invalid(format!(
                "expected {} trained parameters, got {}",
                self.dims.trained_len(),
                theta.len()
            ));
        }
        let mut next = self.clone();
        let mut offset = 0;
        for w in &mut next.w {
            let len = w.len();
            w.iter_mut().zip(&theta[offset..offset + len]).for_each(|(a, b)| *a = *b);
            offset += len;
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    /// `f^1 .. f^L`.
    pub preactivations: Vec<Array1<f64>>,
    pub output: f64,
}

fn check_unit_rows(points: ArrayView2<f64>, d: usize) -> Result<()> {
    if points.ncols() != d {
        return invalid(format!("points have dimension {}, network expects {d}", points.ncols()));
    }
    for (i, row) in points.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return invalid(format!("point {i} has norm {norm}, expected 1"));
        }
    }
    Ok(())
}

/// Batched preactivations `F^1 .. F^k` for `k = acts.len()`, each of shape `n × n_ℓ`.
fn batch_preacts(params: &NetworkParams, points: ArrayView2<f64>, acts: &[ActivationSpec]) -> Vec<Array2<f64>> {
    let dims = &params.dims;
    let u = points.dot(&params.v.t());
    let mut f = vec![u.dot(&params.w[0].t())];
    for l in 1..acts.len().min(dims.depth()) {
        let a = f[l - 1].mapv(|x| acts[l - 1].value(x));
        let scale = (dims.widths[l] as f64).sqrt().recip();
        f.push(a.dot(&params.w[l].t()) * scale);
    }
    f
}

fn output_of(params: &NetworkParams, top: ArrayView2<f64>, act: &ActivationSpec) -> Array1<f64> {
    let scale = (params.dims.widths[params.dims.depth()] as f64).sqrt().recip();
    top.mapv(|x| act.value(x)).dot(&params.w_out) * scale
}

/// Forward pass at a single unit vector.
pub fn forward(params: &NetworkParams, x: ArrayView1<f64>, acts: &[ActivationSpec]) -> Result<ForwardRecord> {
    let acts = layer_acts(acts, params.dims.depth())?;
    let points = x.insert_axis(Axis(0));
    check_unit_rows(points, params.dims.d)?;
    let f = batch_preacts(params, points, &acts);
    let output = output_of(params, f[f.len() - 1].view(), &acts[acts.len() - 1])[0];
    Ok(ForwardRecord {
        preactivations: f.into_iter().map(|m| m.row(0).to_owned()).collect(),
        output,
    })
}

/// Network outputs at every row of `points`.
pub fn outputs(params: &NetworkParams, points: ArrayView2<f64>, acts: &[ActivationSpec]) -> Result<Array1<f64>> {
    let acts = layer_acts(acts, params.dims.depth())?;
    check_unit_rows(points, params.dims.d)?;
    let f = batch_preacts(params, points, &acts);
    Ok(output_of(params, f[f.len() - 1].view(), &acts[acts.len() - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramKind {
    SigmaHat,
    SigmaDotHat,
    NtkHat,
    NtkLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    /// `n × d`, one point per row.
    pub points: Array2<f64>,
    pub values: Array2<f64>,
    pub kind: GramKind,
}

impl GramMatrix {
    /// `k(x_i·x_j)` for a zonal kernel.
    pub fn from_zonal(kernel: &ZonalKernel, points: ArrayView2<f64>) -> Result<Self> {
        check_unit_rows(points, kernel.d)?;
        let n = points.nrows();
        let rows = par::map_range(n, |i| -> Result<Vec<f64>> {
            (i..n)
                .map(|j| kernel.eval(points.row(i).dot(&points.row(j)).clamp(-1.0, 1.0)))
                .collect()
        });
        let values = fill_symmetric(n, rows.into_iter().collect::<Result<Vec<_>>>()?);
        Ok(Self {
            points: points.to_owned(),
            values,
            kind: GramKind::NtkLimit,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Builds a symmetric matrix from upper-triangular rows `row_i = [a_ii, a_i,i+1, ..]`.
fn fill_symmetric(n: usize, upper: Vec<Vec<f64>>) -> Array2<f64> {
    let mut out = Array2::zeros((n, n));
    for (i, row) in upper.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            out[[i, i + k]] = v;
            out[[i + k, i]] = v;
        }
    }
    out
}

/// `(1/p) F Fᵀ` assembled over pairs `i ≤ j`.
fn feature_gram(features: &Array2<f64>) -> Array2<f64> {
    let n = features.nrows();
    let scale = (features.ncols() as f64).recip();
    let rows = par::map_range(n, |i| {
        let fi = features.row(i);
        (i..n).map(|j| fi.dot(&features.row(j)) * scale).collect()
    });
    fill_symmetric(n, rows)
}

fn layer_features(
    params: &NetworkParams,
    points: ArrayView2<f64>,
    layer: usize,
    acts: &[ActivationSpec],
    derivative: bool,
) -> Result<Array2<f64>> {
    let depth = params.dims.depth();
    if layer == 0 || layer > depth {
        return invalid(format!("layer {layer} outside 1..={depth}"));
    }
    let acts = layer_acts(acts, depth)?;
    check_unit_rows(points, params.dims.d)?;
    let f = batch_preacts(params, points, &acts[..layer]);
    let act = &acts[layer - 1];
    Ok(if derivative {
        f[layer - 1].mapv(|x| act.derivative(x))
    } else {
        f[layer - 1].mapv(|x| act.value(x))
    })
}

/// `Σ̂^ℓ(x_i, x_j) = n_ℓ^{−1} σ(f^ℓ(x_i))ᵀ σ(f^ℓ(x_j))`.
pub fn empirical_sigma(
    params: &NetworkParams,
    points: ArrayView2<f64>,
    layer: usize,
    acts: &[ActivationSpec],
) -> Result<GramMatrix> {
    let feats = layer_features(params, points, layer, acts, false)?;
    Ok(GramMatrix {
        points: points.to_owned(),
        values: feature_gram(&feats),
        kind: GramKind::SigmaHat,
    })
}

/// `Σ̇̂^ℓ`, as [`empirical_sigma`] with `σ̇` in place of `σ`.
pub fn empirical_sigma_dot(
    params: &NetworkParams,
    points: ArrayView2<f64>,
    layer: usize,
    acts: &[ActivationSpec],
) -> Result<GramMatrix> {
    let feats = layer_features(params, points, layer, acts, true)?;
    Ok(GramMatrix {
        points: points.to_owned(),
        values: feature_gram(&feats),
        kind: GramKind::SigmaDotHat,
    })
}

/// `Γ̂ = Σ̇̂^L ⊙ Σ̂^{L−1}`, the Jacobian product over `W^{L−1}`.
pub fn empirical_ntk(params: &NetworkParams, points: ArrayView2<f64>, acts: &[ActivationSpec]) -> Result<GramMatrix> {
    let depth = params.dims.depth();
    if depth < 2 {
        return invalid("the empirical NTK needs L >= 2");
    }
    let acts = layer_acts(acts, depth)?;
    check_unit_rows(points, params.dims.d)?;
    let f = batch_preacts(params, points, &acts);
    let lower = f[depth - 2].mapv(|x| acts[depth - 2].value(x));
    let upper = f[depth - 1].mapv(|x| acts[depth - 1].derivative(x));
    let values = feature_gram(&upper) * feature_gram(&lower);
    Ok(GramMatrix {
        points: points.to_owned(),
        values,
        kind: GramKind::NtkHat,
    })
}

/// Loss value and gradients with respect to `W^0 .. W^{L−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grads: Vec<Array2<f64>>,
}

impl LossGrad {
    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|g| g.iter().copied()).collect()
    }
}

fn block_loss_grad(
    params: &NetworkParams,
    points: ArrayView2<f64>,
    target: &[f64],
    weights: &[f64],
    acts: &[ActivationSpec],
) -> LossGrad {
    let dims = &params.dims;
    let depth = dims.depth();
    let f = batch_preacts(params, points, acts);
    let top_scale = (dims.widths[depth] as f64).sqrt().recip();
    let out = output_of(params, f[depth - 1].view(), &acts[depth - 1]);
    let resid: Array1<f64> = out.iter().zip(target).map(|(o, y)| o - y).collect();
    let loss = 0.5 * par::pairwise_sum(&resid.iter().zip(weights).map(|(r, w)| w * r * r).collect::<Vec<_>>());
    let delta: Array1<f64> = resid.iter().zip(weights).map(|(r, w)| r * w).collect();

    // g = ∂loss/∂F^L
    let mut g = Array2::from_shape_fn(f[depth - 1].dim(), |(q, i)| delta[q] * params.w_out[i] * top_scale);
    Zip::from(&mut g)
        .and(&f[depth - 1])
        .for_each(|gv, &x| *gv *= acts[depth - 1].derivative(x));
    let mut grads = vec![Array2::zeros((0, 0)); depth];
    for l in (1..depth).rev() {
        let a = f[l - 1].mapv(|x| acts[l - 1].value(x));
        let scale = (dims.widths[l] as f64).sqrt().recip();
        grads[l] = g.t().dot(&a) * scale;
        let mut below = g.dot(&params.w[l]) * scale;
        Zip::from(&mut below)
            .and(&f[l - 1])
            .for_each(|gv, &x| *gv *= acts[l - 1].derivative(x));
        g = below;
    }
    let u = points.dot(&params.v.t());
    grads[0] = g.t().dot(&u);
    LossGrad { loss, grads }
}

fn tree_reduce(mut parts: Vec<LossGrad>) -> LossGrad {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.loss += b.loss;
                for (ga, gb) in a.grads.iter_mut().zip(&b.grads) {
                    *ga += gb;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().expect("at least one block")
}

/// `½ Σ_q w_q (f(x_q) − f*(x_q))²` and its exact gradient.
///
/// Grid points are processed in fixed blocks whose partial results are
/// combined by a pairwise tree, so the result does not depend on scheduling.
pub fn loss_and_grad(
    params: &NetworkParams,
    target: &[f64],
    grid: &SphereGrid,
    acts: &[ActivationSpec],
) -> Result<LossGrad> {
    let n = grid.len();
    if target.len() != n {
        return invalid(format!("target has {} values for {n} grid points", target.len()));
    }
    if n == 0 {
        return invalid("empty grid");
    }
    let acts = layer_acts(acts, params.dims.depth())?;
    check_unit_rows(grid.points.view(), params.dims.d)?;
    let blocks = n.div_ceil(LOSS_BLOCK);
    let parts = par::map_range(blocks, |b| {
        let lo = b * LOSS_BLOCK;
        let hi = (lo + LOSS_BLOCK).min(n);
        block_loss_grad(
            params,
            grid.points.slice(s![lo..hi, ..]),
            &target[lo..hi],
            &grid.weights[lo..hi],
            &acts,
        )
    });
    Ok(tree_reduce(parts))
}

/// `max_ℓ ‖W^ℓ_p − W^ℓ_q‖₂ · n_ℓ^{−1/2}` over the trained layers.
pub fn weight_distance(p: &NetworkParams, q: &NetworkParams) -> Result<f64> {
    if p.dims != q.dims {
        return invalid("weight_distance needs identical dims");
    }
    let per_layer = par::map_range(p.dims.depth(), |l| {
        let diff = &p.w[l] - &q.w[l];
        spectral_norm(diff.view(), 1e-13) / (p.dims.widths[l] as f64).sqrt()
    });
    Ok(per_layer.into_iter().fold(0.0, f64::max))
}
