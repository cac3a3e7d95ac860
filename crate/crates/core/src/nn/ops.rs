//! Forward and backward kernels for the fused operations: biaffine scoring
//! and layer-weighted subword pooling. Plain `ndarray` code with no tape, so
//! each kernel can be checked in isolation.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::embed::EmbeddingBundle;

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let d_inner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

/// Parameters of a K-channel biaffine scorer between `d1`- and `d2`-dim inputs.
///
/// `u` stores the `d1 × K × d2` bilinear tensor flattened to `d1 × (K·d2)`,
/// `w` the linear map on the concatenation as `(d1 + d2) × K`, `b` is `1 × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiaffineParams {
    pub u: Array2<f64>,
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl BiaffineParams {
    pub fn zeros(d1: usize, d2: usize, k: usize) -> Self {
        Self {
            u: Array2::zeros((d1, k * d2)),
            w: Array2::zeros((d1 + d2, k)),
            b: Array2::zeros((1, k)),
        }
    }

    pub fn channels(&self) -> usize {
        self.b.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        let d1 = self.u.nrows();
        (d1, self.w.nrows() - d1)
    }

    /// Element `U[a][k][b]` of the bilinear tensor.
    pub fn u_at(&self, a: usize, k: usize, b: usize) -> f64 {
        let (_, d2) = self.dims();
        self.u[[a, k * d2 + b]]
    }

    pub fn u_at_mut(&mut self, a: usize, k: usize, b: usize) -> &mut f64 {
        let (_, d2) = self.dims();
        &mut self.u[[a, k * d2 + b]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeError {
    pub expected: (usize, usize),
    pub found: (usize, usize),
}

impl std::fmt::Display for ShapeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "shape mismatch: expected {:?}, found {:?}", self.expected, self.found)
    }
}

impl std::error::Error for ShapeError {}

fn check_inputs(
    x1: &ArrayView2<f64>,
    x2: &ArrayView2<f64>,
    u: &ArrayView2<f64>,
    k: usize,
) -> Result<(), ShapeError> {
    let d1 = x1.ncols();
    let d2 = x2.ncols();
    if u.dim() != (d1, k * d2) {
        return Err(ShapeError { expected: (d1, k * d2), found: u.dim() });
    }
    Ok(())
}

/// `X₁ᵀ U X₂` for every row pair; output row `i·n2 + j`, column `k`.
pub fn bilinear(
    x1: ArrayView2<f64>,
    x2: ArrayView2<f64>,
    u: ArrayView2<f64>,
    k: usize,
) -> Result<Array2<f64>, ShapeError> {
    check_inputs(&x1, &x2, &u, k)?;
    let (n1, n2, d2) = (x1.nrows(), x2.nrows(), x2.ncols());
    let left = x1.dot(&u); // n1 × (K·d2)
    let mut out = Array2::zeros((n1 * n2, k));
    for c in 0..k {
        let scores = left.slice(s![.., c * d2..(c + 1) * d2]).dot(&x2.t()); // n1 × n2
        for i in 0..n1 {
            out.slice_mut(s![i * n2..(i + 1) * n2, c]).assign(&scores.row(i));
        }
    }
    Ok(out)
}

/// Bilinear term plus `W(x₁ ⊕ x₂) + b`.
pub fn biaffine(
    x1: ArrayView2<f64>,
    x2: ArrayView2<f64>,
    params: &BiaffineParams,
) -> Result<Array2<f64>, ShapeError> {
    let k = params.channels();
    let (d1, d2) = (x1.ncols(), x2.ncols());
    if params.w.dim() != (d1 + d2, k) {
        return Err(ShapeError { expected: (d1 + d2, k), found: params.w.dim() });
    }
    biaffine_views(x1, x2, params.u.view(), params.w.view(), params.b.view())
}

pub(crate) fn biaffine_views(
    x1: ArrayView2<f64>,
    x2: ArrayView2<f64>,
    u: ArrayView2<f64>,
    w: ArrayView2<f64>,
    b: ArrayView2<f64>,
) -> Result<Array2<f64>, ShapeError> {
    let k = b.ncols();
    let (n1, n2, d1) = (x1.nrows(), x2.nrows(), x1.ncols());
    let mut out = bilinear(x1, x2, u, k)?;
    let lin1 = x1.dot(&w.slice(s![..d1, ..])); // n1 × K
    let lin2 = x2.dot(&w.slice(s![d1.., ..])); // n2 × K
    for i in 0..n1 {
        for j in 0..n2 {
            let mut row = out.row_mut(i * n2 + j);
            row += &lin1.row(i);
            row += &lin2.row(j);
            row += &b.row(0);
        }
    }
    Ok(out)
}

pub struct BiaffineGrads {
    pub x1: Array2<f64>,
    pub x2: Array2<f64>,
    pub u: Array2<f64>,
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

/// Gradients of `Σ G ⊙ biaffine(x1, x2)` with respect to every input.
pub fn biaffine_backward(
    x1: ArrayView2<f64>,
    x2: ArrayView2<f64>,
    u: ArrayView2<f64>,
    w: ArrayView2<f64>,
    grad: ArrayView2<f64>,
) -> BiaffineGrads {
    let k = grad.ncols();
    let (n1, d1) = x1.dim();
    let (n2, d2) = x2.dim();

    // Row/column sums of the upstream gradient per channel.
    let g3 = grad.to_shape((n1, n2, k)).expect("contiguous gradient");
    let s1 = g3.sum_axis(Axis(1)); // n1 × K
    let s2 = g3.sum_axis(Axis(0)); // n2 × K
    let b = grad.sum_axis(Axis(0)).insert_axis(Axis(0));

    let w_top = w.slice(s![..d1, ..]);
    let w_bot = w.slice(s![d1.., ..]);
    let mut gw = Array2::zeros((d1 + d2, k));
    gw.slice_mut(s![..d1, ..]).assign(&x1.t().dot(&s1));
    gw.slice_mut(s![d1.., ..]).assign(&x2.t().dot(&s2));
    let mut gx1 = s1.dot(&w_top.t());
    let mut gx2 = s2.dot(&w_bot.t());

    let left = x1.dot(&u); // n1 × (K·d2)
    let mut gu = Array2::zeros((d1, k * d2));
    for c in 0..k {
        let gk = g3.slice(s![.., .., c]); // n1 × n2
        let uk = u.slice(s![.., c * d2..(c + 1) * d2]); // d1 × d2
        let gk_x2 = gk.dot(&x2); // n1 × d2
        gu.slice_mut(s![.., c * d2..(c + 1) * d2]).assign(&x1.t().dot(&gk_x2));
        gx1 += &gk_x2.dot(&uk.t());
        gx2 += &gk.t().dot(&left.slice(s![.., c * d2..(c + 1) * d2]));
    }
    BiaffineGrads { x1: gx1, x2: gx2, u: gu, w: gw, b }
}

/// Intermediate values of [`pool_forward`] needed by the backward pass.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub mix: Vec<f64>,
    /// Per layer, per token: subword attention weights.
    pub alphas: Vec<Vec<Vec<f64>>>,
    /// Per layer: the pooled `T × D` token matrix before layer mixing.
    pub pooled: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmptyTokenError {
    pub token: usize,
}

/// Token embeddings from a multi-layer subword bundle: attention over each
/// token's subwords (scores `a·x`, softmax within the token, same `a` for
/// every layer), then a softmax(`w`)-weighted sum over layers.
pub fn pool_forward(
    bundle: &EmbeddingBundle,
    attention: ArrayView1<f64>,
    layer_weights: ArrayView1<f64>,
) -> Result<(Array2<f64>, PoolCache), EmptyTokenError> {
    let (layers, _, dim) = bundle.vectors.dim();
    let tokens = bundle.alignment.len();
    let mix = softmax(layer_weights.as_slice().expect("contiguous weights"));
    let mut out = Array2::zeros((tokens, dim));
    let mut alphas = Vec::with_capacity(layers);
    let mut pooled_all = Vec::with_capacity(layers);
    for l in 0..layers {
        let layer = bundle.vectors.index_axis(Axis(0), l);
        let mut pooled = Array2::zeros((tokens, dim));
        let mut layer_alphas = Vec::with_capacity(tokens);
        for (t, subwords) in bundle.alignment.iter().enumerate() {
            if subwords.is_empty() {
                return Err(EmptyTokenError { token: t });
            }
            let scores: Vec<f64> = subwords.iter().map(|&i| layer.row(i).dot(&attention)).collect();
            let alpha = softmax(&scores);
            let mut row = pooled.row_mut(t);
            for (&i, &a) in subwords.iter().zip(&alpha) {
                row.scaled_add(a, &layer.row(i));
            }
            layer_alphas.push(alpha);
        }
        out.scaled_add(mix[l], &pooled);
        alphas.push(layer_alphas);
        pooled_all.push(pooled);
    }
    Ok((out, PoolCache { mix, alphas, pooled: pooled_all }))
}

/// Gradients of `Σ G ⊙ pool(...)` with respect to the attention vector and
/// the raw layer weights.
pub fn pool_backward(
    bundle: &EmbeddingBundle,
    attention: ArrayView1<f64>,
    cache: &PoolCache,
    grad: ArrayView2<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let layers = cache.mix.len();
    let dim = attention.len();
    let d_mix: Vec<f64> = cache.pooled.iter().map(|p| (p * &grad).sum()).collect();
    let dot: f64 = cache.mix.iter().zip(&d_mix).map(|(p, d)| p * d).sum();
    let d_weights = Array1::from_iter(cache.mix.iter().zip(&d_mix).map(|(p, d)| p * (d - dot)));

    let mut d_att = Array1::zeros(dim);
    for l in 0..layers {
        let layer = bundle.vectors.index_axis(Axis(0), l);
        for (t, subwords) in bundle.alignment.iter().enumerate() {
            if subwords.len() < 2 {
                continue;
            }
            let g = grad.row(t);
            let alpha = &cache.alphas[l][t];
            let d_alpha: Vec<f64> = subwords.iter().map(|&i| cache.mix[l] * layer.row(i).dot(&g)).collect();
            let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            for (k, &i) in subwords.iter().enumerate() {
                let d_score = alpha[k] * (d_alpha[k] - mean);
                d_att.scaled_add(d_score, &layer.row(i));
            }
        }
    }
    (d_att, d_weights)
}
