//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records one forward computation. Parameters are borrowed from a
//! [`ParamStore`] rather than copied; [`Tape::backward`] returns gradients
//! indexed by parameter.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::ops::{self, PoolCache};
use super::params::{Gradients, ParamId, ParamStore};
use crate::embed::EmbeddingBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Array2<f64>,
        inv_std: Array1<f64>,
    },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Biaffine {
        x1: Var,
        x2: Var,
        u: Var,
        w: Var,
    },
    Pool {
        bundle: Arc<EmbeddingBundle>,
        attention: Var,
        weights: Var,
        cache: PoolCache,
    },
    /// Cross-entropy of row-wise softmax; rows with no target are skipped.
    SoftmaxCe {
        logits: Var,
        targets: Vec<Option<usize>>,
        scale: f64,
    },
    /// Binary cross-entropy on logits, weighted elementwise by `mask`.
    BceLogits {
        logits: Var,
        targets: Array2<f64>,
        mask: Array2<f64>,
        scale: f64,
    },
}

struct Node {
    value: Option<Array2<f64>>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn add_into(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> ArrayView2<'_, f64> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(x), _) => x.view(),
            (None, Op::Param(id)) => self.params.value(*id).view(),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.value(a) + &self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = &self.value(a) + &self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = &self.value(a) * &self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = &self.value(a) * factor;
        self.push(v, Op::Scale(a, factor))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(ops::gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).to_owned();
        for mut row in v.rows_mut() {
            let sm = ops::softmax(&row.to_vec());
            row.assign(&Array1::from(sm));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / n;
        let centered = &xv - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|c| c * c).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let normalized = &centered * &inv_std.view().insert_axis(Axis(1));
        let out = &(&normalized * &self.value(gain)) + &self.value(bias);
        self.push(out, Op::LayerNorm { x, gain, bias, normalized, inv_std })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), rows);
        self.push(v, Op::GatherRows(a, rows.to_vec()))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self
            .value(a)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, cols))
            .expect("element count preserved");
        self.push(v, Op::Reshape(a))
    }

    /// K-channel biaffine scores, `(n1·n2) × K` with row `i·n2 + j`.
    pub fn biaffine(&mut self, x1: Var, x2: Var, u: Var, w: Var, b: Var) -> Var {
        let scores = ops::biaffine_views(
            self.value(x1),
            self.value(x2),
            self.value(u),
            self.value(w),
            self.value(b),
        )
        .expect("biaffine shapes");
        // The bias enters as an ordinary broadcast row add.
        let no_bias = scores - &self.value(b);
        let raw = self.push(no_bias, Op::Biaffine { x1, x2, u, w });
        self.add_row(raw, b)
    }

    pub fn pool(&mut self, bundle: Arc<EmbeddingBundle>, attention: Var, weights: Var) -> Result<Var, ops::EmptyTokenError> {
        let att = self.value(attention).column(0).to_owned();
        let w = self.value(weights).row(0).to_owned();
        let (out, cache) = ops::pool_forward(&bundle, att.view(), w.view())?;
        Ok(self.push(out, Op::Pool { bundle, attention, weights, cache }))
    }

    /// `scale · Σ_rows −log softmax(logits_row)[target]` over rows with a target.
    pub fn softmax_ce(&mut self, logits: Var, targets: Vec<Option<usize>>, scale: f64) -> Var {
        let lv = self.value(logits);
        let mut total = 0.0;
        for (row, t) in lv.rows().into_iter().zip(&targets) {
            if let Some(t) = t {
                let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let lse = max + row.mapv(|x| (x - max).exp()).sum().ln();
                total += lse - row[*t];
            }
        }
        self.push(Array2::from_elem((1, 1), scale * total), Op::SoftmaxCe { logits, targets, scale })
    }

    pub fn bce_logits(&mut self, logits: Var, targets: Array2<f64>, mask: Array2<f64>, scale: f64) -> Var {
        let lv = self.value(logits);
        let mut total = 0.0;
        for ((z, t), m) in lv.iter().zip(&targets).zip(&mask) {
            if *m != 0.0 {
                total += m * (ops::softplus(*z) - t * z);
            }
        }
        self.push(Array2::from_elem((1, 1), scale * total), Op::BceLogits { logits, targets, mask, scale })
    }

    /// Back-propagates from a `1 × 1` output and collects parameter gradients.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones(self.shape(output)));
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    add_into(&mut grads[a.0], ga);
                    add_into(&mut grads[b.0], gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(&self.value(*b));
                    let gb = g.t().dot(&self.value(*a));
                    add_into(&mut grads[a.0], ga);
                    add_into(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    add_into(&mut grads[a.0], g.clone());
                    add_into(&mut grads[b.0], g);
                }
                Op::AddRow(a, r) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    add_into(&mut grads[a.0], g);
                    add_into(&mut grads[r.0], gr);
                }
                Op::Mul(a, b) => {
                    let ga = &g * &self.value(*b);
                    let gb = &g * &self.value(*a);
                    add_into(&mut grads[a.0], ga);
                    add_into(&mut grads[b.0], gb);
                }
                Op::Scale(a, f) => add_into(&mut grads[a.0], g * *f),
                Op::Gelu(a) => {
                    let ga = &g * &self.value(*a).mapv(ops::gelu_grad);
                    add_into(&mut grads[a.0], ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[idx].value.as_ref().unwrap();
                    let gy = &g * y;
                    let dot = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = &gy - &(y * &dot);
                    add_into(&mut grads[a.0], ga);
                }
                Op::LayerNorm { x, gain, bias, normalized, inv_std } => {
                    let n = normalized.ncols() as f64;
                    add_into(&mut grads[gain.0], (&g * normalized).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    add_into(&mut grads[bias.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dn = &g * &self.value(*gain);
                    let sum_dn = dn.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let sum_dn_n = (&dn * normalized).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let inner = &(&dn * n - &sum_dn) - &(normalized * &sum_dn_n);
                    let gx = &inner * &(inv_std / n).insert_axis(Axis(1));
                    add_into(&mut grads[x.0], gx);
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        add_into(&mut grads[p.0], g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    add_into(&mut grads[a.0], ga);
                }
                Op::ConcatRows(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let h = self.shape(*p).0;
                        add_into(&mut grads[p.0], g.slice(s![row..row + h, ..]).to_owned());
                        row += h;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (r, &src) in rows.iter().enumerate() {
                        let mut dst = ga.row_mut(src);
                        dst += &g.row(r);
                    }
                    add_into(&mut grads[a.0], ga);
                }
                Op::Reshape(a) => {
                    let ga = g.into_shape_with_order(self.shape(*a)).expect("element count preserved");
                    add_into(&mut grads[a.0], ga);
                }
                Op::Biaffine { x1, x2, u, w } => {
                    let bg = ops::biaffine_backward(
                        self.value(*x1),
                        self.value(*x2),
                        self.value(*u),
                        self.value(*w),
                        g.view(),
                    );
                    add_into(&mut grads[x1.0], bg.x1);
                    add_into(&mut grads[x2.0], bg.x2);
                    add_into(&mut grads[u.0], bg.u);
                    add_into(&mut grads[w.0], bg.w);
                }
                Op::Pool { bundle, attention, weights, cache } => {
                    let att = self.value(*attention).column(0).to_owned();
                    let (ga, gw) = ops::pool_backward(bundle, att.view(), cache, g.view());
                    add_into(&mut grads[attention.0], ga.insert_axis(Axis(1)));
                    add_into(&mut grads[weights.0], gw.insert_axis(Axis(0)));
                }
                Op::SoftmaxCe { logits, targets, scale } => {
                    let upstream = g[[0, 0]] * scale;
                    let lv = self.value(*logits);
                    let mut gl = Array2::zeros(lv.dim());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            let probs = ops::softmax(&lv.row(r).to_vec());
                            for (c, p) in probs.into_iter().enumerate() {
                                gl[[r, c]] = upstream * (p - if c == *t { 1.0 } else { 0.0 });
                            }
                        }
                    }
                    add_into(&mut grads[logits.0], gl);
                }
                Op::BceLogits { logits, targets, mask, scale } => {
                    let upstream = g[[0, 0]] * scale;
                    let lv = self.value(*logits);
                    let mut gl = Array2::zeros(lv.dim());
                    ndarray::Zip::from(&mut gl)
                        .and(&lv)
                        .and(targets)
                        .and(mask)
                        .for_each(|o, &z, &t, &m| *o = upstream * m * (ops::sigmoid(z) - t));
                    add_into(&mut grads[logits.0], gl);
                }
            }
        }
        out
    }
}
