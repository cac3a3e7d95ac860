#![allow(dead_code)]

use std::sync::Arc;

use iegraph::corpus::{Argument, EntityMention, EventMention, Lang, Ontology, RelationMention, Sentence, Span};
use iegraph::embed::{EmbeddingBundle, EmbeddingProvider, HashEmbeddings};
use iegraph::nn::ops::BiaffineParams;
use iegraph::nn::{ParamId, ParamStore, Tape, Var};
use iegraph::parser::{Model, ParserConfig};
use iegraph::train::{assign_targets, forward_example, Example};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

pub fn random_bundle(layers: usize, dim: usize, alignment: Vec<Vec<usize>>, rng: &mut ChaCha8Rng) -> EmbeddingBundle {
    let s = alignment.iter().map(Vec::len).sum();
    let v = Array3::from_shape_simple_fn((layers, s, dim), || rng.random_range(-1.0..1.0));
    EmbeddingBundle::new("t", v, alignment).unwrap()
}

/// U(a, k, b) scalar loop over the stored d1 × (K·d2) layout.
pub fn bilinear_oracle(x1: &Array2<f64>, x2: &Array2<f64>, p: &BiaffineParams) -> Array2<f64> {
    let (n1, d1) = x1.dim();
    let (n2, d2) = x2.dim();
    let k = p.channels();
    let mut out = Array2::zeros((n1 * n2, k));
    for i in 0..n1 {
        for j in 0..n2 {
            for c in 0..k {
                let mut acc = 0.0;
                for a in 0..d1 {
                    for b in 0..d2 {
                        acc += x1[[i, a]] * p.u_at(a, c, b) * x2[[j, b]];
                    }
                }
                out[[i * n2 + j, c]] = acc;
            }
        }
    }
    out
}

pub fn biaffine_oracle(x1: &Array2<f64>, x2: &Array2<f64>, p: &BiaffineParams) -> Array2<f64> {
    let mut out = bilinear_oracle(x1, x2, p);
    let (n1, d1) = x1.dim();
    let (n2, d2) = x2.dim();
    for i in 0..n1 {
        for j in 0..n2 {
            for c in 0..p.channels() {
                let mut acc = p.b[[0, c]];
                for a in 0..d1 {
                    acc += p.w[[a, c]] * x1[[i, a]];
                }
                for b in 0..d2 {
                    acc += p.w[[d1 + b, c]] * x2[[j, b]];
                }
                out[[i * n2 + j, c]] += acc;
            }
        }
    }
    out
}

pub fn pool_oracle(b: &EmbeddingBundle, att: &[f64], w: &[f64]) -> Array2<f64> {
    let (layers, _, dim) = b.vectors.dim();
    let wsum: f64 = w.iter().map(|x| x.exp()).sum();
    let mut out = Array2::zeros((b.tokens(), dim));
    for (t, subs) in b.alignment.iter().enumerate() {
        for l in 0..layers {
            let mix = w[l].exp() / wsum;
            let scores: Vec<f64> = subs
                .iter()
                .map(|&s| (0..dim).map(|d| b.vectors[[l, s, d]] * att[d]).sum())
                .collect();
            let z: f64 = scores.iter().map(|x| x.exp()).sum();
            for (k, &s) in subs.iter().enumerate() {
                let alpha = scores[k].exp() / z;
                for d in 0..dim {
                    out[[t, d]] += mix * alpha * b.vectors[[l, s, d]];
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Σ out ⊙ C as a 1 × 1 tape value.
pub fn weighted_sum(tape: &mut Tape, out: Var, c: Array2<f64>) -> Var {
    let (n, k) = c.dim();
    let cw = tape.constant(c);
    let prod = tape.mul(out, cw);
    let left = tape.constant(Array2::ones((1, n)));
    let right = tape.constant(Array2::ones((k, 1)));
    let rows = tape.matmul(left, prod);
    tape.matmul(rows, right)
}

/// Largest relative error between the tape gradient and central differences
/// over every scalar of every parameter.
pub fn fd_check(store: &mut ParamStore, loss: impl Fn(&mut Tape) -> Var) -> f64 {
    let analytic = {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape);
        tape.backward(l)
    };
    let ids: Vec<ParamId> = store.iter().map(|(id, _)| id).collect();
    let eval = |store: &ParamStore| {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape);
        tape.scalar(l)
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for id in ids {
        let n = store.value(id).len();
        for k in 0..n {
            let orig = store.value(id).as_slice().unwrap()[k];
            store.value_mut(id).as_slice_mut().unwrap()[k] = orig + h;
            let up = eval(store);
            store.value_mut(id).as_slice_mut().unwrap()[k] = orig - h;
            let down = eval(store);
            store.value_mut(id).as_slice_mut().unwrap()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let exact = analytic.get(id).map_or(0.0, |g| g.as_slice().unwrap()[k]);
            let rel = (numeric - exact).abs() / (numeric.abs() + exact.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}


/// `gelu(x·W + b)` by scalar loops, with the tanh form of GELU.
pub fn fnn_oracle(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let k = w.ncols();
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let mut out = Array2::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            let mut z = b[[0, j]];
            for a in 0..d {
                z += x[[i, a]] * w[[a, j]];
            }
            out[[i, j]] = 0.5 * z * (1.0 + (c * (z + 0.044715 * z.powi(3))).tanh());
        }
    }
    out
}

fn three_token_example(model: &Model, provider: &HashEmbeddings) -> Example {
    let mut s = Sentence::from_text("fd", "doc", Lang::En, "John attacked Baghdad");
    s.entities.push(EntityMention::new("e0", "PER", Span::new(0, 1)));
    s.entities.push(EntityMention::new("e1", "GPE", Span::new(2, 3)));
    s.relations.push(RelationMention { id: "r0".into(), relation_type: "physical".into(), arg1: "e0".into(), arg2: "e1".into() });
    s.events.push(EventMention {
        id: "v0".into(),
        event_type: "attack".into(),
        trigger_span: Span::new(1, 2),
        arguments: vec![
            Argument { entity_id: "e0".into(), role: "attacker".into() },
            Argument { entity_id: "e1".into(), role: "place".into() },
        ],
    });
    s.validate(&model.ontology, false).unwrap();
    let g = iegraph::graph::encode(&s).unwrap();
    let targets = assign_targets(&g, 3, model.config.query_length, &model.labels).unwrap();
    Example { bundle: Arc::new(provider.embed(&s).unwrap()), sentence: s, targets }
}

/// Worst relative error of the analytic gradient of the full training loss
/// on a 3-token sentence, and the number of scalars checked.
pub fn end_to_end_fd() -> (f64, usize) {
    let config = ParserConfig {
        hidden_size: 4,
        hidden_size_ff: 6,
        hidden_size_anchor: 3,
        hidden_size_edge_label: 3,
        hidden_size_edge_presence: 3,
        attention_heads: 2,
        n_transformer_layers: 1,
        ..Default::default()
    };
    let provider = HashEmbeddings::new(4, 2, 5);
    let mut model = Model::new(config, Ontology::rich_ere(), 2, 5, 17).unwrap();
    // Nonzero pooling parameters so their gradients are exercised off the symmetric point.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (_, p) in model.params.iter_mut() {
        if p.value.iter().all(|&x| x == 0.0) {
            p.value.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
    }
    let ex = three_token_example(&model, &provider);
    let analytic = {
        let mut tape = iegraph::nn::Tape::new(&model.params);
        let (loss, _) = forward_example(&model, &mut tape, &ex, false, None).unwrap();
        tape.backward(loss)
    };
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    let eval = |model: &Model| {
        let mut tape = iegraph::nn::Tape::new(&model.params);
        let (loss, _) = forward_example(model, &mut tape, &ex, false, None).unwrap();
        tape.scalar(loss)
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for id in ids {
        for k in 0..model.params.value(id).len() {
            let orig = model.params.value(id).as_slice().unwrap()[k];
            model.params.value_mut(id).as_slice_mut().unwrap()[k] = orig + h;
            let up = eval(&model);
            model.params.value_mut(id).as_slice_mut().unwrap()[k] = orig - h;
            let down = eval(&model);
            model.params.value_mut(id).as_slice_mut().unwrap()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let exact = analytic.get(id).map_or(0.0, |g| g.as_slice().unwrap()[k]);
            worst = worst.max((numeric - exact).abs() / (numeric.abs() + exact.abs()).max(1e-6));
            checked += 1;
        }
    }
    (worst, checked)
}
