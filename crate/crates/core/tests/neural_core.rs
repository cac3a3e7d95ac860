use std::sync::Arc;

use iegraph::embed::EmbeddingBundle;
use iegraph::nn::layers::{Fnn, TransformerLayer};
use iegraph::nn::ops::{self, BiaffineParams};
use iegraph::nn::{ParamGroup, ParamStore, Tape};
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::numeric::*;

#[test]
fn bilinear_zero_and_scalar_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x1 = random((3, 4), &mut rng);
    let x2 = random((2, 5), &mut rng);
    let zero = BiaffineParams::zeros(4, 5, 3);
    let out = ops::bilinear(x1.view(), x2.view(), zero.u.view(), 3).unwrap();
    assert!(out.iter().all(|&x| x == 0.0));

    let a = Array2::from_elem((1, 1), 1.5);
    let b = Array2::from_elem((1, 1), -0.75);
    let u = Array2::from_elem((1, 1), 2.0);
    let out = ops::bilinear(a.view(), b.view(), u.view(), 1).unwrap();
    assert!((out[[0, 0]] - 2.0 * 1.5 * -0.75).abs() < 1e-12);
}

#[test]
fn bilinear_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x1 = random((3, 3), &mut rng);
    let x2 = random((3, 3), &mut rng);
    let mut p = BiaffineParams::zeros(3, 3, 2);
    p.u = random((3, 6), &mut rng);
    let out = ops::bilinear(x1.view(), x2.view(), p.u.view(), 2).unwrap();
    assert!(max_abs_diff(&out, &bilinear_oracle(&x1, &x2, &p)) < 1e-6);
}

#[test]
fn bilinear_rejects_shape_mismatch() {
    let x1 = Array2::zeros((2, 3));
    let x2 = Array2::zeros((2, 4));
    let u = Array2::zeros((3, 3));
    assert!(ops::bilinear(x1.view(), x2.view(), u.view(), 1).is_err());
    let mut p = BiaffineParams::zeros(3, 4, 1);
    p.w = Array2::zeros((6, 1));
    assert!(ops::biaffine(x1.view(), x2.view(), &p).is_err());
}

#[test]
fn biaffine_degenerate_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x1 = random((2, 3), &mut rng);
    let x2 = random((4, 2), &mut rng);
    let mut p = BiaffineParams::zeros(3, 2, 3);
    p.b = random((1, 3), &mut rng);
    let out = ops::biaffine(x1.view(), x2.view(), &p).unwrap();
    for row in out.rows() {
        assert_eq!(row, p.b.row(0));
    }

    let mut q = BiaffineParams::zeros(3, 2, 3);
    q.u = random((3, 6), &mut rng);
    let out = ops::biaffine(x1.view(), x2.view(), &q).unwrap();
    let bil = ops::bilinear(x1.view(), x2.view(), q.u.view(), 3).unwrap();
    assert!(max_abs_diff(&out, &bil) < 1e-12);
}

#[test]
fn biaffine_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let (n1, n2, d1, d2, k) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
        let x1 = random((n1, d1), &mut rng);
        let x2 = random((n2, d2), &mut rng);
        let p = BiaffineParams { u: random((d1, k * d2), &mut rng), w: random((d1 + d2, k), &mut rng), b: random((1, k), &mut rng) };
        let out = ops::biaffine(x1.view(), x2.view(), &p).unwrap();
        assert!(max_abs_diff(&out, &biaffine_oracle(&x1, &x2, &p)) < 1e-6);
    }
}

#[test]
fn biaffine_linear_term_scales_with_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x1 = random((2, 3), &mut rng);
    let x2 = random((2, 3), &mut rng);
    let mut p = BiaffineParams::zeros(3, 3, 2);
    p.w = random((6, 2), &mut rng);
    let alpha = 2.5;
    let base = ops::biaffine(x1.view(), x2.view(), &p).unwrap();
    let scaled = ops::biaffine((&x1 * alpha).view(), x2.view(), &p).unwrap();
    let x2_only = ops::biaffine(Array2::zeros((2, 3)).view(), x2.view(), &p).unwrap();
    // Channel-wise: scaled - x2part == alpha * (base - x2part)
    let lhs = &scaled - &x2_only;
    let rhs = (&base - &x2_only) * alpha;
    assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
}

#[test]
fn pool_identity_single_layer_single_subword() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let b = random_bundle(1, 4, vec![vec![0], vec![1], vec![2]], &mut rng);
    let att = Array1::from_vec(vec![0.3, -0.2, 0.5, 1.0]);
    let (out, _) = ops::pool_forward(&b, att.view(), Array1::from_vec(vec![0.7]).view()).unwrap();
    let expected = b.vectors.index_axis(ndarray::Axis(0), 0).to_owned();
    assert!(max_abs_diff(&out, &expected) < 1e-12);
}

#[test]
fn pool_equal_weights_average_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b = random_bundle(2, 3, vec![vec![0], vec![1]], &mut rng);
    let att = Array1::zeros(3);
    let (out, _) = ops::pool_forward(&b, att.view(), Array1::zeros(2).view()).unwrap();
    let l0 = b.vectors.index_axis(ndarray::Axis(0), 0);
    let l1 = b.vectors.index_axis(ndarray::Axis(0), 1);
    let expected = (&l0 * 0.5) + (&l1 * 0.5);
    assert!(max_abs_diff(&out, &expected) < 1e-12);
}

#[test]
fn pool_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let b = random_bundle(3, 5, vec![vec![0], vec![1, 2], vec![3]], &mut rng);
    let att: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (out, cache) = ops::pool_forward(&b, Array1::from_vec(att.clone()).view(), Array1::from_vec(w.clone()).view()).unwrap();
    assert!(max_abs_diff(&out, &pool_oracle(&b, &att, &w)) < 1e-6);
    let total: f64 = cache.mix.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(cache.mix.iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn pool_rejects_empty_token() {
    let b = EmbeddingBundle { vectors: Array3::zeros((1, 2, 2)), alignment: vec![vec![0, 1], vec![]] };
    let err = ops::pool_forward(&b, Array1::zeros(2).view(), Array1::zeros(1).view()).unwrap_err();
    assert_eq!(err.token, 1);
}

#[test]
fn pool_is_permutation_equivariant_and_padding_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = random_bundle(2, 3, vec![vec![0, 1], vec![2], vec![3, 4, 5]], &mut rng);
    let att = Array1::from_vec(vec![0.4, -0.9, 0.1]);
    let w = Array1::from_vec(vec![0.2, -0.5]);
    let (out, _) = ops::pool_forward(&b, att.view(), w.view()).unwrap();

    // Reverse the token order by relabelling alignments.
    let permuted = EmbeddingBundle { vectors: b.vectors.clone(), alignment: b.alignment.iter().rev().cloned().collect() };
    let (pout, _) = ops::pool_forward(&permuted, att.view(), w.view()).unwrap();
    for t in 0..3 {
        assert!(max_abs_diff(&out.row(t).to_owned().insert_axis(ndarray::Axis(0)), &pout.row(2 - t).to_owned().insert_axis(ndarray::Axis(0))) < 1e-12);
    }

    // Move subwords to new positions; pooled tokens do not change.
    let order = [5usize, 3, 0, 4, 1, 2];
    let mut moved = Array3::zeros(b.vectors.dim());
    for (new, &old) in order.iter().enumerate() {
        moved.slice_mut(ndarray::s![.., new, ..]).assign(&b.vectors.slice(ndarray::s![.., old, ..]));
    }
    let pos = |old: usize| order.iter().position(|&o| o == old).unwrap();
    let alignment = b.alignment.iter().map(|subs| subs.iter().map(|&s| pos(s)).collect()).collect();
    let (mout, _) = ops::pool_forward(&EmbeddingBundle { vectors: moved, alignment }, att.view(), w.view()).unwrap();
    assert!(max_abs_diff(&out, &mout) < 1e-12);
}

#[test]
fn biaffine_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamStore::new();
    let x1 = store.add("x1", ParamGroup::Decoder, random((3, 4), &mut rng));
    let x2 = store.add("x2", ParamGroup::Decoder, random((2, 3), &mut rng));
    let u = store.add("u", ParamGroup::Decoder, random((4, 2 * 3), &mut rng));
    let w = store.add("w", ParamGroup::Decoder, random((7, 2), &mut rng));
    let b = store.add("b", ParamGroup::Decoder, random((1, 2), &mut rng));
    let c = random((6, 2), &mut rng);
    let err = fd_check(&mut store, |t| {
        let vars = [x1, x2, u, w, b].map(|p| t.param(p));
        let out = t.biaffine(vars[0], vars[1], vars[2], vars[3], vars[4]);
        weighted_sum(t, out, c.clone())
    });
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn pool_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bundle = Arc::new(random_bundle(3, 4, vec![vec![0, 1], vec![2], vec![3, 4, 5]], &mut rng));
    let mut store = ParamStore::new();
    let att = store.add("att", ParamGroup::Encoder, random((4, 1), &mut rng));
    let lw = store.add("lw", ParamGroup::Encoder, random((1, 3), &mut rng));
    let c = random((3, 4), &mut rng);
    let err = fd_check(&mut store, |t| {
        let a = t.param(att);
        let w = t.param(lw);
        let out = t.pool(bundle.clone(), a, w).unwrap();
        weighted_sum(t, out, c.clone())
    });
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn fnn_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::new();
    let fnn = Fnn::new(&mut store, "fnn", 6, 4, &mut rng);
    *store.value_mut(fnn.linear.bias) = random((1, 4), &mut rng);
    let x = random((5, 6), &mut rng) * 3.0;
    let mut tape = Tape::new(&store);
    let xv = tape.constant(x.clone());
    let out = fnn.forward(&mut tape, xv);
    let expected = fnn_oracle(&x, store.value(fnn.linear.weight), store.value(fnn.linear.bias));
    assert!(max_abs_diff(&tape.value(out).to_owned(), &expected) < 1e-12);
}

#[test]
fn fnn_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut store = ParamStore::new();
    let x = store.add("x", ParamGroup::Decoder, random((4, 5), &mut rng));
    let fnn = Fnn::new(&mut store, "fnn", 5, 3, &mut rng);
    *store.value_mut(fnn.linear.bias) = random((1, 3), &mut rng);
    let targets = vec![Some(0), Some(2), None, Some(1)];
    let err = fd_check(&mut store, |t| {
        let xv = t.param(x);
        let h = fnn.forward(t, xv);
        t.softmax_ce(h, targets.clone(), 0.25)
    });
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn transformer_and_losses_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::new();
    let x = store.add("x", ParamGroup::Decoder, random((3, 4), &mut rng));
    let layer = TransformerLayer::new(&mut store, "enc", 4, 8, 2, 0.0, 0.0, &mut rng);
    let targets = Array2::from_shape_fn((3, 4), |(i, j)| ((i + j) % 2) as f64);
    let mask = Array2::from_shape_fn((3, 4), |(i, _)| if i == 1 { 0.0 } else { 1.0 });
    let err = fd_check(&mut store, |t| {
        let xv = t.param(x);
        let h = layer.forward(t, xv, &mut None);
        t.bce_logits(h, targets.clone(), mask.clone(), 0.5)
    });
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn structural_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut store = ParamStore::new();
    let a = store.add("a", ParamGroup::Decoder, random((3, 4), &mut rng));
    let b = store.add("b", ParamGroup::Decoder, random((2, 4), &mut rng));
    let c = random((4, 6), &mut rng);
    let err = fd_check(&mut store, |t| {
        let av = t.param(a);
        let bv = t.param(b);
        let rows = t.concat_rows(&[bv, av]);
        let picked = t.gather_rows(rows, &[4, 0, 2, 4]);
        let left = t.slice_cols(picked, 1, 3);
        let sm = t.softmax_rows(picked);
        let cat = t.concat_cols(&[left, sm]);
        let prod = t.matmul_t(cat, cat);
        let scaled = t.scale(prod, 0.3);
        let flat = t.reshape(scaled, 2, 8);
        let g = t.gelu(flat);
        let back = t.reshape(g, 4, 4);
        let two = t.concat_cols(&[back, picked]);
        let two = t.slice_cols(two, 1, 7);
        weighted_sum(t, two, c.clone())
    });
    assert!(err < 1e-4, "relative error {err}");
}
