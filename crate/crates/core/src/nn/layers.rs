//! Parameterized building blocks recorded onto a [`Tape`].

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamGroup, ParamId, ParamStore};
use super::tape::{Tape, Var};

/// Training-time randomness; `None` runs the network deterministically.
pub type Noise<'a> = Option<&'a mut ChaCha8Rng>;

/// Inverted dropout. Identity when `rng` is `None` or `p == 0`.
pub fn dropout(tape: &mut Tape, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Var {
    let Some(rng) = rng else { return x };
    if p <= 0.0 {
        return x;
    }
    let keep = 1.0 - p;
    let mask = Array2::from_shape_simple_fn(tape.shape(x), || {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    let m = tape.constant(mask);
    tape.mul(x, m)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, group: ParamGroup, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: store.glorot(format!("{name}.weight"), group, (inputs, outputs), rng),
            bias: store.zeros(format!("{name}.bias"), group, (1, outputs)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w);
        tape.add_row(xw, b)
    }
}

/// Single-layer feed-forward network: `gelu(x·W + b)`.
#[derive(Debug, Clone)]
pub struct Fnn {
    pub linear: Linear,
}

impl Fnn {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self { linear: Linear::new(store, name, ParamGroup::Decoder, inputs, outputs, rng) }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let z = self.linear.forward(tape, x);
        tape.gelu(z)
    }
}

#[derive(Debug, Clone)]
pub struct Biaffine {
    pub u: ParamId,
    pub w: ParamId,
    pub b: ParamId,
    pub channels: usize,
}

impl Biaffine {
    pub fn new(store: &mut ParamStore, name: &str, d1: usize, d2: usize, channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = 1.0 / ((d1 * d2) as f64).sqrt();
        Self {
            u: store.normal(format!("{name}.u"), ParamGroup::Decoder, (d1, channels * d2), std, rng),
            w: store.glorot(format!("{name}.w"), ParamGroup::Decoder, (d1 + d2, channels), rng),
            b: store.zeros(format!("{name}.b"), ParamGroup::Decoder, (1, channels)),
            channels,
        }
    }

    /// Scores for every (row of `x1`, row of `x2`) pair: `(n1·n2) × K`.
    pub fn forward(&self, tape: &mut Tape, x1: Var, x2: Var) -> Var {
        let u = tape.param(self.u);
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.biaffine(x1, x2, u, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), ParamGroup::Decoder, Array2::ones((1, dim))),
            bias: store.zeros(format!("{name}.bias"), ParamGroup::Decoder, (1, dim)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let g = tape.param(self.gain);
        let b = tape.param(self.bias);
        tape.layer_norm(x, g, b, 1e-5)
    }
}

/// Post-norm transformer encoder layer with multi-head self-attention and a
/// GELU feed-forward block.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm_attention: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm_ff: LayerNorm,
    pub heads: usize,
    pub dropout: f64,
    pub attention_dropout: f64,
}

impl TransformerLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        ff_dim: usize,
        heads: usize,
        dropout: f64,
        attention_dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(heads > 0 && dim % heads == 0, "hidden size must divide into heads");
        let g = ParamGroup::Decoder;
        Self {
            query: Linear::new(store, &format!("{name}.attn.q"), g, dim, dim, rng),
            key: Linear::new(store, &format!("{name}.attn.k"), g, dim, dim, rng),
            value: Linear::new(store, &format!("{name}.attn.v"), g, dim, dim, rng),
            output: Linear::new(store, &format!("{name}.attn.out"), g, dim, dim, rng),
            norm_attention: LayerNorm::new(store, &format!("{name}.attn.norm"), dim),
            ff_in: Linear::new(store, &format!("{name}.ff.in"), g, dim, ff_dim, rng),
            ff_out: Linear::new(store, &format!("{name}.ff.out"), g, ff_dim, dim, rng),
            norm_ff: LayerNorm::new(store, &format!("{name}.ff.norm"), dim),
            heads,
            dropout,
            attention_dropout,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, rng: &mut Noise) -> Var {
        let dim = tape.shape(x).1;
        let head_dim = dim / self.heads;
        let q = self.query.forward(tape, x);
        let k = self.key.forward(tape, x);
        let v = self.value.forward(tape, x);
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * head_dim, (h + 1) * head_dim);
            let qh = tape.slice_cols(q, a, b);
            let kh = tape.slice_cols(k, a, b);
            let vh = tape.slice_cols(v, a, b);
            let scores = tape.matmul_t(qh, kh);
            let scores = tape.scale(scores, 1.0 / (head_dim as f64).sqrt());
            let probs = tape.softmax_rows(scores);
            let probs = dropout(tape, probs, self.attention_dropout, rng.as_deref_mut());
            heads.push(tape.matmul(probs, vh));
        }
        let joined = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
        let attended = self.output.forward(tape, joined);
        let attended = dropout(tape, attended, self.dropout, rng.as_deref_mut());
        let x = tape.add(x, attended);
        let x = self.norm_attention.forward(tape, x);

        let hidden = self.ff_in.forward(tape, x);
        let hidden = tape.gelu(hidden);
        let ff = self.ff_out.forward(tape, hidden);
        let ff = dropout(tape, ff, self.dropout, rng.as_deref_mut());
        let x2 = tape.add(x, ff);
        self.norm_ff.forward(tape, x2)
    }
}

/// Learned subword attention vector and layer-mixing weights.
#[derive(Debug, Clone)]
pub struct Pooler {
    pub attention: ParamId,
    pub layer_weights: ParamId,
}

impl Pooler {
    pub fn new(store: &mut ParamStore, dim: usize, layers: usize) -> Self {
        Self {
            attention: store.zeros("pool.attention", ParamGroup::Encoder, (dim, 1)),
            layer_weights: store.zeros("pool.layer_weights", ParamGroup::Encoder, (1, layers)),
        }
    }
}
