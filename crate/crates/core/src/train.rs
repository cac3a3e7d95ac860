//! Slot assignment, training loss, optimizer and the epoch loop.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::corpus::{Corpus, Sentence};
use crate::embed::{EmbeddingBundle, EmbeddingError, EmbeddingProvider};
use crate::graph::{self, GraphError, IEGraph};
use crate::nn::{Gradients, ParamGroup, ParamStore, Tape, Var};
use crate::parser::{EdgeVars, LabelSpace, Model, NodeVars, ParseError, ParserConfig, ParserOutput, NULL_CLASS};
use crate::score::{self, ScoreError, ScoreReport};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("sentence {sentence}: {count} nodes share the anchor tokens {anchor:?}, but only {slots} query slots are available")]
    NoFreeSlot { sentence: String, anchor: Vec<usize>, count: usize, slots: usize },
    #[error("sentence {sentence}: gold node {node} has anchor token {token} beyond {tokens} tokens")]
    AnchorOutOfRange { sentence: String, node: usize, token: usize, tokens: usize },
    #[error("sentence {sentence}: label {label:?} is not in the model's label space")]
    UnknownLabel { sentence: String, label: String },
    #[error("corpora use different ontologies ({0} vs {1})")]
    OntologyMismatch(String, String),
    #[error("no training sentences")]
    Empty,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub beta_1: f64,
    pub beta_2: f64,
    pub epsilon: f64,
    pub decoder_learning_rate: f64,
    pub decoder_weight_decay: f64,
    pub encoder_learning_rate: f64,
    pub encoder_weight_decay: f64,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub seed: u64,
    /// Train on events only: gold graphs are reduced before slot assignment.
    pub ablation_no_ent_rel: bool,
    /// Re-slot gold nodes every step by a minimum-cost matching against the
    /// current scores instead of the fixed leftmost-anchor rule.
    pub permutation_matching: bool,
    /// Keep a checkpoint for every epoch besides `last` and `best`.
    pub save_every_epoch: bool,
    pub parser: ParserConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            beta_1: 0.9,
            beta_2: 0.98,
            epsilon: 1e-8,
            decoder_learning_rate: 1.0e-4,
            decoder_weight_decay: 1.2e-6,
            encoder_learning_rate: 4.0e-6,
            encoder_weight_decay: 0.1,
            epochs: 110,
            warmup_steps: 1000,
            seed: 0,
            ablation_no_ent_rel: false,
            permutation_matching: false,
            save_every_epoch: false,
            parser: ParserConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        for b in [self.beta_1, self.beta_2] {
            if !(0.0..1.0).contains(&b) {
                return bad("betas must lie in [0, 1)");
            }
        }
        let rates = [
            self.decoder_learning_rate,
            self.encoder_learning_rate,
            self.decoder_weight_decay,
            self.encoder_weight_decay,
            self.epsilon,
        ];
        if rates.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("learning rates, weight decays and epsilon must be finite and non-negative");
        }
        self.parser.validate().map_err(|e| TrainError::Config(e.to_string()))
    }

    /// Parser config with the ablation flag applied.
    pub fn effective_parser(&self) -> ParserConfig {
        ParserConfig { generic_entities: self.parser.generic_entities || self.ablation_no_ent_rel, ..self.parser.clone() }
    }
}

/// Linear warmup from 0 to `peak`, then cosine decay to 0 at `total` steps.
pub fn learning_rate(step: usize, total: usize, warmup: usize, peak: f64) -> f64 {
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    if total <= warmup {
        return peak;
    }
    let progress = ((step - warmup) as f64 / (total - warmup) as f64).min(1.0);
    peak * 0.5 * (1.0 + (PI * progress).cos())
}

/// Gold targets of one sentence laid out over the model's query slots.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAssignment {
    pub sentence_id: String,
    pub n_tokens: usize,
    pub query_length: usize,
    /// Per query: the gold node (graph id ≥ 1) it must produce.
    pub slots: Vec<Option<usize>>,
    /// Query slot of gold node `i + 1`.
    pub node_queries: Vec<usize>,
    /// Per query: target node class.
    pub node_classes: Vec<usize>,
    /// Q × T, rows of unassigned queries are zero.
    pub anchors: Array2<f64>,
    /// N × N over `[root; gold nodes]`.
    pub presence: Array2<f64>,
    /// `(i, j, label)` for every gold edge.
    pub edges: Vec<(usize, usize, usize)>,
}

impl TargetAssignment {
    pub fn n_nodes(&self) -> usize {
        self.node_queries.len() + 1
    }
}

/// Assigns every gold node to the lowest free slot of its leftmost anchored
/// token, spilling to the next anchored token when those slots are taken.
pub fn assign_targets(
    gold: &IEGraph,
    n_tokens: usize,
    query_length: usize,
    labels: &LabelSpace,
) -> Result<TargetAssignment, TrainError> {
    let sentence = || gold.sentence_id.clone();
    let q = n_tokens * query_length;
    let mut order: Vec<usize> = (1..gold.nodes.len()).collect();
    let key = |i: usize| {
        let n = &gold.nodes[i];
        (n.anchor.first().copied(), n.anchor.last().copied(), n.kind, n.label.clone())
    };
    order.sort_by_key(|&i| key(i));

    let mut slots = vec![None; q];
    let mut node_queries = vec![usize::MAX; gold.nodes.len().saturating_sub(1)];
    for &i in &order {
        let node = &gold.nodes[i];
        if let Some(&t) = node.anchor.iter().find(|&&t| t >= n_tokens) {
            return Err(TrainError::AnchorOutOfRange { sentence: sentence(), node: i, token: t, tokens: n_tokens });
        }
        let free = node
            .anchor
            .iter()
            .flat_map(|&t| (0..query_length).map(move |s| t * query_length + s))
            .find(|&slot| slots[slot].is_none());
        let Some(slot) = free else {
            let count = order.iter().filter(|&&j| gold.nodes[j].anchor.iter().any(|t| node.anchor.contains(t))).count();
            return Err(TrainError::NoFreeSlot {
                sentence: sentence(),
                anchor: node.anchor.clone(),
                count,
                slots: node.anchor.len() * query_length,
            });
        };
        slots[slot] = Some(i);
        node_queries[i - 1] = slot;
    }

    let mut node_classes = vec![NULL_CLASS; q];
    let mut anchors = Array2::zeros((q, n_tokens));
    for (slot, node) in slots.iter().enumerate() {
        if let Some(i) = node {
            let n = &gold.nodes[*i];
            node_classes[slot] = labels.node_class(n).ok_or_else(|| TrainError::UnknownLabel {
                sentence: sentence(),
                label: n.label.clone().unwrap_or_default(),
            })?;
            for &t in &n.anchor {
                anchors[[slot, t]] = 1.0;
            }
        }
    }

    let n = gold.nodes.len();
    let mut presence = Array2::zeros((n, n));
    let mut edges = Vec::with_capacity(gold.edges.len());
    for e in &gold.edges {
        let (src, dst) = (gold.nodes[e.src].kind, gold.nodes[e.dst].kind);
        let label = labels
            .edge_label(src, dst, &e.label)
            .ok_or_else(|| TrainError::UnknownLabel { sentence: sentence(), label: e.label.clone() })?;
        presence[[e.src, e.dst]] = 1.0;
        edges.push((e.src, e.dst, label));
    }
    Ok(TargetAssignment {
        sentence_id: gold.sentence_id.clone(),
        n_tokens,
        query_length,
        slots,
        node_queries,
        node_classes,
        anchors,
        presence,
        edges,
    })
}

/// Cost of a slot outside the node's anchor; beats any sum of allowed costs.
const FORBIDDEN: i64 = 1 << 53;

fn cross_entropy(row: ArrayView1<f64>, target: usize) -> f64 {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln() - row[target]
}

fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

/// Moves the gold nodes of `targets` to the query slots that minimise the
/// node plus anchor loss under the given scores. A node may only take a slot
/// of one of its anchored tokens, as with the fixed rule, whose assignment
/// shows a feasible matching exists. Edge targets are indexed by node and
/// stay as they are.
pub fn match_targets(targets: &TargetAssignment, node_logits: ArrayView2<f64>, anchor_logits: ArrayView2<f64>) -> TargetAssignment {
    let q = targets.slots.len();
    let n = targets.node_queries.len();
    if n == 0 {
        return targets.clone();
    }
    // Same weights as the loss: class term over all queries, anchor term
    // over assigned rows only. A query left empty pays its null cost.
    let (wc, wa) = (1.0 / q as f64, 1.0 / (n * targets.n_tokens) as f64);
    let null: Vec<f64> = (0..q).map(|s| cross_entropy(node_logits.row(s), NULL_CLASS)).collect();
    let ql = targets.query_length;
    let weights = Matrix::from_fn(n, q, |(i, s)| {
        let old = targets.node_queries[i];
        if targets.anchors[[old, s / ql]] == 0.0 {
            return FORBIDDEN;
        }
        let anchor: f64 = anchor_logits.row(s).iter().zip(targets.anchors.row(old)).map(|(&z, &y)| bce(z, y)).sum();
        let cost = wc * (cross_entropy(node_logits.row(s), targets.node_classes[old]) - null[s]) + wa * anchor;
        // integer costs keep the solver exact
        (cost.clamp(-1e3, 1e3) * 1e9).round() as i64
    });
    let (_, assignment) = kuhn_munkres_min(&weights);

    let mut out = TargetAssignment {
        slots: vec![None; q],
        node_queries: assignment.clone(),
        node_classes: vec![NULL_CLASS; q],
        anchors: Array2::zeros(targets.anchors.dim()),
        ..targets.clone()
    };
    for (i, &s) in assignment.iter().enumerate() {
        let old = targets.node_queries[i];
        out.slots[s] = Some(i + 1);
        out.node_classes[s] = targets.node_classes[old];
        out.anchors.row_mut(s).assign(&targets.anchors.row(old));
    }
    out
}

/// Loss parts; each is a mean over its own items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub node: f64,
    pub anchor: f64,
    pub presence: f64,
    pub label: f64,
    pub total: f64,
}

impl std::ops::AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.node += o.node;
        self.anchor += o.anchor;
        self.presence += o.presence;
        self.label += o.label;
        self.total += o.total;
    }
}

impl LossBreakdown {
    pub fn scaled(self, f: f64) -> Self {
        Self {
            node: self.node * f,
            anchor: self.anchor * f,
            presence: self.presence * f,
            label: self.label * f,
            total: self.total * f,
        }
    }
}

/// Records the four loss parts on the tape and returns their sum.
pub fn loss_on_tape(
    tape: &mut Tape,
    node_logits: Var,
    anchor_logits: Var,
    edges: EdgeVars,
    targets: &TargetAssignment,
) -> (Var, LossBreakdown) {
    let q = targets.slots.len();
    let mut parts = Vec::with_capacity(4);
    let mut breakdown = LossBreakdown::default();

    let node = tape.softmax_ce(node_logits, targets.node_classes.iter().map(|&c| Some(c)).collect(), 1.0 / q as f64);
    breakdown.node = tape.scalar(node);
    parts.push(node);

    let assigned = targets.node_queries.len();
    if assigned > 0 {
        let mut mask = Array2::zeros((q, targets.n_tokens));
        for &slot in &targets.node_queries {
            mask.row_mut(slot).fill(1.0);
        }
        let scale = 1.0 / (assigned * targets.n_tokens) as f64;
        let anchor = tape.bce_logits(anchor_logits, targets.anchors.clone(), mask, scale);
        breakdown.anchor = tape.scalar(anchor);
        parts.push(anchor);
    }

    let n = targets.n_nodes();
    if n > 1 {
        let mask = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let presence = tape.bce_logits(edges.presence, targets.presence.clone(), mask, 1.0 / (n * (n - 1)) as f64);
        breakdown.presence = tape.scalar(presence);
        parts.push(presence);
    }

    if !targets.edges.is_empty() {
        let mut rows = vec![None; n * n];
        for &(i, j, l) in &targets.edges {
            rows[i * n + j] = Some(l);
        }
        let label = tape.softmax_ce(edges.labels, rows, 1.0 / targets.edges.len() as f64);
        breakdown.label = tape.scalar(label);
        parts.push(label);
    }

    let mut total = parts[0];
    for &p in &parts[1..] {
        total = tape.add(total, p);
    }
    breakdown.total = tape.scalar(total);
    (total, breakdown)
}

/// Loss of precomputed scores. The edge matrices must cover the gold node
/// set in the order of `targets.node_queries`.
pub fn compute_loss(output: &ParserOutput, targets: &TargetAssignment) -> LossBreakdown {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let nodes = tape.constant(output.node_label_logits.clone());
    let anchors = tape.constant(output.anchor_logits.clone());
    let presence = tape.constant(output.edge_presence_logits.clone());
    let labels = tape.constant(output.edge_label_logits.clone());
    loss_on_tape(&mut tape, nodes, anchors, EdgeVars { presence, labels }, targets).1
}

/// One training example with its embeddings and targets.
#[derive(Debug, Clone)]
pub struct Example {
    pub sentence: Sentence,
    pub bundle: Arc<EmbeddingBundle>,
    pub targets: TargetAssignment,
}

pub fn prepare_examples(
    corpus: &Corpus,
    model: &Model,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Example>, TrainError> {
    corpus
        .sentences
        .par_iter()
        .map(|s| {
            let mut g = graph::encode(s)?;
            if model.labels.generic_entities {
                g = graph::reduce_graph(&g);
            }
            let targets = assign_targets(&g, s.tokens.len(), model.config.query_length, &model.labels)?;
            let bundle = Arc::new(provider.embed(s)?);
            model.check_bundle(s, &bundle)?;
            Ok(Example { sentence: s.clone(), bundle, targets })
        })
        .collect()
}

/// Teacher-forced forward pass: edges are scored over the gold node slots.
/// With `matching` the slots are first re-chosen by [`match_targets`].
pub fn forward_example(
    model: &Model,
    tape: &mut Tape,
    example: &Example,
    matching: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, LossBreakdown), TrainError> {
    let mut noise = rng;
    let NodeVars { h, labels, anchors, .. } =
        model.forward_nodes(tape, &example.sentence, example.bundle.clone(), &mut noise)?;
    let matched;
    let targets = if matching {
        matched = match_targets(&example.targets, tape.value(labels), tape.value(anchors));
        &matched
    } else {
        &example.targets
    };
    let edges = model.predict_edges(tape, h, &targets.node_queries);
    Ok(loss_on_tape(tape, labels, anchors, edges, targets))
}

/// Loss and parameter gradients of one example.
pub fn example_gradients(
    model: &Model,
    example: &Example,
    matching: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(LossBreakdown, Gradients), TrainError> {
    let mut tape = Tape::new(&model.params);
    let (loss, parts) = forward_example(model, &mut tape, example, matching, rng)?;
    Ok((parts, tape.backward(loss)))
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta_1: f64,
    pub beta_2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

/// Learning rate and weight decay of one parameter group at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRate {
    pub lr: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(params: &ParamStore, beta_1: f64, beta_2: f64, epsilon: f64) -> Self {
        let zeros = || params.iter().map(|(_, p)| Array2::zeros(p.value.dim())).collect();
        Self { beta_1, beta_2, epsilon, step: 0, m: zeros(), v: zeros() }
    }

    /// One update with decoupled weight decay. Parameters without a gradient
    /// are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, rate: impl Fn(ParamGroup) -> GroupRate) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta_1.powi(t);
        let c2 = 1.0 - self.beta_2.powi(t);
        for (id, p) in params.iter_mut() {
            let GroupRate { lr, weight_decay } = rate(p.group);
            let i = id.index();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let (b1, b2, eps) = (self.beta_1, self.beta_2, self.epsilon);
            match grads.get(id) {
                Some(g) => {
                    ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| *m = b1 * *m + (1.0 - b1) * g);
                    ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
                }
                None => {
                    m.mapv_inplace(|x| b1 * x);
                    v.mapv_inplace(|x| b2 * x);
                }
            }
            ndarray::Zip::from(&mut p.value).and(&*m).and(&*v).for_each(|w, &m, &v| {
                *w -= lr * weight_decay * *w;
                *w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: usize,
    pub loss: LossBreakdown,
    pub decoder_lr: f64,
    pub encoder_lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<ScoreReport>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub best: Model,
    pub best_epoch: usize,
    pub logs: Vec<EpochLog>,
    /// Mean loss of the first optimizer step.
    pub first_step_loss: f64,
}

/// Where to write checkpoints and the epoch log.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn log_path(&self) -> PathBuf {
        self.root.join("train_log.jsonl")
    }
}

/// Concatenates corpora that share an ontology (multilingual training).
pub fn concat_corpora(corpora: &[Corpus]) -> Result<Corpus, TrainError> {
    let first = corpora.first().ok_or(TrainError::Empty)?;
    let mut out = first.clone();
    for c in &corpora[1..] {
        if c.ontology != first.ontology {
            return Err(TrainError::OntologyMismatch(first.ontology.name.clone(), c.ontology.name.clone()));
        }
        out.sentences.extend(c.sentences.iter().cloned());
    }
    Ok(out)
}

fn derive_rng(seed: u64, step: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 20) ^ index as u64);
    rng
}

/// Predicts annotations for every sentence of a corpus.
pub fn predict_corpus(model: &Model, corpus: &Corpus, provider: &dyn EmbeddingProvider) -> Result<Corpus, TrainError> {
    let sentences = corpus
        .sentences
        .par_iter()
        .map(|s| -> Result<Sentence, TrainError> {
            let bundle = Arc::new(provider.embed(s)?);
            let g = model.parse(s, bundle)?;
            let ann = graph::decode(&g, &model.ontology, s.tokens.len())?;
            Ok(graph::apply_annotations(s, ann))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = corpus.with_sentences(sentences);
    out.ontology = model.ontology.clone();
    out.events_only = model.labels.generic_entities;
    Ok(out)
}

/// Mean loss over examples without dropout.
pub fn evaluate_loss(model: &Model, examples: &[Example]) -> Result<LossBreakdown, TrainError> {
    let parts = examples
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new(&model.params);
            forward_example(model, &mut tape, ex, false, None).map(|(_, p)| p)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = LossBreakdown::default();
    for p in parts {
        total += p;
    }
    Ok(total.scaled(1.0 / examples.len().max(1) as f64))
}

/// Trains a fresh model. With a dev corpus the best epoch is chosen by dev
/// Arg-C F1; otherwise the last epoch is the best.
pub fn train(
    config: &TrainConfig,
    corpora: &[Corpus],
    dev: Option<&Corpus>,
    provider: &dyn EmbeddingProvider,
    output: Option<&OutputDir>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let corpus = concat_corpora(corpora)?;
    if corpus.sentences.is_empty() {
        return Err(TrainError::Empty);
    }
    if let Some(d) = dev {
        if d.ontology != corpus.ontology {
            return Err(TrainError::OntologyMismatch(corpus.ontology.name.clone(), d.ontology.name.clone()));
        }
    }
    let model = Model::new(
        config.effective_parser(),
        corpus.ontology.clone(),
        provider.layers(),
        provider.dim(),
        config.seed,
    )?;
    train_model(config, model, &corpus, dev, provider, output)
}

/// Trains an existing model in place.
pub fn train_model(
    config: &TrainConfig,
    mut model: Model,
    corpus: &Corpus,
    dev: Option<&Corpus>,
    provider: &dyn EmbeddingProvider,
    output: Option<&OutputDir>,
) -> Result<TrainOutcome, TrainError> {
    let examples = prepare_examples(corpus, &model, provider)?;
    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut optimizer = AdamW::new(&model.params, config.beta_1, config.beta_2, config.epsilon);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED);
    let provenance = provider.provenance();
    if let Some(out) = output {
        std::fs::create_dir_all(&out.root).map_err(|source| TrainError::Io { path: out.root.clone(), source })?;
        crate::io::write_atomic(&out.log_path(), b"")
            .map_err(|source| TrainError::Io { path: out.log_path(), source })?;
    }

    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut first_step_loss = f64::NAN;
    let mut step = 0;
    let mut log_text = String::new();
    for epoch in 1..=config.epochs {
        let started = std::time::Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = LossBreakdown::default();
        let (mut dec_lr, mut enc_lr) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let results = batch
                .par_iter()
                .enumerate()
                .map(|(k, &i)| {
                    let mut rng = derive_rng(config.seed, step, k);
                    example_gradients(&model, &examples[i], config.permutation_matching, Some(&mut rng))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut grads = Gradients::zeros_like(&model.params);
            let mut batch_loss = LossBreakdown::default();
            for (parts, g) in results {
                batch_loss += parts;
                grads.merge(g);
            }
            let inv = 1.0 / batch.len() as f64;
            grads.scale(inv);
            if step == 1 {
                first_step_loss = batch_loss.total * inv;
            }
            epoch_loss += batch_loss;
            dec_lr = learning_rate(step, total_steps, config.warmup_steps, config.decoder_learning_rate);
            enc_lr = learning_rate(step, total_steps, config.warmup_steps, config.encoder_learning_rate);
            optimizer.step(&mut model.params, &grads, |g| match g {
                ParamGroup::Decoder => GroupRate { lr: dec_lr, weight_decay: config.decoder_weight_decay },
                ParamGroup::Encoder => GroupRate { lr: enc_lr, weight_decay: config.encoder_weight_decay },
            });
        }
        let loss = epoch_loss.scaled(1.0 / examples.len() as f64);
        let dev_report = match dev {
            Some(d) => Some(score::score(&predict_corpus(&model, d, provider)?, d)?),
            None => None,
        };
        let entry = EpochLog {
            epoch,
            step,
            loss,
            decoder_lr: dec_lr,
            encoder_lr: enc_lr,
            dev: dev_report,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (node {:.4} anchor {:.4} presence {:.4} label {:.4}){}",
            loss.total,
            loss.node,
            loss.anchor,
            loss.presence,
            loss.label,
            dev_report.map(|r| format!(" dev Arg-C {:.1}", 100.0 * r.arg_c.f1)).unwrap_or_default()
        );
        let selection = dev_report.map_or(epoch as f64, |r| r.arg_c.f1);
        let improved = best.as_ref().is_none_or(|(s, _, _)| selection > *s);
        if improved {
            best = Some((selection, epoch, model.clone()));
        }
        if let Some(out) = output {
            log_text.push_str(&serde_json::to_string(&entry).expect("log serializes"));
            log_text.push('\n');
            crate::io::write_atomic(&out.log_path(), log_text.as_bytes())
                .map_err(|source| TrainError::Io { path: out.log_path(), source })?;
            let meta = checkpoint::Meta::new(config, &provenance, epoch, dev_report);
            checkpoint::save(&model, &meta, &out.root.join("last"))?;
            if improved {
                checkpoint::save(&model, &meta, &out.root.join("best"))?;
            }
            if config.save_every_epoch {
                checkpoint::save(&model, &meta, &out.root.join(format!("epoch-{epoch:04}")))?;
            }
        }
        logs.push(entry);
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best: best_model, best_epoch, logs, first_step_loss })
}

/// Ids of sentences the slot rule cannot place, with the reason.
pub fn unassignable(corpus: &Corpus, query_length: usize, generic_entities: bool) -> HashMap<String, String> {
    let labels = LabelSpace::new(&corpus.ontology, generic_entities);
    corpus
        .sentences
        .iter()
        .filter_map(|s| {
            let g = graph::encode(s).ok()?;
            let g = if generic_entities { graph::reduce_graph(&g) } else { g };
            assign_targets(&g, s.tokens.len(), query_length, &labels).err().map(|e| (s.id.clone(), e.to_string()))
        })
        .collect()
}
