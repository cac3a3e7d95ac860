//! Query-based graph parser: token embeddings → queries → nodes with anchors
//! → labelled edges, followed by constrained decoding into an [`IEGraph`].

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Ontology, Sentence, GENERIC_ENTITY_LABEL};
use crate::embed::EmbeddingBundle;
use crate::graph::{GraphEdge, GraphNode, IEGraph, NodeKind, TRIGGER_LABEL};
use crate::nn::layers::{Biaffine, Fnn, Linear, Noise, Pooler, TransformerLayer};
use crate::nn::ops::sigmoid;
use crate::nn::{ParamGroup, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("sentence {sentence}: embeddings cover {found} tokens, sentence has {expected}")]
    Alignment { sentence: String, expected: usize, found: usize },
    #[error("sentence {sentence}: embedding has {found:?} (layers, dim), model expects {expected:?}")]
    EmbeddingShape { sentence: String, expected: (usize, usize), found: (usize, usize) },
    #[error("sentence {sentence}: token {token} has no subwords")]
    EmptyToken { sentence: String, token: usize },
    #[error("invalid parser config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParserConfig {
    pub query_length: usize,
    pub n_transformer_layers: usize,
    /// Width of queries and of the transformer over them.
    pub hidden_size: usize,
    pub attention_heads: usize,
    pub hidden_size_ff: usize,
    pub hidden_size_anchor: usize,
    pub hidden_size_edge_label: usize,
    pub hidden_size_edge_presence: usize,
    pub dropout_transformer: f64,
    pub dropout_transformer_attention: f64,
    pub anchor_threshold: f64,
    pub edge_threshold: f64,
    pub positional_encoding: bool,
    /// Nonlinearity of every feed-forward block. Only "gelu" is implemented.
    pub activation: String,
    /// Events-only model: entity nodes are untyped and relations are not predicted.
    pub generic_entities: bool,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            query_length: 2,
            n_transformer_layers: 3,
            hidden_size: 256,
            attention_heads: 4,
            hidden_size_ff: 512,
            hidden_size_anchor: 256,
            hidden_size_edge_label: 256,
            hidden_size_edge_presence: 256,
            dropout_transformer: 0.25,
            dropout_transformer_attention: 0.1,
            anchor_threshold: 0.5,
            edge_threshold: 0.5,
            positional_encoding: true,
            activation: "gelu".into(),
            generic_entities: false,
        }
    }
}

impl ParserConfig {
    pub fn validate(&self) -> Result<(), ParseError> {
        let err = |m: &str| Err(ParseError::Config(m.to_string()));
        let sizes = [
            self.query_length,
            self.n_transformer_layers,
            self.hidden_size,
            self.attention_heads,
            self.hidden_size_ff,
            self.hidden_size_anchor,
            self.hidden_size_edge_label,
            self.hidden_size_edge_presence,
        ];
        if sizes.contains(&0) {
            return err("sizes must be positive");
        }
        if self.hidden_size % self.attention_heads != 0 {
            return err("hidden_size must be a multiple of attention_heads");
        }
        for t in [self.anchor_threshold, self.edge_threshold] {
            if !(t > 0.0 && t < 1.0) {
                return err("thresholds must lie in (0, 1)");
            }
        }
        for p in [self.dropout_transformer, self.dropout_transformer_attention] {
            if !(0.0..1.0).contains(&p) {
                return err("dropout must lie in [0, 1)");
            }
        }
        if self.activation != "gelu" {
            return err("activation must be \"gelu\"");
        }
        Ok(())
    }
}

/// Node classes and edge labels of a model.
///
/// Node classes: `0` null, `1` trigger, then entity types (or the single
/// generic entity label). Edge labels: event types, then roles, then
/// relation types.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpace {
    pub node_classes: Vec<String>,
    pub edge_labels: Vec<String>,
    pub events: std::ops::Range<usize>,
    pub roles: std::ops::Range<usize>,
    pub relations: std::ops::Range<usize>,
    pub generic_entities: bool,
}

pub const NULL_CLASS: usize = 0;
pub const TRIGGER_CLASS: usize = 1;

impl LabelSpace {
    pub fn new(ontology: &Ontology, generic_entities: bool) -> Self {
        let mut node_classes = vec!["null".to_string(), TRIGGER_LABEL.to_string()];
        if generic_entities {
            node_classes.push(GENERIC_ENTITY_LABEL.to_string());
        } else {
            node_classes.extend(ontology.entity_types.iter().cloned());
        }
        let mut edge_labels = ontology.event_types.clone();
        let ne = edge_labels.len();
        edge_labels.extend(ontology.argument_roles.iter().cloned());
        let nr = edge_labels.len();
        if !generic_entities {
            edge_labels.extend(ontology.relation_types.iter().cloned());
        }
        let nl = edge_labels.len();
        Self { node_classes, edge_labels, events: 0..ne, roles: ne..nr, relations: nr..nl, generic_entities }
    }

    pub fn node_class(&self, node: &GraphNode) -> Option<usize> {
        match node.kind {
            NodeKind::Root => None,
            NodeKind::Trigger => Some(TRIGGER_CLASS),
            NodeKind::Entity => {
                let label = node.label.as_deref()?;
                self.node_classes.iter().skip(2).position(|c| c == label).map(|i| i + 2)
            }
        }
    }

    /// Index of `label` within the range allowed for the edge shape `src → dst`.
    pub fn edge_label(&self, src: NodeKind, dst: NodeKind, label: &str) -> Option<usize> {
        let range = self.edge_range(src, dst)?;
        range.clone().find(|&i| self.edge_labels[i] == label)
    }

    /// Labels allowed on an edge shape; `None` for shapes that never carry edges.
    pub fn edge_range(&self, src: NodeKind, dst: NodeKind) -> Option<std::ops::Range<usize>> {
        let range = match (src, dst) {
            (NodeKind::Root, NodeKind::Trigger) => self.events.clone(),
            (NodeKind::Trigger, NodeKind::Entity) => self.roles.clone(),
            (NodeKind::Entity, NodeKind::Entity) => self.relations.clone(),
            _ => return None,
        };
        (!range.is_empty()).then_some(range)
    }
}

/// Raw scores for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParserOutput {
    /// Q × C
    pub node_label_logits: Array2<f64>,
    /// Q × T
    pub anchor_logits: Array2<f64>,
    /// N × N, node 0 is the root.
    pub edge_presence_logits: Array2<f64>,
    /// (N·N) × R, row `i·N + j` for the edge `i → j`.
    pub edge_label_logits: Array2<f64>,
    /// Query index of node `i + 1`.
    pub query_to_node: Vec<usize>,
}

impl ParserOutput {
    pub fn n_nodes(&self) -> usize {
        self.query_to_node.len() + 1
    }
}

fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in row.into_iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Turns scores into a graph that always satisfies the graph invariants:
/// non-null queries with a non-empty anchor become nodes, edges need a
/// presence probability above the threshold and take the best label allowed
/// by their endpoint kinds, and triggers without a root edge are dropped.
pub fn decode_predictions(
    sentence_id: &str,
    output: &ParserOutput,
    labels: &LabelSpace,
    config: &ParserConfig,
) -> IEGraph {
    let n = output.n_nodes();
    // Candidate nodes indexed like the edge matrices (0 = root).
    let mut candidates: Vec<Option<GraphNode>> = vec![Some(GraphNode::root())];
    for &q in &output.query_to_node {
        let class = argmax(output.node_label_logits.row(q).iter().copied());
        let anchor: Vec<usize> = output
            .anchor_logits
            .row(q)
            .iter()
            .enumerate()
            .filter(|(_, &z)| sigmoid(z) > config.anchor_threshold)
            .map(|(t, _)| t)
            .collect();
        let node = (class != NULL_CLASS && !anchor.is_empty()).then(|| GraphNode {
            id: 0,
            kind: if class == TRIGGER_CLASS { NodeKind::Trigger } else { NodeKind::Entity },
            label: Some(labels.node_classes[class].clone()),
            anchor,
        });
        candidates.push(node);
    }

    let kind = |i: usize, c: &[Option<GraphNode>]| c[i].as_ref().map(|n| n.kind);
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    let mut has_root_edge = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (Some(src), Some(dst)) = (kind(i, &candidates), kind(j, &candidates)) else { continue };
            if sigmoid(output.edge_presence_logits[[i, j]]) <= config.edge_threshold {
                continue;
            }
            let Some(range) = labels.edge_range(src, dst) else { continue };
            let row = output.edge_label_logits.row(i * n + j);
            let label = range.start + argmax(range.clone().map(|r| row[r]));
            if src == NodeKind::Root {
                has_root_edge[j] = true;
            }
            edges.push((i, j, label));
        }
    }
    for (j, c) in candidates.iter_mut().enumerate() {
        if c.as_ref().is_some_and(|n| n.kind == NodeKind::Trigger) && !has_root_edge[j] {
            *c = None;
        }
    }
    edges.retain(|&(i, j, _)| candidates[i].is_some() && candidates[j].is_some());
    if labels.generic_entities {
        let fillers: std::collections::HashSet<usize> = edges
            .iter()
            .filter(|&&(i, _, _)| kind(i, &candidates) == Some(NodeKind::Trigger))
            .map(|&(_, j, _)| j)
            .collect();
        for (j, c) in candidates.iter_mut().enumerate() {
            if c.as_ref().is_some_and(|n| n.kind == NodeKind::Entity) && !fillers.contains(&j) {
                *c = None;
            }
        }
    }

    // Canonical node order; triggers with equal anchors sort by event type.
    let event_type = |j: usize| {
        edges
            .iter()
            .find(|&&(i, d, _)| i == 0 && d == j)
            .map(|&(_, _, l)| labels.edge_labels[l].as_str())
            .unwrap_or("")
    };
    let mut order: Vec<usize> = (1..n).filter(|&j| candidates[j].is_some()).collect();
    order.sort_by_key(|&j| {
        let node = candidates[j].as_ref().unwrap();
        (
            node.anchor[0],
            *node.anchor.last().unwrap(),
            node.kind,
            node.label.clone().unwrap_or_default(),
            event_type(j),
        )
    });
    let mut remap = vec![usize::MAX; n];
    remap[0] = 0;
    let mut nodes = vec![GraphNode::root()];
    for j in order {
        remap[j] = nodes.len();
        let mut node = candidates[j].clone().unwrap();
        node.id = nodes.len();
        nodes.push(node);
    }
    let mut out_edges: Vec<GraphEdge> = edges
        .into_iter()
        .map(|(i, j, l)| GraphEdge { src: remap[i], dst: remap[j], label: labels.edge_labels[l].clone() })
        .collect();
    out_edges.sort_by_key(|e| (e.src, e.dst));
    IEGraph { sentence_id: sentence_id.to_string(), reduced: labels.generic_entities, nodes, edges: out_edges }
}

#[derive(Debug, Clone)]
pub struct Modules {
    pub pooler: Pooler,
    pub query: Linear,
    pub encoder: Vec<TransformerLayer>,
    pub node_hidden: Fnn,
    pub node_out: Linear,
    pub anchor_query: Fnn,
    pub anchor_token: Fnn,
    pub anchor: Biaffine,
    pub root: ParamId,
    pub presence_head: Fnn,
    pub presence_dep: Fnn,
    pub presence: Biaffine,
    pub label_head: Fnn,
    pub label_dep: Fnn,
    pub label: Biaffine,
}

/// Node-level tape values for one sentence.
#[derive(Debug, Clone, Copy)]
pub struct NodeVars {
    /// T × D pooled token embeddings.
    pub e: Var,
    /// Q × H encoded queries.
    pub h: Var,
    /// Q × C
    pub labels: Var,
    /// Q × T
    pub anchors: Var,
}

/// Edge tape values over `[root; selected queries]`.
#[derive(Debug, Clone, Copy)]
pub struct EdgeVars {
    /// N × N
    pub presence: Var,
    /// (N·N) × R
    pub labels: Var,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ParserConfig,
    pub ontology: Ontology,
    pub labels: LabelSpace,
    pub embedding_layers: usize,
    pub embedding_dim: usize,
    pub params: ParamStore,
    pub modules: Modules,
}

/// Sinusoidal position table, `rows × dim`.
pub fn positional_encoding(rows: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, dim), |(p, i)| {
        let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = p as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl Model {
    pub fn new(
        config: ParserConfig,
        ontology: Ontology,
        embedding_layers: usize,
        embedding_dim: usize,
        seed: u64,
    ) -> Result<Self, ParseError> {
        config.validate()?;
        if embedding_layers == 0 || embedding_dim == 0 {
            return Err(ParseError::Config("embedding layers and dim must be positive".into()));
        }
        let labels = LabelSpace::new(&ontology, config.generic_entities);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = &config;
        let (d, h) = (embedding_dim, c.hidden_size);
        let pooler = Pooler::new(&mut p, d, embedding_layers);
        let query = Linear::new(&mut p, "query", ParamGroup::Decoder, d, c.query_length * h, &mut rng);
        let encoder = (0..c.n_transformer_layers)
            .map(|i| {
                TransformerLayer::new(
                    &mut p,
                    &format!("encoder.{i}"),
                    h,
                    c.hidden_size_ff,
                    c.attention_heads,
                    c.dropout_transformer,
                    c.dropout_transformer_attention,
                    &mut rng,
                )
            })
            .collect();
        let node_hidden = Fnn::new(&mut p, "node.hidden", h, h, &mut rng);
        let node_out = Linear::new(&mut p, "node.out", ParamGroup::Decoder, h, labels.node_classes.len(), &mut rng);
        let anchor_query = Fnn::new(&mut p, "anchor.query", h, c.hidden_size_anchor, &mut rng);
        let anchor_token = Fnn::new(&mut p, "anchor.token", d, c.hidden_size_anchor, &mut rng);
        let anchor = Biaffine::new(&mut p, "anchor.biaffine", c.hidden_size_anchor, c.hidden_size_anchor, 1, &mut rng);
        let root = p.normal("edge.root", ParamGroup::Decoder, (1, h), 1.0, &mut rng);
        let ep = c.hidden_size_edge_presence;
        let presence_head = Fnn::new(&mut p, "edge.presence.head", h, ep, &mut rng);
        let presence_dep = Fnn::new(&mut p, "edge.presence.dep", h, ep, &mut rng);
        let presence = Biaffine::new(&mut p, "edge.presence.biaffine", ep, ep, 1, &mut rng);
        let el = c.hidden_size_edge_label;
        let label_head = Fnn::new(&mut p, "edge.label.head", h, el, &mut rng);
        let label_dep = Fnn::new(&mut p, "edge.label.dep", h, el, &mut rng);
        let label = Biaffine::new(&mut p, "edge.label.biaffine", el, el, labels.edge_labels.len().max(1), &mut rng);
        let modules = Modules {
            pooler,
            query,
            encoder,
            node_hidden,
            node_out,
            anchor_query,
            anchor_token,
            anchor,
            root,
            presence_head,
            presence_dep,
            presence,
            label_head,
            label_dep,
            label,
        };
        Ok(Self { config, ontology, labels, embedding_layers, embedding_dim, params: p, modules })
    }

    pub fn check_bundle(&self, sentence: &Sentence, bundle: &EmbeddingBundle) -> Result<(), ParseError> {
        if bundle.tokens() != sentence.tokens.len() {
            return Err(ParseError::Alignment {
                sentence: sentence.id.clone(),
                expected: sentence.tokens.len(),
                found: bundle.tokens(),
            });
        }
        let found = (bundle.layers(), bundle.dim());
        if found != (self.embedding_layers, self.embedding_dim) {
            return Err(ParseError::EmbeddingShape {
                sentence: sentence.id.clone(),
                expected: (self.embedding_layers, self.embedding_dim),
                found,
            });
        }
        Ok(())
    }

    /// `T × D` token embeddings from the subword bundle.
    pub fn pool(&self, tape: &mut Tape, bundle: Arc<EmbeddingBundle>) -> Result<Var, usize> {
        let att = tape.param(self.modules.pooler.attention);
        let w = tape.param(self.modules.pooler.layer_weights);
        tape.pool(bundle, att, w).map_err(|e| e.token)
    }

    /// `query_length` queries per token, ordered token-major.
    pub fn make_queries(&self, tape: &mut Tape, e: Var) -> Var {
        let t = tape.shape(e).0;
        let ql = self.config.query_length;
        let wide = self.modules.query.forward(tape, e);
        tape.reshape(wide, t * ql, self.config.hidden_size)
    }

    pub fn encode_queries(&self, tape: &mut Tape, q: Var, noise: &mut Noise) -> Var {
        let mut h = q;
        if self.config.positional_encoding {
            let (rows, dim) = tape.shape(q);
            let pe = tape.constant(positional_encoding(rows, dim));
            h = tape.add(h, pe);
        }
        for layer in &self.modules.encoder {
            h = layer.forward(tape, h, noise);
        }
        h
    }

    /// Node class logits `Q × C` and anchor logits `Q × T`.
    pub fn predict_nodes(&self, tape: &mut Tape, h: Var, e: Var) -> (Var, Var) {
        let m = &self.modules;
        let hidden = m.node_hidden.forward(tape, h);
        let labels = m.node_out.forward(tape, hidden);
        let hq = m.anchor_query.forward(tape, h);
        let he = m.anchor_token.forward(tape, e);
        let flat = m.anchor.forward(tape, hq, he);
        let (q, t) = (tape.shape(h).0, tape.shape(e).0);
        let anchors = tape.reshape(flat, q, t);
        (labels, anchors)
    }

    /// Edge scores among the root and the queries in `selected`.
    pub fn predict_edges(&self, tape: &mut Tape, h: Var, selected: &[usize]) -> EdgeVars {
        let m = &self.modules;
        let root = tape.param(m.root);
        let h_prime = if selected.is_empty() {
            root
        } else {
            let rows = tape.gather_rows(h, selected);
            tape.concat_rows(&[root, rows])
        };
        let n = selected.len() + 1;
        let p1 = m.presence_head.forward(tape, h_prime);
        let p2 = m.presence_dep.forward(tape, h_prime);
        let flat = m.presence.forward(tape, p1, p2);
        let presence = tape.reshape(flat, n, n);
        let l1 = m.label_head.forward(tape, h_prime);
        let l2 = m.label_dep.forward(tape, h_prime);
        let labels = m.label.forward(tape, l1, l2);
        EdgeVars { presence, labels }
    }

    /// Pooling, queries, encoder and node heads.
    pub fn forward_nodes(
        &self,
        tape: &mut Tape,
        sentence: &Sentence,
        bundle: Arc<EmbeddingBundle>,
        noise: &mut Noise,
    ) -> Result<NodeVars, ParseError> {
        self.check_bundle(sentence, &bundle)?;
        let e = self
            .pool(tape, bundle)
            .map_err(|token| ParseError::EmptyToken { sentence: sentence.id.clone(), token })?;
        let q = self.make_queries(tape, e);
        let h = self.encode_queries(tape, q, noise);
        let (labels, anchors) = self.predict_nodes(tape, h, e);
        Ok(NodeVars { e, h, labels, anchors })
    }

    /// Deterministic forward pass with predicted nodes.
    pub fn predict(&self, sentence: &Sentence, bundle: Arc<EmbeddingBundle>) -> Result<ParserOutput, ParseError> {
        let mut tape = Tape::new(&self.params);
        let nodes = self.forward_nodes(&mut tape, sentence, bundle, &mut None)?;
        let node_label_logits = tape.value(nodes.labels).to_owned();
        let query_to_node: Vec<usize> = node_label_logits
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(_, row)| argmax(row.iter().copied()) != NULL_CLASS)
            .map(|(q, _)| q)
            .collect();
        let edges = self.predict_edges(&mut tape, nodes.h, &query_to_node);
        Ok(ParserOutput {
            node_label_logits,
            anchor_logits: tape.value(nodes.anchors).to_owned(),
            edge_presence_logits: tape.value(edges.presence).to_owned(),
            edge_label_logits: tape.value(edges.labels).to_owned(),
            query_to_node,
        })
    }

    pub fn parse(&self, sentence: &Sentence, bundle: Arc<EmbeddingBundle>) -> Result<IEGraph, ParseError> {
        let out = self.predict(sentence, bundle)?;
        Ok(decode_predictions(&sentence.id, &out, &self.labels, &self.config))
    }

    /// Softmax-normalized layer-mixing weights.
    pub fn layer_mix(&self) -> Array1<f64> {
        let w = self.params.value(self.modules.pooler.layer_weights);
        Array1::from(crate::nn::ops::softmax(&w.row(0).to_vec()))
    }
}
