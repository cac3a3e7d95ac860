//! Anchored information graphs.
//!
//! A sentence's entities, relations and events become a single graph: a root
//! node, one `trigger` node per event mention, one node per entity mention.
//! Root→trigger edges carry the event type, trigger→entity edges the argument
//! role and entity→entity edges the relation type. Two annotations over the
//! same tokens always become two nodes, so double-tagged triggers and nested
//! mentions survive the conversion.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    Argument, Corpus, CorpusError, EntityMention, EventMention, Lang, Ontology, RelationMention,
    Sentence, Span, SpanVariant, SCHEMA_VERSION, GENERIC_ENTITY_LABEL,
};
use crate::corpus::schema::{tokens_from_records, tokens_to_records};
use crate::corpus::TokenRecord;

pub const TRIGGER_LABEL: &str = "trigger";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    Trigger,
    Entity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Sorted, duplicate-free token indices.
    #[serde(default)]
    pub anchor: Vec<usize>,
}

impl GraphNode {
    pub fn root() -> Self {
        Self { id: 0, kind: NodeKind::Root, label: None, anchor: Vec::new() }
    }

    /// Span covering the anchor, `[min, max + 1)`.
    pub fn span(&self) -> Option<Span> {
        Some(Span::new(*self.anchor.first()?, *self.anchor.last()? + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IEGraph {
    pub sentence_id: String,
    /// Entity typing and relations removed (events-only graph).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reduced: bool,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl IEGraph {
    pub fn root_only(sentence_id: impl Into<String>) -> Self {
        Self {
            sentence_id: sentence_id.into(),
            reduced: false,
            nodes: vec![GraphNode::root()],
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: usize) -> Option<&GraphNode> {
        self.nodes.get(id)
    }
}

/// The entity, relation and event lists of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Annotations {
    pub entities: Vec<EntityMention>,
    pub relations: Vec<RelationMention>,
    pub events: Vec<EventMention>,
}

impl Annotations {
    pub fn of(sentence: &Sentence) -> Self {
        Self {
            entities: sentence.entities.clone(),
            relations: sentence.relations.clone(),
            events: sentence.events.clone(),
        }
    }

    /// Stable-sorts every list by surface position and label, renames ids to
    /// `E<n>`/`R<n>`/`V<n>`, and reduces entities to their effective span.
    pub fn canonical(&self) -> Self {
        let mut ent_order: Vec<usize> = (0..self.entities.len()).collect();
        ent_order.sort_by(|&a, &b| {
            let (x, y) = (&self.entities[a], &self.entities[b]);
            (x.span, &x.entity_type).cmp(&(y.span, &y.entity_type))
        });
        let mut rename: HashMap<&str, usize> = HashMap::new();
        let entities: Vec<EntityMention> = ent_order
            .iter()
            .enumerate()
            .map(|(new, &old)| {
                let e = &self.entities[old];
                rename.insert(e.id.as_str(), new);
                EntityMention::new(format!("E{new}"), e.entity_type.clone(), e.span)
            })
            .collect();
        let idx = |id: &str| rename.get(id).copied().unwrap_or(usize::MAX);

        let mut relations: Vec<(usize, usize, String)> = self
            .relations
            .iter()
            .map(|r| (idx(&r.arg1), idx(&r.arg2), r.relation_type.clone()))
            .collect();
        relations.sort();
        let relations = relations
            .into_iter()
            .enumerate()
            .map(|(i, (a, b, t))| RelationMention {
                id: format!("R{i}"),
                relation_type: t,
                arg1: format!("E{a}"),
                arg2: format!("E{b}"),
            })
            .collect();

        let mut events: Vec<&EventMention> = self.events.iter().collect();
        events.sort_by(|x, y| (x.trigger_span, &x.event_type).cmp(&(y.trigger_span, &y.event_type)));
        let events = events
            .into_iter()
            .enumerate()
            .map(|(i, ev)| {
                let mut args: Vec<(usize, String)> =
                    ev.arguments.iter().map(|a| (idx(&a.entity_id), a.role.clone())).collect();
                args.sort();
                EventMention {
                    id: format!("V{i}"),
                    event_type: ev.event_type.clone(),
                    trigger_span: ev.trigger_span,
                    arguments: args
                        .into_iter()
                        .map(|(e, role)| Argument { entity_id: format!("E{e}"), role })
                        .collect(),
                }
            })
            .collect();
        Annotations { entities, relations, events }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    RootCount,
    RootPosition,
    NodeId,
    Anchor,
    NodeLabel,
    DanglingEdge,
    EdgeShape,
    EdgeLabel,
    DuplicateEdge,
    TriggerRootEdges,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub node: Option<usize>,
    pub edge: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.node, self.edge) {
            (_, Some(e)) => write!(f, "edge {e}: {}", self.message),
            (Some(n), None) => write!(f, "node {n}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("sentence {sentence}: invalid graph: {}", join_violations(.violations))]
    Invalid {
        sentence: String,
        violations: Vec<Violation>,
    },
    #[error("sentence {sentence}: {message}")]
    Internal { sentence: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("malformed graph JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

enum Pending<'a> {
    Trigger(&'a EventMention),
    Entity(&'a EntityMention),
}

impl Pending<'_> {
    fn key(&self) -> (Span, NodeKind, &str, &str) {
        match self {
            Pending::Trigger(ev) => (ev.trigger_span, NodeKind::Trigger, TRIGGER_LABEL, ev.event_type.as_str()),
            Pending::Entity(en) => (en.span, NodeKind::Entity, en.entity_type.as_str(), ""),
        }
    }
}

/// Converts a sentence's annotations into its information graph.
pub fn encode(sentence: &Sentence) -> Result<IEGraph, GraphError> {
    let mut pending: Vec<Pending> = sentence
        .events
        .iter()
        .map(Pending::Trigger)
        .chain(sentence.entities.iter().map(Pending::Entity))
        .collect();
    // Stable: identical keys keep annotation order.
    pending.sort_by(|a, b| a.key().cmp(&b.key()));

    let mut nodes = vec![GraphNode::root()];
    let mut entity_node: HashMap<&str, usize> = HashMap::new();
    let mut event_node: Vec<(usize, &EventMention)> = Vec::new();
    for p in &pending {
        let id = nodes.len();
        let (span, kind, label, _) = p.key();
        match p {
            Pending::Trigger(ev) => event_node.push((id, ev)),
            Pending::Entity(en) => {
                entity_node.insert(en.id.as_str(), id);
            }
        }
        nodes.push(GraphNode { id, kind, label: Some(label.to_string()), anchor: span.tokens().collect() });
    }

    let lookup = |entity_id: &str| {
        entity_node.get(entity_id).copied().ok_or_else(|| GraphError::Internal {
            sentence: sentence.id.clone(),
            message: format!("no node for entity {entity_id:?}"),
        })
    };
    let mut edges = Vec::new();
    for (node, ev) in &event_node {
        edges.push(GraphEdge { src: 0, dst: *node, label: ev.event_type.clone() });
        for arg in &ev.arguments {
            edges.push(GraphEdge { src: *node, dst: lookup(&arg.entity_id)?, label: arg.role.clone() });
        }
    }
    for rel in &sentence.relations {
        edges.push(GraphEdge {
            src: lookup(&rel.arg1)?,
            dst: lookup(&rel.arg2)?,
            label: rel.relation_type.clone(),
        });
    }
    edges.sort_by(|a, b| (a.src, a.dst).cmp(&(b.src, b.dst)));
    Ok(IEGraph { sentence_id: sentence.id.clone(), reduced: false, nodes, edges })
}

/// Lists every invariant the graph breaks. An empty list means the graph is
/// well-formed against `ontology`.
pub fn validate(graph: &IEGraph, ontology: &Ontology) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut node_v = |rule, node, message: String| out.push(Violation { rule, node: Some(node), edge: None, message });

    let roots = graph.nodes.iter().filter(|n| n.kind == NodeKind::Root).count();
    if roots != 1 {
        node_v(Rule::RootCount, 0, format!("expected exactly one root, found {roots}"));
    } else if graph.nodes[0].kind != NodeKind::Root {
        node_v(Rule::RootPosition, 0, "root is not the first node".into());
    }
    for (pos, node) in graph.nodes.iter().enumerate() {
        if node.id != pos {
            node_v(Rule::NodeId, pos, format!("node at position {pos} has id {}", node.id));
        }
        if !node.anchor.windows(2).all(|w| w[0] < w[1]) {
            node_v(Rule::Anchor, pos, "anchor is not a sorted set".into());
        }
        match node.kind {
            NodeKind::Root => {
                if !node.anchor.is_empty() {
                    node_v(Rule::Anchor, pos, "root carries an anchor".into());
                }
                if node.label.is_some() {
                    node_v(Rule::NodeLabel, pos, "root carries a label".into());
                }
            }
            NodeKind::Trigger | NodeKind::Entity => {
                if node.anchor.is_empty() {
                    node_v(Rule::Anchor, pos, "empty anchor".into());
                }
                let label = node.label.as_deref().unwrap_or("");
                let ok = match node.kind {
                    NodeKind::Trigger => label == TRIGGER_LABEL,
                    _ if graph.reduced => label == GENERIC_ENTITY_LABEL,
                    _ => ontology.has_entity_type(label),
                };
                if !ok {
                    node_v(Rule::NodeLabel, pos, format!("label {label:?} does not fit a {:?} node", node.kind));
                }
            }
        }
    }

    let kind_of = |id: usize| graph.nodes.get(id).map(|n| n.kind);
    let mut seen = HashSet::new();
    let mut root_in: HashMap<usize, usize> = HashMap::new();
    for (i, edge) in graph.edges.iter().enumerate() {
        let mut edge_v = |rule, message: String| out.push(Violation { rule, node: None, edge: Some(i), message });
        let (Some(src), Some(dst)) = (kind_of(edge.src), kind_of(edge.dst)) else {
            edge_v(Rule::DanglingEdge, format!("endpoint {}→{} does not exist", edge.src, edge.dst));
            continue;
        };
        if !seen.insert((edge.src, edge.dst)) {
            edge_v(Rule::DuplicateEdge, format!("second edge {}→{}", edge.src, edge.dst));
        }
        let label_ok = match (src, dst) {
            (NodeKind::Root, NodeKind::Trigger) => {
                *root_in.entry(edge.dst).or_default() += 1;
                ontology.has_event_type(&edge.label)
            }
            (NodeKind::Trigger, NodeKind::Entity) => ontology.has_role(&edge.label),
            (NodeKind::Entity, NodeKind::Entity) if edge.src == edge.dst => {
                edge_v(Rule::EdgeShape, "relation from an entity to itself".into());
                continue;
            }
            (NodeKind::Entity, NodeKind::Entity) if graph.reduced => {
                edge_v(Rule::EdgeShape, "relation edge in a reduced graph".into());
                continue;
            }
            (NodeKind::Entity, NodeKind::Entity) => ontology.has_relation_type(&edge.label),
            (NodeKind::Root, _) => {
                edge_v(Rule::EdgeShape, "root edge to non-trigger".into());
                continue;
            }
            (s, d) => {
                edge_v(Rule::EdgeShape, format!("no edge shape {s:?}→{d:?}"));
                continue;
            }
        };
        if !label_ok {
            edge_v(Rule::EdgeLabel, format!("label {:?} not allowed on {src:?}→{dst:?}", edge.label));
        }
    }
    for node in &graph.nodes {
        if node.kind == NodeKind::Trigger {
            let n = root_in.get(&node.id).copied().unwrap_or(0);
            if n != 1 {
                out.push(Violation {
                    rule: Rule::TriggerRootEdges,
                    node: Some(node.id),
                    edge: None,
                    message: format!("trigger has {n} incoming root edges"),
                });
            }
        }
    }
    out
}

/// Converts a valid graph back into annotations. Entities and events are
/// emitted in node order, relations in edge order; a node's span is the
/// interval from its first to its last anchored token.
pub fn decode(graph: &IEGraph, ontology: &Ontology, n_tokens: usize) -> Result<Annotations, GraphError> {
    let mut violations = validate(graph, ontology);
    for node in &graph.nodes {
        if node.anchor.last().is_some_and(|&t| t >= n_tokens) {
            violations.push(Violation {
                rule: Rule::Anchor,
                node: Some(node.id),
                edge: None,
                message: format!("anchor beyond the sentence's {n_tokens} tokens"),
            });
        }
    }
    if !violations.is_empty() {
        return Err(GraphError::Invalid { sentence: graph.sentence_id.clone(), violations });
    }

    let mut entity_ids = HashMap::new();
    let mut out = Annotations::default();
    for node in graph.nodes.iter().filter(|n| n.kind == NodeKind::Entity) {
        let id = format!("E{}", out.entities.len());
        entity_ids.insert(node.id, id.clone());
        out.entities.push(EntityMention::new(id, node.label.clone().unwrap_or_default(), node.span().unwrap()));
    }
    let mut event_index = HashMap::new();
    for node in graph.nodes.iter().filter(|n| n.kind == NodeKind::Trigger) {
        let event_type = graph
            .edges
            .iter()
            .find(|e| e.src == 0 && e.dst == node.id)
            .map(|e| e.label.clone())
            .unwrap_or_default();
        event_index.insert(node.id, out.events.len());
        out.events.push(EventMention {
            id: format!("V{}", out.events.len()),
            event_type,
            trigger_span: node.span().unwrap(),
            arguments: Vec::new(),
        });
    }
    for edge in &graph.edges {
        match (graph.nodes[edge.src].kind, graph.nodes[edge.dst].kind) {
            (NodeKind::Trigger, NodeKind::Entity) => {
                out.events[event_index[&edge.src]].arguments.push(Argument {
                    entity_id: entity_ids[&edge.dst].clone(),
                    role: edge.label.clone(),
                });
            }
            (NodeKind::Entity, NodeKind::Entity) => {
                out.relations.push(RelationMention {
                    id: format!("R{}", out.relations.len()),
                    relation_type: edge.label.clone(),
                    arg1: entity_ids[&edge.src].clone(),
                    arg2: entity_ids[&edge.dst].clone(),
                });
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Events-only view of a graph: relation edges go, entity nodes lose their
/// type, and entities that fill no argument slot disappear.
pub fn reduce_graph(graph: &IEGraph) -> IEGraph {
    let kind = |id: usize| graph.nodes[id].kind;
    let argument_fillers: BTreeSet<usize> = graph
        .edges
        .iter()
        .filter(|e| kind(e.src) == NodeKind::Trigger && kind(e.dst) == NodeKind::Entity)
        .map(|e| e.dst)
        .collect();
    let mut remap = HashMap::new();
    let mut nodes = Vec::new();
    for node in &graph.nodes {
        if node.kind == NodeKind::Entity && !argument_fillers.contains(&node.id) {
            continue;
        }
        let id = nodes.len();
        remap.insert(node.id, id);
        let label = match node.kind {
            NodeKind::Entity => Some(GENERIC_ENTITY_LABEL.to_string()),
            _ => node.label.clone(),
        };
        nodes.push(GraphNode { id, kind: node.kind, label, anchor: node.anchor.clone() });
    }
    let edges = graph
        .edges
        .iter()
        .filter(|e| !(kind(e.src) == NodeKind::Entity && kind(e.dst) == NodeKind::Entity))
        .filter_map(|e| {
            Some(GraphEdge { src: *remap.get(&e.src)?, dst: *remap.get(&e.dst)?, label: e.label.clone() })
        })
        .collect();
    IEGraph { sentence_id: graph.sentence_id.clone(), reduced: true, nodes, edges }
}

/// Events of a set of annotations keyed by surface positions only:
/// (trigger span, event type, sorted (argument span, role) pairs).
pub fn event_projection(ann: &Annotations) -> Vec<(Span, String, Vec<(Span, String)>)> {
    let spans: HashMap<&str, Span> = ann.entities.iter().map(|e| (e.id.as_str(), e.span)).collect();
    let mut out: Vec<_> = ann
        .events
        .iter()
        .map(|ev| {
            let mut args: Vec<(Span, String)> =
                ev.arguments.iter().map(|a| (spans[a.entity_id.as_str()], a.role.clone())).collect();
            args.sort();
            (ev.trigger_span, ev.event_type.clone(), args)
        })
        .collect();
    out.sort_by(|a, b| cmp_projection(a, b));
    out
}

fn cmp_projection(
    a: &(Span, String, Vec<(Span, String)>),
    b: &(Span, String, Vec<(Span, String)>),
) -> Ordering {
    (a.0, &a.1, &a.2).cmp(&(b.0, &b.1, &b.2))
}

/// Replaces a sentence's annotations with decoded ones.
pub fn apply_annotations(sentence: &Sentence, ann: Annotations) -> Sentence {
    Sentence {
        entities: ann.entities,
        relations: ann.relations,
        events: ann.events,
        ..sentence.clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub sentence_id: String,
    pub doc_id: String,
    pub lang: Lang,
    pub text: String,
    pub tokens: Vec<TokenRecord>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reduced: bool,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

/// File-level container for a corpus of graphs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub schema_version: String,
    pub ontology: Ontology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_variant: Option<SpanVariant>,
    pub graphs: Vec<GraphRecord>,
}

pub fn corpus_to_graphs(corpus: &Corpus) -> Result<GraphDocument, GraphError> {
    let mut graphs = Vec::with_capacity(corpus.len());
    for s in &corpus.sentences {
        let g = encode(s)?;
        graphs.push(GraphRecord {
            sentence_id: s.id.clone(),
            doc_id: s.doc_id.clone(),
            lang: s.lang,
            text: s.raw_text.clone(),
            tokens: tokens_to_records(&s.tokens),
            reduced: g.reduced,
            nodes: g.nodes,
            edges: g.edges,
        });
    }
    Ok(GraphDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        ontology: corpus.ontology.clone(),
        span_variant: (corpus.variant == SpanVariant::Head).then_some(SpanVariant::Head),
        graphs,
    })
}

/// Decodes every graph; fails on the first invalid one, naming its sentence.
pub fn graphs_to_corpus(doc: &GraphDocument) -> Result<Corpus, GraphError> {
    doc.ontology.validate()?;
    let mut sentences = Vec::with_capacity(doc.graphs.len());
    let mut events_only = false;
    for rec in &doc.graphs {
        let graph = IEGraph {
            sentence_id: rec.sentence_id.clone(),
            reduced: rec.reduced,
            nodes: rec.nodes.clone(),
            edges: rec.edges.clone(),
        };
        events_only |= rec.reduced;
        let tokens = tokens_from_records(rec.tokens.clone());
        let ann = decode(&graph, &doc.ontology, tokens.len())?;
        sentences.push(Sentence {
            id: rec.sentence_id.clone(),
            doc_id: rec.doc_id.clone(),
            lang: rec.lang,
            raw_text: rec.text.clone(),
            tokens,
            entities: ann.entities,
            relations: ann.relations,
            events: ann.events,
        });
    }
    let mut corpus = Corpus::new(doc.ontology.clone(), sentences);
    corpus.events_only = events_only;
    corpus.variant = doc.span_variant.unwrap_or_default();
    corpus.validate()?;
    Ok(corpus)
}
