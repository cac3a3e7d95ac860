#![allow(dead_code)]

pub mod numeric;
pub mod oracles;

use iegraph::corpus::{Argument, Corpus, EntityMention, EventMention, Lang, Ontology, RelationMention, Sentence, Span};
use iegraph::parser::{LabelSpace, ParserOutput};
use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_span(rng: &mut ChaCha8Rng, n: usize, max_len: usize) -> Span {
    let len = rng.random_range(1..=max_len.min(n));
    let start = rng.random_range(0..=n - len);
    Span::new(start, start + len)
}

/// A valid sentence over `ontology` with up to `max_items` entities and
/// events. Entities nest freely, triggers are often double-tagged and some
/// entities carry heads.
pub fn random_sentence(rng: &mut ChaCha8Rng, ontology: &Ontology, id: &str, max_items: usize) -> Sentence {
    let n = rng.random_range(1..=12);
    let words: Vec<String> = (0..n).map(|i| format!("w{}", (i * 7 + rng.random_range(0..5)) % 11)).collect();
    let mut s = Sentence::from_text(id, "doc", *[Lang::En, Lang::Zh, Lang::Es].choose(rng).unwrap(), &words.join(" "));

    let n_ent = rng.random_range(0..=max_items);
    for i in 0..n_ent {
        let span = if i > 0 && rng.random_bool(0.3) {
            // Reuse or enclose an earlier span to force nesting.
            let prev = s.entities[rng.random_range(0..i)].full_span;
            Span::new(prev.start.saturating_sub(rng.random_range(0..2)), (prev.end + rng.random_range(0..2)).min(n))
        } else {
            random_span(rng, n, 4)
        };
        let mut e = EntityMention::new(format!("ent{i}"), ontology.entity_types.choose(rng).unwrap().clone(), span);
        if span.len() > 1 && rng.random_bool(0.4) {
            let h = rng.random_range(span.start..span.end);
            e = e.with_head(Span::new(h, h + 1));
        }
        s.entities.push(e);
    }

    let n_rel = if n_ent >= 2 { rng.random_range(0..=max_items.min(n_ent * (n_ent - 1))) } else { 0 };
    let mut pairs = std::collections::HashSet::new();
    for _ in 0..n_rel {
        let a = rng.random_range(0..n_ent);
        let b = rng.random_range(0..n_ent);
        if a == b || !pairs.insert((a, b)) {
            continue;
        }
        s.relations.push(RelationMention {
            id: format!("rel{}", s.relations.len()),
            relation_type: ontology.relation_types.choose(rng).unwrap().clone(),
            arg1: format!("ent{a}"),
            arg2: format!("ent{b}"),
        });
    }

    let n_ev = rng.random_range(0..=max_items);
    for i in 0..n_ev {
        let trigger_span = if i > 0 && rng.random_bool(0.4) {
            s.events[rng.random_range(0..i)].trigger_span
        } else {
            random_span(rng, n, 2)
        };
        let mut fillers: Vec<usize> = (0..n_ent).collect();
        rand::seq::SliceRandom::shuffle(&mut fillers[..], rng);
        let k = rng.random_range(0..=fillers.len().min(3));
        let arguments = fillers[..k]
            .iter()
            .map(|&e| Argument { entity_id: format!("ent{e}"), role: ontology.argument_roles.choose(rng).unwrap().clone() })
            .collect();
        s.events.push(EventMention {
            id: format!("ev{i}"),
            event_type: ontology.event_types.choose(rng).unwrap().clone(),
            trigger_span,
            arguments,
        });
    }
    s
}

pub fn random_corpus(rng: &mut ChaCha8Rng, ontology: &Ontology, n: usize, max_items: usize) -> Corpus {
    let sentences = (0..n).map(|i| random_sentence(rng, ontology, &format!("s{i}"), max_items)).collect();
    Corpus::new(ontology.clone(), sentences)
}

/// A copy of `gold` with each annotation kept, perturbed or dropped at
/// random and a few spurious items added.
pub fn perturb(rng: &mut ChaCha8Rng, gold: &Sentence, ontology: &Ontology) -> Sentence {
    let mut p = gold.clone();
    let n = p.len();
    for e in &mut p.entities {
        if rng.random_bool(0.2) {
            e.entity_type = ontology.entity_types.choose(rng).unwrap().clone();
        }
        if rng.random_bool(0.15) {
            e.full_span = random_span(rng, n, 3);
            e.head_span = None;
            e.span = e.full_span;
        }
    }
    for ev in &mut p.events {
        if rng.random_bool(0.2) {
            ev.event_type = ontology.event_types.choose(rng).unwrap().clone();
        }
        if rng.random_bool(0.15) {
            ev.trigger_span = random_span(rng, n, 2);
        }
        for a in &mut ev.arguments {
            if rng.random_bool(0.2) {
                a.role = ontology.argument_roles.choose(rng).unwrap().clone();
            }
        }
        if !ev.arguments.is_empty() && rng.random_bool(0.2) {
            ev.arguments.pop();
        }
    }
    for r in &mut p.relations {
        if rng.random_bool(0.2) {
            r.relation_type = ontology.relation_types.choose(rng).unwrap().clone();
        }
    }
    if !p.events.is_empty() && rng.random_bool(0.2) {
        p.events.remove(rng.random_range(0..p.events.len()));
    }
    if rng.random_bool(0.3) {
        let span = random_span(rng, n, 2);
        p.events.push(EventMention {
            id: "spurious".into(),
            event_type: ontology.event_types.choose(rng).unwrap().clone(),
            trigger_span: span,
            arguments: Vec::new(),
        });
    }
    p
}

/// Random scores for `n_sel` of `q` queries over `t` tokens.
pub fn random_output(rng: &mut ChaCha8Rng, labels: &LabelSpace, q: usize, t: usize, n_sel: usize, scale: f64) -> ParserOutput {
    let mut m = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..scale));
    let n = n_sel + 1;
    let node_label_logits = m(q, labels.node_classes.len());
    let anchor_logits = m(q, t);
    let edge_presence_logits = m(n, n);
    let edge_label_logits = m(n * n, labels.edge_labels.len());
    let mut queries: Vec<usize> = (0..q).collect();
    rand::seq::SliceRandom::shuffle(&mut queries[..], rng);
    queries.truncate(n_sel);
    ParserOutput { node_label_logits, anchor_logits, edge_presence_logits, edge_label_logits, query_to_node: queries }
}
