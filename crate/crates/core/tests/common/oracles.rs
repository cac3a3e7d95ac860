//! Brute-force references for the scorer and the nesting counter.

use std::collections::HashSet;

use iegraph::corpus::{Sentence, Span};
use iegraph::score::Counts;

/// Largest one-to-one matching by trying every assignment.
pub fn brute_max<K: PartialEq>(pred: &[K], gold: &[K], used: &mut Vec<bool>) -> usize {
    let Some((first, rest)) = pred.split_first() else { return 0 };
    let mut best = brute_max(rest, gold, used);
    for j in 0..gold.len() {
        if !used[j] && gold[j] == *first {
            used[j] = true;
            best = best.max(1 + brute_max(rest, gold, used));
            used[j] = false;
        }
    }
    best
}

pub fn brute<K: PartialEq>(pred: Vec<K>, gold: Vec<K>) -> Counts {
    let matched = brute_max(&pred, &gold, &mut vec![false; gold.len()]);
    Counts { gold: gold.len(), predicted: pred.len(), matched }
}

pub type Keys = (Vec<(Span, String)>, Vec<(Span, Span, String)>, Vec<(Span, String)>, Vec<(String, Span, String)>);

pub fn keys(s: &Sentence) -> Keys {
    let span = |id: &str| s.entities.iter().find(|e| e.id == id).unwrap().span;
    (
        s.entities.iter().map(|e| (e.span, e.entity_type.clone())).collect(),
        s.relations.iter().map(|r| (span(&r.arg1), span(&r.arg2), r.relation_type.clone())).collect(),
        s.events.iter().map(|e| (e.trigger_span, e.event_type.clone())).collect(),
        s.events
            .iter()
            .flat_map(|e| e.arguments.iter().map(move |a| (e.event_type.clone(), a.entity_id.clone(), a.role.clone())))
            .map(|(t, id, r)| (t, span(&id), r))
            .collect(),
    )
}

/// At most four arguments in total.
pub fn cap_arguments(s: &mut Sentence) {
    let mut budget = 4;
    for ev in &mut s.events {
        let keep = ev.arguments.len().min(budget);
        ev.arguments.truncate(keep);
        budget -= keep;
    }
}

pub fn share_token(a: Span, b: Span) -> bool {
    let x: HashSet<usize> = (a.start..a.end).collect();
    (b.start..b.end).any(|t| x.contains(&t))
}

/// (trg-trg, ent-ent, trg-ent) by scanning every pair of mentions.
pub fn scan(s: &Sentence) -> [usize; 3] {
    let mentions: Vec<(bool, Span)> = s
        .events
        .iter()
        .map(|e| (true, e.trigger_span))
        .chain(s.entities.iter().map(|e| (false, e.span)))
        .collect();
    let mut out = [0; 3];
    for i in 0..mentions.len() {
        for j in 0..mentions.len() {
            if i >= j || !share_token(mentions[i].1, mentions[j].1) {
                continue;
            }
            let k = match (mentions[i].0, mentions[j].0) {
                (true, true) => 0,
                (false, false) => 1,
                _ => 2,
            };
            out[k] += 1;
        }
    }
    out
}
