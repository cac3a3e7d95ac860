//! Micro-averaged precision, recall and F1 for entities, relations, triggers
//! and arguments.
//!
//! Every metric is an exact-match criterion over a tuple key:
//!
//! | metric   | key                                   |
//! |----------|---------------------------------------|
//! | Entity   | (span, entity type)                   |
//! | Relation | (arg1 span, arg2 span, relation type) |
//! | Trg-I    | trigger span                          |
//! | Trg-C    | (trigger span, event type)            |
//! | Arg-I    | (event type, argument span)           |
//! | Arg-C    | (event type, argument span, role)     |
//!
//! Arguments are keyed by the type of the event hosting them, so an argument
//! attached to an event whose type no reference event shares cannot match.
//! Matching is one-to-one within a sentence.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Sentence, Span};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("sentence {0} has a prediction but no reference")]
    UnknownPrediction(String),
    #[error("sentence {0} has a reference but no prediction")]
    MissingPrediction(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.gold += o.gold;
        self.predicted += o.predicted;
        self.matched += o.matched;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

impl From<Counts> for Metric {
    fn from(counts: Counts) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(counts.matched, counts.predicted);
        let recall = ratio(counts.matched, counts.gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metric { precision, recall, f1, counts }
    }
}

/// Raw match counts per metric, in the order Entity, Relation, Trg-I, Trg-C,
/// Arg-I, Arg-C.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SentenceCounts(pub [Counts; 6]);

impl std::ops::AddAssign for SentenceCounts {
    fn add_assign(&mut self, o: Self) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// `None` when either side carries no typed entities (events-only runs).
    pub entity: Option<Metric>,
    pub relation: Option<Metric>,
    pub trg_i: Metric,
    pub trg_c: Metric,
    pub arg_i: Metric,
    pub arg_c: Metric,
}

impl ScoreReport {
    pub fn from_counts(counts: SentenceCounts, events_only: bool) -> Self {
        let [ent, rel, ti, tc, ai, ac] = counts.0;
        ScoreReport {
            entity: (!events_only).then(|| ent.into()),
            relation: (!events_only).then(|| rel.into()),
            trg_i: ti.into(),
            trg_c: tc.into(),
            arg_i: ai.into(),
            arg_c: ac.into(),
        }
    }

    /// Plain-text F1 table (percentages) with columns Trg-I, Trg-C, Arg-I,
    /// Arg-C, Entity, Relation; not-applicable cells print as "—".
    pub fn to_table(&self) -> String {
        let cell = |m: Option<&Metric>| match m {
            Some(m) => format!("{:>8.1}", 100.0 * m.f1),
            None => format!("{:>8}", "—"),
        };
        let mut out = format!(
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "Trg-I", "Trg-C", "Arg-I", "Arg-C", "Entity", "Relation"
        );
        let cells = [
            cell(Some(&self.trg_i)),
            cell(Some(&self.trg_c)),
            cell(Some(&self.arg_i)),
            cell(Some(&self.arg_c)),
            cell(self.entity.as_ref()),
            cell(self.relation.as_ref()),
        ];
        out.push_str(&cells.join(" "));
        out.push('\n');
        out
    }
}

/// One-to-one exact matching. Because equality partitions items into
/// classes, visiting predictions in sorted order gives the maximum matching.
fn match_count<K: Ord>(pred: Vec<K>, gold: Vec<K>) -> Counts {
    let mut pool: BTreeMap<&K, usize> = BTreeMap::new();
    for g in &gold {
        *pool.entry(g).or_default() += 1;
    }
    let mut sorted: Vec<&K> = pred.iter().collect();
    sorted.sort();
    let mut matched = 0;
    for p in sorted {
        if let Some(n) = pool.get_mut(p) {
            if *n > 0 {
                *n -= 1;
                matched += 1;
            }
        }
    }
    Counts { gold: gold.len(), predicted: pred.len(), matched }
}

/// Metric keys of one sentence's annotations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceKeys {
    pub entities: Vec<(Span, String)>,
    pub relations: Vec<(Span, Span, String)>,
    pub triggers: Vec<(Span, String)>,
    /// (event type, argument span, role)
    pub arguments: Vec<(String, Span, String)>,
}

impl SentenceKeys {
    pub fn of(s: &Sentence) -> Self {
        let spans: HashMap<&str, Span> = s.entities.iter().map(|e| (e.id.as_str(), e.span)).collect();
        let span = |id: &str| spans.get(id).copied().unwrap_or(Span::new(0, 0));
        SentenceKeys {
            entities: s.entities.iter().map(|e| (e.span, e.entity_type.clone())).collect(),
            relations: s
                .relations
                .iter()
                .map(|r| (span(&r.arg1), span(&r.arg2), r.relation_type.clone()))
                .collect(),
            triggers: s.events.iter().map(|e| (e.trigger_span, e.event_type.clone())).collect(),
            arguments: s
                .events
                .iter()
                .flat_map(|e| {
                    e.arguments
                        .iter()
                        .map(|a| (e.event_type.clone(), span(&a.entity_id), a.role.clone()))
                })
                .collect(),
        }
    }
}

pub fn sentence_counts(pred: &Sentence, gold: &Sentence) -> SentenceCounts {
    let p = SentenceKeys::of(pred);
    let g = SentenceKeys::of(gold);
    SentenceCounts([
        match_count(p.entities.clone(), g.entities.clone()),
        match_count(p.relations.clone(), g.relations.clone()),
        match_count(
            p.triggers.iter().map(|t| t.0).collect(),
            g.triggers.iter().map(|t| t.0).collect(),
        ),
        match_count(p.triggers, g.triggers),
        match_count(
            p.arguments.iter().map(|a| (a.0.clone(), a.1)).collect(),
            g.arguments.iter().map(|a| (a.0.clone(), a.1)).collect(),
        ),
        match_count(p.arguments, g.arguments),
    ])
}

/// Scores predictions against references, pairing sentences by id. Both sides
/// must cover the same sentence ids.
pub fn score(pred: &Corpus, gold: &Corpus) -> Result<ScoreReport, ScoreError> {
    let gold_ids: HashSet<&str> = gold.sentences.iter().map(|s| s.id.as_str()).collect();
    if let Some(s) = pred.sentences.iter().find(|s| !gold_ids.contains(s.id.as_str())) {
        return Err(ScoreError::UnknownPrediction(s.id.clone()));
    }
    let by_id = pred.sentence_index();
    let mut total = SentenceCounts::default();
    for g in &gold.sentences {
        let p = by_id
            .get(g.id.as_str())
            .ok_or_else(|| ScoreError::MissingPrediction(g.id.clone()))?;
        total += sentence_counts(p, g);
    }
    Ok(ScoreReport::from_counts(total, pred.events_only || gold.events_only))
}

/// Scores the predictions separately on two disjoint reference subsets, e.g.
/// the nested and non-nested halves of a test set.
pub fn score_partitioned(
    pred: &Corpus,
    first: &Corpus,
    second: &Corpus,
) -> Result<(ScoreReport, ScoreReport), ScoreError> {
    let restrict = |part: &Corpus| {
        let ids: HashSet<&str> = part.sentences.iter().map(|s| s.id.as_str()).collect();
        pred.with_sentences(
            pred.sentences
                .iter()
                .filter(|s| ids.contains(s.id.as_str()))
                .cloned()
                .collect(),
        )
    };
    Ok((score(&restrict(first), first)?, score(&restrict(second), second)?))
}
