//! Counting nested (overlapping or contained) annotation pairs.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentence, Span};

/// Any shared token counts, full containment and partial overlap alike. Two
/// distinct annotations over identical spans are nested.
pub fn spans_nested(a: &Span, b: &Span) -> bool {
    a.overlaps(b)
}

/// Number of mentions taking part in at least one nested pair, per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvolvedMentions {
    pub trg_trg: usize,
    pub ent_ent: usize,
    pub trg_ent: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestingReport {
    /// Unordered pairs of event mentions with nested triggers.
    pub trg_trg: usize,
    pub ent_ent: usize,
    /// (trigger, entity) pairs.
    pub trg_ent: usize,
    pub nested_sents: usize,
    pub all_sents: usize,
    /// Alternate counter: mentions involved rather than pairs.
    pub involved: InvolvedMentions,
}

impl std::ops::Add for NestingReport {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        NestingReport {
            trg_trg: self.trg_trg + o.trg_trg,
            ent_ent: self.ent_ent + o.ent_ent,
            trg_ent: self.trg_ent + o.trg_ent,
            nested_sents: self.nested_sents + o.nested_sents,
            all_sents: self.all_sents + o.all_sents,
            involved: InvolvedMentions {
                trg_trg: self.involved.trg_trg + o.involved.trg_trg,
                ent_ent: self.involved.ent_ent + o.involved.ent_ent,
                trg_ent: self.involved.trg_ent + o.involved.trg_ent,
            },
        }
    }
}

impl NestingReport {
    /// Plain-text table with the columns Trg-Trg, Ent-Ent, Trg-Ent, Nested, All.
    pub fn to_table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8} {:>8}\n{:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "Trg-Trg", "Ent-Ent", "Trg-Ent", "Nested", "All",
            self.trg_trg, self.ent_ent, self.trg_ent, self.nested_sents, self.all_sents
        )
    }
}

/// Pairs i<j (within one list) or all cross pairs, plus the set of members hit.
fn within(spans: &[Span]) -> (usize, usize) {
    let mut pairs = 0;
    let mut hit = vec![false; spans.len()];
    for i in 0..spans.len() {
        for j in i + 1..spans.len() {
            if spans_nested(&spans[i], &spans[j]) {
                pairs += 1;
                hit[i] = true;
                hit[j] = true;
            }
        }
    }
    (pairs, hit.iter().filter(|h| **h).count())
}

fn across(a: &[Span], b: &[Span]) -> (usize, usize) {
    let mut pairs = 0;
    let mut hit_a = vec![false; a.len()];
    let mut hit_b = vec![false; b.len()];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if spans_nested(x, y) {
                pairs += 1;
                hit_a[i] = true;
                hit_b[j] = true;
            }
        }
    }
    let involved = hit_a.iter().chain(&hit_b).filter(|h| **h).count();
    (pairs, involved)
}

/// Nesting counts for one sentence, using the entities' effective spans.
pub fn sentence_nesting(sentence: &Sentence) -> NestingReport {
    let triggers: Vec<Span> = sentence.events.iter().map(|e| e.trigger_span).collect();
    let entities: Vec<Span> = sentence.entities.iter().map(|e| e.span).collect();
    let (trg_trg, inv_tt) = within(&triggers);
    let (ent_ent, inv_ee) = within(&entities);
    let (trg_ent, inv_te) = across(&triggers, &entities);
    let nested = trg_trg + ent_ent + trg_ent > 0;
    NestingReport {
        trg_trg,
        ent_ent,
        trg_ent,
        nested_sents: usize::from(nested),
        all_sents: 1,
        involved: InvolvedMentions { trg_trg: inv_tt, ent_ent: inv_ee, trg_ent: inv_te },
    }
}

pub fn is_nested(sentence: &Sentence) -> bool {
    sentence_nesting(sentence).nested_sents == 1
}

pub fn count_nesting(corpus: &Corpus) -> NestingReport {
    corpus
        .sentences
        .iter()
        .map(sentence_nesting)
        .fold(NestingReport::default(), std::ops::Add::add)
}

/// Splits a corpus into (nested, non-nested) sentences, preserving order.
pub fn partition_nested(corpus: &Corpus) -> (Corpus, Corpus) {
    let (nested, plain): (Vec<_>, Vec<_>) =
        corpus.sentences.iter().cloned().partition(is_nested);
    (corpus.with_sentences(nested), corpus.with_sentences(plain))
}
