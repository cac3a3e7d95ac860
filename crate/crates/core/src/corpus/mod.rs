//! Annotated corpora: the in-memory model, validation, the head/full span
//! variants, document-level splitting and summary statistics.

mod ontology;
pub(crate) mod schema;
mod split;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Add;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ontology::Ontology;
pub use schema::{load_corpus, parse_corpus, save_corpus, to_json_string, TokenRecord, SCHEMA_VERSION};
pub use split::{split_corpus, DEFAULT_SPLIT_RATIOS};

/// Entity label used when entity typing is ablated away.
pub const GENERIC_ENTITY_LABEL: &str = "entity";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {found:?} (expected {expected:?})")]
    SchemaVersion { found: String, expected: String },
    #[error("sentence {sentence}: field `{field}`: {message}")]
    Schema {
        sentence: String,
        field: String,
        message: String,
    },
    #[error("sentence {sentence}: dangling reference to {id:?}")]
    DanglingReference { sentence: String, id: String },
    #[error("invalid ontology: {0}")]
    Ontology(String),
    #[error("cannot split {docs} documents into {splits} non-empty parts")]
    TooFewDocuments { docs: usize, splits: usize },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
}

impl CorpusError {
    fn schema(sentence: &str, field: impl Into<String>, message: impl Into<String>) -> Self {
        CorpusError::Schema {
            sentence: sentence.to_string(),
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// True when the two intervals share at least one token.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn tokens(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub id: String,
    pub entity_type: String,
    pub full_span: Span,
    pub head_span: Option<Span>,
    /// Span seen by every downstream consumer; depends on the corpus span variant.
    pub span: Span,
}

impl EntityMention {
    pub fn new(id: impl Into<String>, entity_type: impl Into<String>, full_span: Span) -> Self {
        Self {
            id: id.into(),
            entity_type: entity_type.into(),
            full_span,
            head_span: None,
            span: full_span,
        }
    }

    pub fn with_head(mut self, head: Span) -> Self {
        self.head_span = Some(head);
        self
    }

    fn resolve(&mut self, variant: SpanVariant) {
        self.span = match variant {
            SpanVariant::Full => self.full_span,
            SpanVariant::Head => self.head_span.unwrap_or(self.full_span),
        };
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMention {
    pub id: String,
    pub relation_type: String,
    pub arg1: String,
    pub arg2: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Argument {
    pub entity_id: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventMention {
    pub id: String,
    pub event_type: String,
    pub trigger_span: Span,
    pub arguments: Vec<Argument>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    Zh,
    Es,
}

impl Lang {
    pub fn as_str(&self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Zh => "zh",
            Lang::Es => "es",
        }
    }
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Lang::En),
            "zh" => Ok(Lang::Zh),
            "es" => Ok(Lang::Es),
            other => Err(format!("unsupported language {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub doc_id: String,
    pub lang: Lang,
    pub raw_text: String,
    pub tokens: Vec<Token>,
    pub entities: Vec<EntityMention>,
    pub relations: Vec<RelationMention>,
    pub events: Vec<EventMention>,
}

impl Sentence {
    /// Builds a sentence from whitespace-separated text with no annotations.
    pub fn from_text(
        id: impl Into<String>,
        doc_id: impl Into<String>,
        lang: Lang,
        text: &str,
    ) -> Self {
        let mut tokens = Vec::new();
        let mut offset = 0;
        for piece in text.split(' ') {
            let len = piece.chars().count();
            if len > 0 {
                tokens.push(Token {
                    index: tokens.len(),
                    text: piece.to_string(),
                    char_start: offset,
                    char_end: offset + len,
                });
            }
            offset += len + 1;
        }
        Self {
            id: id.into(),
            doc_id: doc_id.into(),
            lang,
            raw_text: text.to_string(),
            tokens,
            entities: Vec::new(),
            relations: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn entity(&self, id: &str) -> Option<&EntityMention> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// Checks every sentence-level invariant against `ontology`. When
    /// `generic_entities` is set, the untyped [`GENERIC_ENTITY_LABEL`] is
    /// accepted in place of an ontology entity type.
    pub fn validate(&self, ontology: &Ontology, generic_entities: bool) -> Result<(), CorpusError> {
        let sid = self.id.as_str();
        let n = self.tokens.len();
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.index != i {
                return Err(CorpusError::schema(sid, "tokens", format!("token {i} has index {}", tok.index)));
            }
            if tok.char_start >= tok.char_end {
                return Err(CorpusError::schema(sid, "tokens", format!("token {i} has empty character range")));
            }
            if i > 0 && self.tokens[i - 1].char_end > tok.char_start {
                return Err(CorpusError::schema(sid, "tokens", format!("token {i} overlaps its predecessor")));
            }
        }
        let check_span = |span: &Span, field: &str| -> Result<(), CorpusError> {
            if span.start >= span.end || span.end > n {
                return Err(CorpusError::schema(sid, field, format!("span {span} outside sentence of {n} tokens")));
            }
            Ok(())
        };

        let mut entity_ids = HashSet::new();
        for ent in &self.entities {
            check_span(&ent.full_span, "entities.start/end")?;
            if let Some(head) = &ent.head_span {
                check_span(head, "entities.head_start/head_end")?;
                if !ent.full_span.contains(head) {
                    return Err(CorpusError::schema(sid, "entities.head_start/head_end", format!("head {head} of {} not inside {}", ent.id, ent.full_span)));
                }
            }
            let typed = ontology.has_entity_type(&ent.entity_type);
            let generic = generic_entities && ent.entity_type == GENERIC_ENTITY_LABEL;
            if !typed && !generic {
                return Err(CorpusError::schema(sid, "entities.type", format!("unknown entity type {:?}", ent.entity_type)));
            }
            if !entity_ids.insert(ent.id.as_str()) {
                return Err(CorpusError::schema(sid, "entities.id", format!("duplicate id {:?}", ent.id)));
            }
        }

        let mut pairs = HashSet::new();
        let mut relation_ids = HashSet::new();
        for rel in &self.relations {
            if !relation_ids.insert(rel.id.as_str()) {
                return Err(CorpusError::schema(sid, "relations.id", format!("duplicate id {:?}", rel.id)));
            }
            if !ontology.has_relation_type(&rel.relation_type) {
                return Err(CorpusError::schema(sid, "relations.type", format!("unknown relation type {:?}", rel.relation_type)));
            }
            for arg in [&rel.arg1, &rel.arg2] {
                if !entity_ids.contains(arg.as_str()) {
                    return Err(CorpusError::DanglingReference { sentence: sid.into(), id: arg.clone() });
                }
            }
            if rel.arg1 == rel.arg2 {
                return Err(CorpusError::schema(sid, "relations.arg2", format!("relation {} links {} to itself", rel.id, rel.arg1)));
            }
            if !pairs.insert((rel.arg1.as_str(), rel.arg2.as_str())) {
                return Err(CorpusError::schema(sid, "relations", format!("second relation over ({}, {})", rel.arg1, rel.arg2)));
            }
        }

        let mut event_ids = HashSet::new();
        for ev in &self.events {
            if !event_ids.insert(ev.id.as_str()) {
                return Err(CorpusError::schema(sid, "events.id", format!("duplicate id {:?}", ev.id)));
            }
            check_span(&ev.trigger_span, "events.trigger_start/trigger_end")?;
            if !ontology.has_event_type(&ev.event_type) {
                return Err(CorpusError::schema(sid, "events.type", format!("unknown event type {:?}", ev.event_type)));
            }
            let mut fillers = HashSet::new();
            for arg in &ev.arguments {
                if !entity_ids.contains(arg.entity_id.as_str()) {
                    return Err(CorpusError::DanglingReference { sentence: sid.into(), id: arg.entity_id.clone() });
                }
                if !ontology.has_role(&arg.role) {
                    return Err(CorpusError::schema(sid, "events.args.role", format!("unknown role {:?}", arg.role)));
                }
                if !fillers.insert(arg.entity_id.as_str()) {
                    return Err(CorpusError::schema(sid, "events.args", format!("event {} uses entity {} twice", ev.id, arg.entity_id)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanVariant {
    /// Entity heads where annotated (E⁺).
    Head,
    /// Full mention spans (E⁺⁺).
    #[default]
    Full,
}

impl FromStr for SpanVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "head" => Ok(SpanVariant::Head),
            "full" => Ok(SpanVariant::Full),
            other => Err(format!("unknown span variant {other:?} (expected head or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub ontology: Ontology,
    pub sentences: Vec<Sentence>,
    pub split: Option<SplitTag>,
    pub variant: SpanVariant,
    /// Set on predictions of an events-only model: entities are untyped and
    /// there are no relations.
    pub events_only: bool,
}

impl Corpus {
    pub fn new(ontology: Ontology, sentences: Vec<Sentence>) -> Self {
        Self {
            ontology,
            sentences,
            split: None,
            variant: SpanVariant::Full,
            events_only: false,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        self.ontology.validate()?;
        let mut ids = HashSet::new();
        for s in &self.sentences {
            if !ids.insert(s.id.as_str()) {
                return Err(CorpusError::schema(&s.id, "id", "duplicate sentence id"));
            }
            s.validate(&self.ontology, self.events_only)?;
        }
        Ok(())
    }

    /// Document ids in order of first appearance.
    pub fn doc_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.sentences
            .iter()
            .filter(|s| seen.insert(s.doc_id.as_str()))
            .map(|s| s.doc_id.clone())
            .collect()
    }

    /// A corpus with the same header holding only the given sentences.
    pub fn with_sentences(&self, sentences: Vec<Sentence>) -> Corpus {
        Corpus {
            ontology: self.ontology.clone(),
            sentences,
            split: self.split,
            variant: self.variant,
            events_only: self.events_only,
        }
    }

    pub fn sentence_index(&self) -> HashMap<&str, &Sentence> {
        self.sentences.iter().map(|s| (s.id.as_str(), s)).collect()
    }
}

/// Switches every entity's effective span to the requested variant. Head
/// spans fall back to the full span where no head is annotated.
pub fn select_span_variant(mut corpus: Corpus, variant: SpanVariant) -> Corpus {
    for sentence in &mut corpus.sentences {
        for ent in &mut sentence.entities {
            ent.resolve(variant);
        }
    }
    corpus.variant = variant;
    corpus
}

/// Row of the corpus statistics table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub events: usize,
    /// Argument slots summed over all events.
    pub roles: usize,
    pub entities: usize,
    pub relations: usize,
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(self, rhs: Self) -> Self {
        CorpusStats {
            sentences: self.sentences + rhs.sentences,
            events: self.events + rhs.events,
            roles: self.roles + rhs.roles,
            entities: self.entities + rhs.entities,
            relations: self.relations + rhs.relations,
        }
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    corpus
        .sentences
        .iter()
        .map(|s| CorpusStats {
            sentences: 1,
            events: s.events.len(),
            roles: s.events.iter().map(|e| e.arguments.len()).sum(),
            entities: s.entities.len(),
            relations: s.relations.len(),
        })
        .fold(CorpusStats::default(), Add::add)
}

impl CorpusStats {
    pub fn to_table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>10} {:>10}\n{:>8} {:>8} {:>8} {:>10} {:>10}\n",
            "#Sents",
            "#Events",
            "#Roles",
            "#Entities",
            "#Relations",
            self.sentences,
            self.events,
            self.roles,
            self.entities,
            self.relations
        )
    }
}
