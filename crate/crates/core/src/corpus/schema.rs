//! JSON interchange format for corpora.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    select_span_variant, Argument, Corpus, CorpusError, EntityMention, EventMention, Lang,
    Ontology, RelationMention, Sentence, Span, SpanVariant, SplitTag, Token,
};
use crate::io::write_atomic;

pub const SCHEMA_VERSION: &str = "1.0";

const EVENTS_ONLY_TAG: &str = "no-ent-rel";

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader<S> {
    schema_version: String,
    ontology: Ontology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<SplitTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    span_variant: Option<SpanVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ablation: Option<String>,
    sentences: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRecord {
    pub text: String,
    pub start_char: usize,
    pub end_char: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    id: String,
    #[serde(rename = "type")]
    entity_type: String,
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_end: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationRecord {
    id: String,
    #[serde(rename = "type")]
    relation_type: String,
    arg1: String,
    arg2: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArgRecord {
    entity: String,
    role: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    id: String,
    #[serde(rename = "type")]
    event_type: String,
    trigger_start: usize,
    trigger_end: usize,
    #[serde(default)]
    args: Vec<ArgRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    id: String,
    doc_id: String,
    lang: Lang,
    text: String,
    tokens: Vec<TokenRecord>,
    #[serde(default)]
    entities: Vec<EntityRecord>,
    #[serde(default)]
    relations: Vec<RelationRecord>,
    #[serde(default)]
    events: Vec<EventRecord>,
}

pub(crate) fn tokens_from_records(records: Vec<TokenRecord>) -> Vec<Token> {
    records
        .into_iter()
        .enumerate()
        .map(|(index, t)| Token {
            index,
            text: t.text,
            char_start: t.start_char,
            char_end: t.end_char,
        })
        .collect()
}

pub(crate) fn tokens_to_records(tokens: &[Token]) -> Vec<TokenRecord> {
    tokens
        .iter()
        .map(|t| TokenRecord {
            text: t.text.clone(),
            start_char: t.char_start,
            end_char: t.char_end,
        })
        .collect()
}

fn record_to_sentence(rec: SentenceRecord) -> Result<Sentence, CorpusError> {
    let mut entities = Vec::with_capacity(rec.entities.len());
    for e in rec.entities {
        let full = Span::new(e.start, e.end);
        let mention = EntityMention::new(e.id, e.entity_type, full);
        let mention = match (e.head_start, e.head_end) {
            (Some(s), Some(t)) => mention.with_head(Span::new(s, t)),
            (None, None) => mention,
            _ => {
                return Err(CorpusError::Schema {
                    sentence: rec.id.clone(),
                    field: "entities.head_start/head_end".into(),
                    message: format!("entity {} has only one head offset", mention.id),
                })
            }
        };
        entities.push(mention);
    }
    Ok(Sentence {
        id: rec.id,
        doc_id: rec.doc_id,
        lang: rec.lang,
        raw_text: rec.text,
        tokens: tokens_from_records(rec.tokens),
        entities,
        relations: rec
            .relations
            .into_iter()
            .map(|r| RelationMention {
                id: r.id,
                relation_type: r.relation_type,
                arg1: r.arg1,
                arg2: r.arg2,
            })
            .collect(),
        events: rec
            .events
            .into_iter()
            .map(|v| EventMention {
                id: v.id,
                event_type: v.event_type,
                trigger_span: Span::new(v.trigger_start, v.trigger_end),
                arguments: v
                    .args
                    .into_iter()
                    .map(|a| Argument { entity_id: a.entity, role: a.role })
                    .collect(),
            })
            .collect(),
    })
}

fn sentence_to_record(s: &Sentence) -> SentenceRecord {
    SentenceRecord {
        id: s.id.clone(),
        doc_id: s.doc_id.clone(),
        lang: s.lang,
        text: s.raw_text.clone(),
        tokens: tokens_to_records(&s.tokens),
        entities: s
            .entities
            .iter()
            .map(|e| EntityRecord {
                id: e.id.clone(),
                entity_type: e.entity_type.clone(),
                start: e.full_span.start,
                end: e.full_span.end,
                head_start: e.head_span.map(|h| h.start),
                head_end: e.head_span.map(|h| h.end),
            })
            .collect(),
        relations: s
            .relations
            .iter()
            .map(|r| RelationRecord {
                id: r.id.clone(),
                relation_type: r.relation_type.clone(),
                arg1: r.arg1.clone(),
                arg2: r.arg2.clone(),
            })
            .collect(),
        events: s
            .events
            .iter()
            .map(|v| EventRecord {
                id: v.id.clone(),
                event_type: v.event_type.clone(),
                trigger_start: v.trigger_span.start,
                trigger_end: v.trigger_span.end,
                args: v
                    .arguments
                    .iter()
                    .map(|a| ArgRecord { entity: a.entity_id.clone(), role: a.role.clone() })
                    .collect(),
            })
            .collect(),
    }
}

// serde_json reports missing/unknown fields as "... field `name` ...".
fn field_from_message(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<record>".to_string())
}

/// Parses and validates a corpus document held in memory.
pub fn parse_corpus(text: &str, schema_version: &str) -> Result<Corpus, CorpusError> {
    let header: CorpusHeader<serde_json::Value> = serde_json::from_str(text)?;
    if header.schema_version != schema_version {
        return Err(CorpusError::SchemaVersion {
            found: header.schema_version,
            expected: schema_version.to_string(),
        });
    }
    let mut sentences = Vec::with_capacity(header.sentences.len());
    for (i, value) in header.sentences.into_iter().enumerate() {
        let sid = value
            .get("id")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| format!("#{i}"));
        let record: SentenceRecord = serde_json::from_value(value).map_err(|e| {
            let message = e.to_string();
            CorpusError::Schema {
                sentence: sid.clone(),
                field: field_from_message(&message),
                message,
            }
        })?;
        sentences.push(record_to_sentence(record)?);
    }
    let events_only = match header.ablation.as_deref() {
        None => false,
        Some(EVENTS_ONLY_TAG) => true,
        Some(other) => {
            return Err(CorpusError::Schema {
                sentence: "<header>".into(),
                field: "ablation".into(),
                message: format!("unknown ablation tag {other:?}"),
            })
        }
    };
    let corpus = Corpus {
        ontology: header.ontology,
        sentences,
        split: header.split,
        variant: SpanVariant::Full,
        events_only,
    };
    corpus.validate()?;
    Ok(select_span_variant(
        corpus,
        header.span_variant.unwrap_or_default(),
    ))
}

/// Reads, validates and resolves the span variant of a corpus file.
pub fn load_corpus(path: impl AsRef<Path>, schema_version: &str) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text, schema_version)
}

/// Canonical serialization: fixed field order, two-space indentation,
/// trailing newline.
pub fn to_json_string(corpus: &Corpus) -> String {
    let header = CorpusHeader {
        schema_version: SCHEMA_VERSION.to_string(),
        ontology: corpus.ontology.clone(),
        split: corpus.split,
        span_variant: match corpus.variant {
            SpanVariant::Full => None,
            SpanVariant::Head => Some(SpanVariant::Head),
        },
        ablation: corpus.events_only.then(|| EVENTS_ONLY_TAG.to_string()),
        sentences: corpus.sentences.iter().map(sentence_to_record).collect(),
    };
    let mut text = serde_json::to_string_pretty(&header).expect("corpus serializes");
    text.push('\n');
    text
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    write_atomic(path, to_json_string(corpus).as_bytes()).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}
