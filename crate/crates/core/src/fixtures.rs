//! Hand-annotated example sentences in the Rich ERE inventory, used by tests
//! and the CLI demo.

use crate::corpus::{
    Argument, Corpus, EntityMention, EventMention, Lang, Ontology, RelationMention, Sentence, Span,
};

fn event(id: &str, event_type: &str, trigger: Span, args: &[(&str, &str)]) -> EventMention {
    EventMention {
        id: id.into(),
        event_type: event_type.into(),
        trigger_span: trigger,
        arguments: args
            .iter()
            .map(|(e, r)| Argument { entity_id: e.to_string(), role: r.to_string() })
            .collect(),
    }
}

/// "I, purposely buy things made in Canada or USA.": "buy" evokes both a
/// money transfer and an ownership transfer; "made" evokes two
/// manufacturing events and sits inside the "things made in ..." mention.
pub fn buy_things_sentence() -> Sentence {
    let mut s = Sentence::from_text("fig1", "ere-doc-1", Lang::En, "I , purposely buy things made in Canada or USA .");
    s.entities = vec![
        EntityMention::new("e-i", "PER", Span::new(0, 1)),
        EntityMention::new("e-things", "COM", Span::new(4, 10)).with_head(Span::new(4, 5)),
        EntityMention::new("e-canada", "GPE", Span::new(7, 8)),
        EntityMention::new("e-usa", "GPE", Span::new(9, 10)),
    ];
    s.events = vec![
        event("v-money", "transfermoney", Span::new(3, 4), &[("e-i", "giver")]),
        event("v-own", "transferownership", Span::new(3, 4), &[("e-i", "recipient"), ("e-things", "thing")]),
        event("v-made-ca", "artifact", Span::new(5, 6), &[("e-things", "thing"), ("e-canada", "place")]),
        event("v-made-us", "artifact", Span::new(5, 6), &[("e-things", "thing"), ("e-usa", "place")]),
    ];
    s
}

/// "School district officials have estimated the cost of rebuilding an
/// intermediate school at $40 million.": two events share the trigger
/// "cost"; the officials are affiliated with the district.
pub fn school_district_sentence() -> Sentence {
    let mut s = Sentence::from_text(
        "fig2",
        "ere-doc-2",
        Lang::En,
        "School district officials have estimated the cost of rebuilding an intermediate school at $40 million .",
    );
    s.entities = vec![
        EntityMention::new("e-district", "ORG", Span::new(0, 2)).with_head(Span::new(1, 2)),
        EntityMention::new("e-officials", "PER", Span::new(0, 3)).with_head(Span::new(2, 3)),
        EntityMention::new("e-school", "FAC", Span::new(9, 12)).with_head(Span::new(11, 12)),
        EntityMention::new("e-money", "MONEY", Span::new(13, 15)),
    ];
    s.relations = vec![RelationMention {
        id: "r-aff".into(),
        relation_type: "orgaffiliation".into(),
        arg1: "e-officials".into(),
        arg2: "e-district".into(),
    }];
    s.events = vec![
        event("v-cost-money", "transfermoney", Span::new(6, 7), &[("e-money", "money"), ("e-school", "beneficiary")]),
        event("v-cost-art", "artifact", Span::new(6, 7), &[("e-school", "thing")]),
    ];
    s
}

pub fn figure_corpus() -> Corpus {
    Corpus::new(Ontology::rich_ere(), vec![buy_things_sentence(), school_district_sentence()])
}
