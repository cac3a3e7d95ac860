//! Templated English, Chinese and Spanish sentences with nested mentions,
//! double-tagged triggers and relations, annotated in the Rich ERE inventory.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Argument, Corpus, EntityMention, EventMention, Lang, Ontology, RelationMention, Sentence, Span};

const SENTENCES_PER_DOC: usize = 5;

struct Lexicon {
    persons: &'static [&'static str],
    places: &'static [&'static str],
    orgs: &'static [&'static str],
    goods: &'static [&'static str],
    bought: &'static str,
    made: &'static str,
    in_: &'static str,
    attacked: &'static str,
    died: &'static str,
    killed: &'static str,
    officials: &'static str,
    of: &'static str,
    met: &'static str,
    sent: &'static str,
    to: &'static str,
    stop: &'static str,
}

const EN: Lexicon = Lexicon {
    persons: &["John", "Mary", "Ahmed", "Olga", "Kenji", "Sarah", "Tom", "Aisha"],
    places: &["Canada", "USA", "Mexico", "Iraq", "France", "Kenya"],
    orgs: &["Acme", "Globex", "Interpol", "Reuters"],
    goods: &["cars", "phones", "shoes", "rifles", "books"],
    bought: "bought",
    made: "made",
    in_: "in",
    attacked: "attacked",
    died: "died",
    killed: "killed",
    officials: "officials",
    of: "of",
    met: "met",
    sent: "sent",
    to: "to",
    stop: ".",
};

const ES: Lexicon = Lexicon {
    persons: &["Juan", "María", "Pedro", "Lucía", "Diego", "Carmen", "Luis", "Elena"],
    places: &["Chile", "España", "Perú", "Cuba", "Bolivia", "Honduras"],
    orgs: &["Pemex", "Telefónica", "Iberia", "Cemex"],
    goods: &["coches", "teléfonos", "zapatos", "fusiles", "libros"],
    bought: "compró",
    made: "fabricados",
    in_: "en",
    attacked: "atacó",
    died: "murió",
    killed: "mató",
    officials: "funcionarios",
    of: "de",
    met: "recibió",
    sent: "envió",
    to: "a",
    stop: ".",
};

const ZH: Lexicon = Lexicon {
    persons: &["张伟", "李娜", "王芳", "刘洋", "陈静", "杨勇", "赵敏", "黄磊"],
    places: &["中国", "日本", "北京", "上海", "台湾", "香港"],
    orgs: &["华为", "新华社", "联想", "腾讯"],
    goods: &["汽车", "手机", "鞋子", "步枪", "书籍"],
    bought: "购买",
    made: "制造",
    in_: "于",
    attacked: "袭击",
    died: "死亡",
    killed: "杀害",
    officials: "官员",
    of: "的",
    met: "会见",
    sent: "运送",
    to: "到",
    stop: "。",
};

fn lexicon(lang: Lang) -> &'static Lexicon {
    match lang {
        Lang::En => &EN,
        Lang::Es => &ES,
        Lang::Zh => &ZH,
    }
}

#[derive(Default)]
struct Builder {
    tokens: Vec<String>,
    entities: Vec<EntityMention>,
    relations: Vec<RelationMention>,
    events: Vec<EventMention>,
}

impl Builder {
    fn word(&mut self, w: &str) -> Span {
        self.tokens.push(w.to_string());
        Span::new(self.tokens.len() - 1, self.tokens.len())
    }

    fn pos(&self) -> usize {
        self.tokens.len()
    }

    fn entity(&mut self, ty: &str, span: Span, head: Option<Span>) -> String {
        let id = format!("e{}", self.entities.len());
        let mut e = EntityMention::new(id.clone(), ty, span);
        if let Some(h) = head {
            e = e.with_head(h);
        }
        self.entities.push(e);
        id
    }

    fn event(&mut self, ty: &str, trigger: Span, args: &[(&str, &str)]) {
        self.events.push(EventMention {
            id: format!("v{}", self.events.len()),
            event_type: ty.to_string(),
            trigger_span: trigger,
            arguments: args.iter().map(|(e, r)| Argument { entity_id: e.to_string(), role: r.to_string() }).collect(),
        });
    }

    fn relation(&mut self, ty: &str, arg1: &str, arg2: &str) {
        self.relations.push(RelationMention {
            id: format!("r{}", self.relations.len()),
            relation_type: ty.to_string(),
            arg1: arg1.to_string(),
            arg2: arg2.to_string(),
        });
    }
}

fn pick<'a>(items: &'a [&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    items.choose(rng).expect("non-empty lexicon")
}

/// Two different people.
fn two_persons<'a>(lex: &'a Lexicon, rng: &mut ChaCha8Rng) -> (&'a str, &'a str) {
    let a = pick(lex.persons, rng);
    loop {
        let b = pick(lex.persons, rng);
        if b != a {
            return (a, b);
        }
    }
}

/// "P bought GOODS made in G .": the buy trigger carries a payment and a
/// transfer of ownership; the goods mention contains the place and the
/// "made" trigger.
fn buy(b: &mut Builder, lex: &Lexicon, rng: &mut ChaCha8Rng) {
    let p = b.word(pick(lex.persons, rng));
    let bought = b.word(lex.bought);
    let start = b.pos();
    let goods = b.word(pick(lex.goods, rng));
    let made = b.word(lex.made);
    b.word(lex.in_);
    let place = b.word(pick(lex.places, rng));
    let per = b.entity("PER", p, None);
    let com = b.entity("COM", Span::new(start, place.end), Some(goods));
    let gpe = b.entity("GPE", place, None);
    b.event("transfermoney", bought, &[(&per, "giver")]);
    b.event("transferownership", bought, &[(&per, "recipient"), (&com, "thing")]);
    b.event("artifact", made, &[(&com, "thing"), (&gpe, "place")]);
    b.word(lex.stop);
}

/// "P1 attacked P2 in G ." or "in G P1 attacked P2 .".
fn attack(b: &mut Builder, lex: &Lexicon, rng: &mut ChaCha8Rng) {
    let (a, v) = two_persons(lex, rng);
    let place = pick(lex.places, rng);
    let fronted = rng.random_bool(0.5);
    let mut g = None;
    if fronted {
        b.word(lex.in_);
        g = Some(b.word(place));
    }
    let p1 = b.word(a);
    let trg = b.word(lex.attacked);
    let p2 = b.word(v);
    if !fronted {
        b.word(lex.in_);
        g = Some(b.word(place));
    }
    let e1 = b.entity("PER", p1, None);
    let e2 = b.entity("PER", p2, None);
    let e3 = b.entity("GPE", g.expect("place emitted"), None);
    b.event("attack", trg, &[(&e1, "attacker"), (&e2, "target"), (&e3, "place")]);
    b.relation("physical", &e2, &e3);
    b.word(lex.stop);
}

/// "P died in G ." or "in G P died .".
fn die(b: &mut Builder, lex: &Lexicon, rng: &mut ChaCha8Rng) {
    let person = pick(lex.persons, rng);
    let place = pick(lex.places, rng);
    let (p, trg, g) = if rng.random_bool(0.5) {
        b.word(lex.in_);
        let g = b.word(place);
        let p = b.word(person);
        (p, b.word(lex.died), g)
    } else {
        let p = b.word(person);
        let trg = b.word(lex.died);
        b.word(lex.in_);
        (p, trg, b.word(place))
    };
    let e1 = b.entity("PER", p, None);
    let e2 = b.entity("GPE", g, None);
    b.event("die", trg, &[(&e1, "victim"), (&e2, "place")]);
    b.relation("physical", &e1, &e2);
    b.word(lex.stop);
}

/// "P1 killed P2 .": one trigger, an attack and a death.
fn kill(b: &mut Builder, lex: &Lexicon, rng: &mut ChaCha8Rng) {
    let (a, v) = two_persons(lex, rng);
    let p1 = b.word(a);
    let trg = b.word(lex.killed);
    let p2 = b.word(v);
    let e1 = b.entity("PER", p1, None);
    let e2 = b.entity("PER", p2, None);
    b.event("attack", trg, &[(&e1, "attacker"), (&e2, "target")]);
    b.event("die", trg, &[(&e1, "agent"), (&e2, "victim")]);
    b.word(lex.stop);
}

/// "officials of ORG met P in G .": the officials mention contains the
/// organization and is affiliated with it.
fn meet(b: &mut Builder, lex: &Lexicon, rng: &mut ChaCha8Rng) {
    let start = b.pos();
    let head = b.word(lex.officials);
    b.word(lex.of);
    let org = b.word(pick(lex.orgs, rng));
    let trg = b.word(lex.met);
    let p = b.word(pick(lex.persons, rng));
    b.word(lex.in_);
    let g = b.word(pick(lex.places, rng));
    let officials = b.entity("PER", Span::new(start, org.end), Some(head));
    let o = b.entity("ORG", org, None);
    let person = b.entity("PER", p, None);
    let place = b.entity("GPE", g, None);
    b.relation("orgaffiliation", &officials, &o);
    b.event("meet", trg, &[(&officials, "entity"), (&person, "entity"), (&place, "place")]);
    b.word(lex.stop);
}

/// "P sent GOODS to G ."
fn send(b: &mut Builder, lex: &Lexicon, rng: &mut ChaCha8Rng) {
    let p = b.word(pick(lex.persons, rng));
    let trg = b.word(lex.sent);
    let goods = b.word(pick(lex.goods, rng));
    b.word(lex.to);
    let g = b.word(pick(lex.places, rng));
    let e1 = b.entity("PER", p, None);
    let e2 = b.entity("COM", goods, None);
    let e3 = b.entity("GPE", g, None);
    b.event("transportartifact", trg, &[(&e1, "agent"), (&e2, "thing"), (&e3, "destination")]);
    b.word(lex.stop);
}

type Template = fn(&mut Builder, &Lexicon, &mut ChaCha8Rng);

const TEMPLATES: [Template; 6] = [buy, attack, die, kill, meet, send];

fn sentence(id: String, doc_id: String, lang: Lang, rng: &mut ChaCha8Rng) -> Sentence {
    let mut b = Builder::default();
    let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
    template(&mut b, lexicon(lang), rng);
    let mut s = Sentence::from_text(id, doc_id, lang, &b.tokens.join(" "));
    s.entities = b.entities;
    s.relations = b.relations;
    s.events = b.events;
    s
}

/// `n` sentences cycling through `langs`, five per document.
pub fn synthetic_corpus(n: usize, langs: &[Lang], seed: u64) -> Corpus {
    let langs = if langs.is_empty() { &[Lang::En, Lang::Zh, Lang::Es][..] } else { langs };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counters = vec![0usize; langs.len()];
    let sentences = (0..n)
        .map(|i| {
            let k = i % langs.len();
            let lang = langs[k];
            let j = counters[k];
            counters[k] += 1;
            let code = lang.as_str();
            sentence(
                format!("synth-{code}-{j:04}"),
                format!("synth-{code}-doc{:03}", j / SENTENCES_PER_DOC),
                lang,
                &mut rng,
            )
        })
        .collect();
    Corpus::new(Ontology::rich_ere(), sentences)
}
