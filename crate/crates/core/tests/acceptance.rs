//! Acceptance checks. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line even when the suite is run without `--nocapture`.
//!
//! A criterion listed in `KNOWN_FAILURES` still prints FAIL but does not fail
//! the run; anything else that fails exits nonzero.

mod common;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use common::numeric::*;
use common::oracles::{brute, cap_arguments, keys, scan};
use iegraph::corpus::{load_corpus, select_span_variant, Corpus, CorpusStats, Ontology, Sentence, Span, SpanVariant, SCHEMA_VERSION};
use iegraph::embed::HashEmbeddings;
use iegraph::fixtures::{buy_things_sentence, figure_corpus};
use iegraph::graph::{decode, encode, event_projection, validate, Annotations, NodeKind};
use iegraph::nesting::{count_nesting, NestingReport};
use iegraph::nn::layers::{Fnn, TransformerLayer};
use iegraph::nn::ops::{self, BiaffineParams};
use iegraph::nn::{ParamGroup, ParamStore, Tape};
use iegraph::parser::{decode_predictions, LabelSpace, ParserConfig};
use iegraph::score::{score, sentence_counts, Counts};
use iegraph::synth::synthetic_corpus;
use iegraph::train::{predict_corpus, train, TrainConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILURES: &[(u32, &str)] = &[];

/// Directory holding `<dataset>/<lang>/<split>.json` converted from the
/// licensed releases; criterion 9 is skipped without it.
const DATA_ENV: &str = "IEGRAPH_LICENSED_DATA";

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

// Training setup shared by the overfit, ablation and double-tagging checks:
// default optimiser settings, narrower layers, a short warmup and 200 epochs.
fn harness_config(seed: u64, ablation: bool) -> TrainConfig {
    let mut cfg = TrainConfig { epochs: 200, warmup_steps: 8, decoder_learning_rate: 1e-3, seed, ablation_no_ent_rel: ablation, ..Default::default() };
    cfg.parser.hidden_size = 64;
    cfg.parser.hidden_size_ff = 128;
    cfg.parser.hidden_size_anchor = 64;
    cfg.parser.hidden_size_edge_label = 64;
    cfg.parser.hidden_size_edge_presence = 64;
    cfg
}

fn harness_provider() -> HashEmbeddings {
    HashEmbeddings::new(1, 4, 64)
}

/// 50 trilingual training sentences and 10 held out.
fn harness_corpora() -> (Corpus, Corpus) {
    let all = synthetic_corpus(60, &[], 7);
    (all.with_sentences(all.sentences[..50].to_vec()), all.with_sentences(all.sentences[50..].to_vec()))
}

fn codec_round_trip() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut bad = 0;
    let (mut double, mut nested) = (0, 0);
    for i in 0..1000 {
        let ontology = if i % 2 == 0 { Ontology::rich_ere() } else { Ontology::ace05() };
        let s = common::random_sentence(&mut rng, &ontology, &format!("s{i}"), 5);
        let spans: Vec<Span> = s.events.iter().map(|e| e.trigger_span).collect();
        double += usize::from((1..spans.len()).any(|k| spans[..k].contains(&spans[k])));
        nested += usize::from(scan(&s)[1] > 0);
        let ok = encode(&s)
            .ok()
            .filter(|g| validate(g, &ontology).is_empty())
            .and_then(|g| decode(&g, &ontology, s.len()).ok())
            .is_some_and(|back| back.canonical() == Annotations::of(&s).canonical());
        bad += usize::from(!ok);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        bad == 0 && secs < 30.0 && double > 0 && nested > 0,
        format!("1000 sentences ({double} double-tagged, {nested} with nested entities), {bad} mismatches, {secs:.2} s"),
    )
}

fn constraint_totality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut violations = 0;
    let mut undecodable = 0;
    for trial in 0..1000 {
        let ontology = if trial % 2 == 0 { Ontology::rich_ere() } else { Ontology::ace05() };
        let labels = LabelSpace::new(&ontology, trial % 3 == 0);
        let t = rng.random_range(1..8);
        let q = 2 * t;
        let n_sel = rng.random_range(0..=q);
        let out = common::random_output(&mut rng, &labels, q, t, n_sel, 4.0);
        let config = ParserConfig {
            anchor_threshold: rng.random_range(0.05..0.95),
            edge_threshold: rng.random_range(0.05..0.95),
            generic_entities: labels.generic_entities,
            ..Default::default()
        };
        let g = decode_predictions("s", &out, &labels, &config);
        violations += validate(&g, &ontology).len();
        undecodable += usize::from(decode(&g, &ontology, t).is_err());
    }
    check(violations == 0 && undecodable == 0, format!("1000 fuzzed score sets, {violations} violations, {undecodable} undecodable"))
}

fn numerical_core() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut oracle: f64 = 0.0;
    for _ in 0..20 {
        let (n1, n2, d1, d2, k) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..4));
        let x1 = random((n1, d1), &mut rng);
        let x2 = random((n2, d2), &mut rng);
        let p = BiaffineParams { u: random((d1, k * d2), &mut rng), w: random((d1 + d2, k), &mut rng), b: random((1, k), &mut rng) };
        let bil = ops::bilinear(x1.view(), x2.view(), p.u.view(), k).unwrap();
        oracle = oracle.max(max_abs_diff(&bil, &bilinear_oracle(&x1, &x2, &p)));
        let bia = ops::biaffine(x1.view(), x2.view(), &p).unwrap();
        oracle = oracle.max(max_abs_diff(&bia, &biaffine_oracle(&x1, &x2, &p)));

        let layers = rng.random_range(1..4);
        let alignment: Vec<Vec<usize>> = {
            let mut next = 0;
            (0..rng.random_range(1..5))
                .map(|_| {
                    let len = rng.random_range(1..4);
                    next += len;
                    (next - len..next).collect()
                })
                .collect()
        };
        let b = random_bundle(layers, d1, alignment, &mut rng);
        let att: Vec<f64> = (0..d1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..layers).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (pooled, _) = ops::pool_forward(&b, Array1::from_vec(att.clone()).view(), Array1::from_vec(w.clone()).view()).unwrap();
        oracle = oracle.max(max_abs_diff(&pooled, &pool_oracle(&b, &att, &w)));

        let mut store = ParamStore::new();
        let fnn = Fnn::new(&mut store, "fnn", d1, d2, &mut rng);
        *store.value_mut(fnn.linear.bias) = random((1, d2), &mut rng);
        let x = random((n1, d1), &mut rng) * 3.0;
        let mut tape = Tape::new(&store);
        let xv = tape.constant(x.clone());
        let out = fnn.forward(&mut tape, xv);
        let expected = fnn_oracle(&x, store.value(fnn.linear.weight), store.value(fnn.linear.bias));
        oracle = oracle.max(max_abs_diff(&tape.value(out).to_owned(), &expected));
    }

    let mut module: f64 = 0.0;
    {
        let mut store = ParamStore::new();
        let x1 = store.add("x1", ParamGroup::Decoder, random((3, 4), &mut rng));
        let x2 = store.add("x2", ParamGroup::Decoder, random((2, 3), &mut rng));
        let u = store.add("u", ParamGroup::Decoder, random((4, 2 * 3), &mut rng));
        let w = store.add("w", ParamGroup::Decoder, random((7, 2), &mut rng));
        let b = store.add("b", ParamGroup::Decoder, random((1, 2), &mut rng));
        let c = random((6, 2), &mut rng);
        module = module.max(fd_check(&mut store, |t| {
            let v = [x1, x2, u, w, b].map(|p| t.param(p));
            let out = t.biaffine(v[0], v[1], v[2], v[3], v[4]);
            weighted_sum(t, out, c.clone())
        }));
    }
    {
        let bundle = Arc::new(random_bundle(3, 4, vec![vec![0, 1], vec![2], vec![3, 4, 5]], &mut rng));
        let mut store = ParamStore::new();
        let att = store.add("att", ParamGroup::Encoder, random((4, 1), &mut rng));
        let lw = store.add("lw", ParamGroup::Encoder, random((1, 3), &mut rng));
        let c = random((3, 4), &mut rng);
        module = module.max(fd_check(&mut store, |t| {
            let (a, w) = (t.param(att), t.param(lw));
            let out = t.pool(bundle.clone(), a, w).unwrap();
            weighted_sum(t, out, c.clone())
        }));
    }
    {
        let mut store = ParamStore::new();
        let x = store.add("x", ParamGroup::Decoder, random((4, 5), &mut rng));
        let fnn = Fnn::new(&mut store, "fnn", 5, 3, &mut rng);
        *store.value_mut(fnn.linear.bias) = random((1, 3), &mut rng);
        module = module.max(fd_check(&mut store, |t| {
            let xv = t.param(x);
            let h = fnn.forward(t, xv);
            t.softmax_ce(h, vec![Some(0), Some(2), None, Some(1)], 0.25)
        }));
    }
    {
        let mut store = ParamStore::new();
        let x = store.add("x", ParamGroup::Decoder, random((3, 4), &mut rng));
        let layer = TransformerLayer::new(&mut store, "enc", 4, 8, 2, 0.0, 0.0, &mut rng);
        let targets = Array2::from_shape_fn((3, 4), |(i, j)| ((i + j) % 2) as f64);
        let mask = Array2::from_shape_fn((3, 4), |(i, _)| if i == 1 { 0.0 } else { 1.0 });
        module = module.max(fd_check(&mut store, |t| {
            let xv = t.param(x);
            let h = layer.forward(t, xv, &mut None);
            t.bce_logits(h, targets.clone(), mask.clone(), 0.5)
        }));
    }

    let (e2e, checked) = end_to_end_fd();
    check(
        oracle < 1e-6 && module < 1e-4 && e2e < 1e-3,
        format!("oracle max |diff| {oracle:.1e} (< 1e-6), module FD rel {module:.1e} (< 1e-4), end-to-end FD rel {e2e:.1e} over {checked} scalars (< 1e-3)"),
    )
}

fn scorer_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let ontology = Ontology::rich_ere();
    let mut bad = 0;
    for i in 0..500 {
        let mut gold = common::random_sentence(&mut rng, &ontology, &format!("s{i}"), 4);
        cap_arguments(&mut gold);
        let mut pred = common::perturb(&mut rng, &gold, &ontology);
        cap_arguments(&mut pred);
        let (pe, pr, pt, pa) = keys(&pred);
        let (ge, gr, gt, ga) = keys(&gold);
        let expected = [
            brute(pe, ge),
            brute(pr, gr),
            brute(pt.iter().map(|t| t.0).collect(), gt.iter().map(|t| t.0).collect()),
            brute(pt, gt),
            brute(pa.iter().map(|a| (a.0.clone(), a.1)).collect(), ga.iter().map(|a| (a.0.clone(), a.1)).collect()),
            brute(pa, ga),
        ];
        bad += usize::from(sentence_counts(&pred, &gold).0 != expected);
    }
    check(bad == 0, format!("500 pairs, {bad} disagree with exhaustive matching"))
}

fn nesting_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let ontology = Ontology::rich_ere();
    let (mut bad, mut non_monotone) = (0, 0);
    for _ in 0..200 {
        let full = common::random_corpus(&mut rng, &ontology, 8, 5);
        let head = select_span_variant(full.clone(), SpanVariant::Head);
        for corpus in [&full, &head] {
            let r = count_nesting(corpus);
            let mut expected = [0; 3];
            let mut nested = 0;
            for s in &corpus.sentences {
                let c = scan(s);
                nested += usize::from(c.iter().sum::<usize>() > 0);
                for k in 0..3 {
                    expected[k] += c[k];
                }
            }
            bad += usize::from([r.trg_trg, r.ent_ent, r.trg_ent] != expected || r.nested_sents != nested || r.all_sents != corpus.len());
        }
        let (f, h) = (count_nesting(&full), count_nesting(&head));
        non_monotone += usize::from(h.ent_ent > f.ent_ent || h.trg_ent > f.trg_ent);
    }
    check(bad == 0 && non_monotone == 0, format!("200 corpora, {bad} disagree with the all-pairs scan, {non_monotone} monotonicity breaks"))
}

fn overfit() -> Verdict {
    let (corpus, _) = harness_corpora();
    let provider = harness_provider();
    let start = Instant::now();
    let out = train(&harness_config(0, false), &[corpus.clone()], None, &provider, None).unwrap();
    let pred = predict_corpus(&out.model, &corpus, &provider).unwrap();
    let r = score(&pred, &corpus).unwrap();
    let secs = start.elapsed().as_secs_f64();
    check(
        r.trg_c.f1 >= 0.95 && r.arg_c.f1 >= 0.95 && secs < 900.0,
        format!("{} sentences, train Trg-C {:.3} Arg-C {:.3} (>= 0.95), {secs:.0} s (< 900 s)", corpus.len(), r.trg_c.f1, r.arg_c.f1),
    )
}

fn ablation_direction() -> Verdict {
    let (corpus, held_out) = harness_corpora();
    let provider = harness_provider();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..10 {
        let f1 = |ablation: bool| {
            let out = train(&harness_config(seed, ablation), &[corpus.clone()], None, &provider, None).unwrap();
            let pred = predict_corpus(&out.model, &held_out, &provider).unwrap();
            score(&pred, &held_out).unwrap().arg_c.f1
        };
        let (joint, ablated) = (f1(false), f1(true));
        wins += usize::from(joint >= ablated);
        rows.push(format!("{joint:.2}/{ablated:.2}"));
    }
    check(wins >= 7, format!("joint >= ablated held-out Arg-C in {wins}/10 seeds (>= 7) [joint/ablated: {}]", rows.join(" ")))
}

fn counts(c: Counts) -> (usize, usize, usize) {
    (c.gold, c.predicted, c.matched)
}

fn double_tagging() -> Verdict {
    let gold = buy_things_sentence();
    let ontology = Ontology::rich_ere();
    let trigger = gold.events[0].trigger_span;

    let g = encode(&gold).unwrap();
    let co_anchored = g.nodes.iter().filter(|n| n.kind == NodeKind::Trigger && n.span() == Some(trigger)).count();
    let representable = validate(&g, &ontology).is_empty()
        && co_anchored == 2
        && decode(&g, &ontology, gold.len()).unwrap().canonical() == Annotations::of(&gold).canonical();

    // Overfit on the harness corpus plus the two figure sentences.
    let (synth, _) = harness_corpora();
    let provider = harness_provider();
    let figures = figure_corpus();
    let out = train(&harness_config(0, false), &[synth, figures.clone()], None, &provider, None).unwrap();
    let pred = predict_corpus(&out.model, &figures, &provider).unwrap();
    let learned = pred
        .sentences
        .iter()
        .zip(&figures.sentences)
        .all(|(p, g)| event_projection(&Annotations::of(p)) == event_projection(&Annotations::of(g)));

    // One of the two "buy" events missing, then mislabelled as a second
    // money transfer.
    let mut missing = gold.clone();
    missing.events.retain(|e| e.id != "v-own");
    let mut relabelled = gold.clone();
    relabelled.events[1].event_type = "transfermoney".into();
    let one = |s: &Sentence| Corpus::new(ontology.clone(), vec![s.clone()]);
    let r_self = score(&one(&gold), &one(&gold)).unwrap();
    let r_missing = score(&one(&missing), &one(&gold)).unwrap();
    let r_relabelled = score(&one(&relabelled), &one(&gold)).unwrap();
    let scored = [r_self.trg_i.f1, r_self.trg_c.f1, r_self.arg_i.f1, r_self.arg_c.f1] == [1.0; 4]
        && counts(r_missing.trg_i.counts) == (4, 3, 3)
        && counts(r_missing.trg_c.counts) == (4, 3, 3)
        && counts(r_missing.arg_c.counts) == (7, 5, 5)
        && counts(r_relabelled.trg_i.counts) == (4, 4, 4)
        && counts(r_relabelled.trg_c.counts) == (4, 4, 3)
        && counts(r_relabelled.arg_i.counts) == (7, 7, 5)
        && counts(r_relabelled.arg_c.counts) == (7, 7, 5);

    check(
        representable && learned && scored,
        format!("representable {representable} ({co_anchored} co-anchored triggers), recovered by overfitting {learned}, scored correctly {scored}"),
    )
}

struct StatsRow(&'static str, &'static str, &'static str, [usize; 5]);
struct NestingRow(&'static str, SpanVariant, &'static str, [usize; 5]);

const STATS_TABLE: &[StatsRow] = &[
    StatsRow("ace05", "en", "train", [19371, 4419, 6609, 47546, 7172]),
    StatsRow("ace05", "en", "dev", [896, 468, 759, 3421, 729]),
    StatsRow("ace05", "en", "test", [777, 461, 735, 3828, 822]),
    StatsRow("ace05", "zh", "train", [6706, 2928, 5576, 29674, 8003]),
    StatsRow("ace05", "zh", "dev", [511, 217, 406, 2246, 601]),
    StatsRow("ace05", "zh", "test", [521, 190, 336, 2389, 686]),
    StatsRow("rich_ere", "en", "train", [12421, 8368, 15197, 34611, 7498]),
    StatsRow("rich_ere", "en", "dev", [692, 459, 797, 1998, 366]),
    StatsRow("rich_ere", "en", "test", [745, 566, 1195, 2286, 544]),
    StatsRow("rich_ere", "zh", "train", [9253, 5325, 9066, 26128, 6044]),
    StatsRow("rich_ere", "zh", "dev", [541, 366, 522, 1609, 379]),
    StatsRow("rich_ere", "zh", "test", [483, 439, 776, 2022, 502]),
    StatsRow("rich_ere", "es", "train", [8292, 5013, 8575, 20347, 4140]),
    StatsRow("rich_ere", "es", "dev", [383, 254, 447, 1068, 199]),
    StatsRow("rich_ere", "es", "test", [598, 334, 609, 1438, 287]),
];

// Trg-Trg, Ent-Ent, Trg-Ent, nested sentences, all sentences.
const NESTING_TABLE: &[NestingRow] = &[
    NestingRow("ace05", SpanVariant::Head, "en", [0, 0, 4, 4, 21044]),
    NestingRow("ace05", SpanVariant::Head, "zh", [0, 4, 9, 12, 7738]),
    NestingRow("ace05", SpanVariant::Full, "en", [0, 13387, 716, 5315, 21044]),
    NestingRow("ace05", SpanVariant::Full, "zh", [0, 10797, 252, 3748, 7738]),
    NestingRow("rich_ere", SpanVariant::Head, "en", [1066, 1329, 244, 1529, 13858]),
    NestingRow("rich_ere", SpanVariant::Head, "zh", [301, 1383, 284, 1266, 10277]),
    NestingRow("rich_ere", SpanVariant::Head, "es", [485, 523, 97, 712, 9273]),
    NestingRow("rich_ere", SpanVariant::Full, "en", [1063, 9453, 1517, 4277, 13858]),
    NestingRow("rich_ere", SpanVariant::Full, "zh", [301, 7303, 622, 2993, 10277]),
    NestingRow("rich_ere", SpanVariant::Full, "es", [485, 5526, 854, 2614, 9273]),
];

fn split_path(root: &Path, dataset: &str, lang: &str, split: &str) -> PathBuf {
    root.join(dataset).join(lang).join(format!("{split}.json"))
}

fn licensed_data() -> Verdict {
    let Some(root) = std::env::var_os(DATA_ENV).map(PathBuf::from) else {
        return Verdict::Skip(format!("{DATA_ENV} not set"));
    };
    let mut mismatches = Vec::new();
    for StatsRow(dataset, lang, split, want) in STATS_TABLE {
        let c = match load_corpus(split_path(&root, dataset, lang, split), SCHEMA_VERSION) {
            Ok(c) => c,
            Err(e) => return Verdict::Fail(format!("{dataset}/{lang}/{split}: {e}")),
        };
        let CorpusStats { sentences, events, roles, entities, relations } = iegraph::corpus::corpus_stats(&c);
        let got = [sentences, events, roles, entities, relations];
        if got != *want {
            mismatches.push(format!("stats {dataset}/{lang}/{split} {got:?} != {want:?}"));
        }
    }
    for NestingRow(dataset, variant, lang, want) in NESTING_TABLE {
        let mut total = NestingReport::default();
        for split in ["train", "dev", "test"] {
            let c = load_corpus(split_path(&root, dataset, lang, split), SCHEMA_VERSION).unwrap();
            total = total + count_nesting(&select_span_variant(c, *variant));
        }
        let sents = [total.nested_sents, total.all_sents] == want[3..];
        let pairs = [total.trg_trg, total.ent_ent, total.trg_ent] == want[..3];
        let involved = [total.involved.trg_trg, total.involved.ent_ent, total.involved.trg_ent] == want[..3];
        if !(sents && (pairs || involved)) {
            mismatches.push(format!("nesting {dataset}/{variant:?}/{lang} {total:?} != {want:?}"));
        }
    }
    check(mismatches.is_empty(), if mismatches.is_empty() { "all rows exact".into() } else { mismatches.join("; ") })
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 9] = [
        (1, "codec round-trip", codec_round_trip),
        (2, "constraint totality", constraint_totality),
        (3, "numerical core", numerical_core),
        (4, "scorer oracle equivalence", scorer_oracle),
        (5, "nesting oracle equivalence", nesting_oracle),
        (6, "overfit harness", overfit),
        (7, "ablation direction", ablation_direction),
        (8, "double-tagging", double_tagging),
        (9, "licensed data tables", licensed_data),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        match run() {
            Verdict::Pass(d) => println!("criterion {id} {name}: PASS {d}"),
            Verdict::Skip(d) => println!("criterion {id} {name}: SKIP {d}"),
            Verdict::Fail(d) => match known {
                Some(why) => println!("criterion {id} {name}: FAIL (known: {why}) {d}"),
                None => {
                    println!("criterion {id} {name}: FAIL {d}");
                    unexpected.push(id);
                }
            },
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
