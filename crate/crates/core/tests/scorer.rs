mod common;

use iegraph::corpus::Ontology;
use iegraph::score::{score, sentence_counts, Counts};
use common::oracles::{brute, cap_arguments, keys};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn counts_equal_exhaustive_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ontology = Ontology::rich_ere();
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
        assert_eq!(sentence_counts(&pred, &gold).0, expected, "trial {i}");
    }
}

#[test]
fn corpus_scores_are_micro_averaged() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ontology = Ontology::rich_ere();
    let gold = common::random_corpus(&mut rng, &ontology, 30, 4);
    let pred = gold.with_sentences(gold.sentences.iter().map(|s| common::perturb(&mut rng, s, &ontology)).collect());
    let r = score(&pred, &gold).unwrap();
    let mut total = Counts::default();
    for (p, g) in pred.sentences.iter().zip(&gold.sentences) {
        total += sentence_counts(p, g).0[5];
    }
    assert_eq!(r.arg_c.counts, total);
    let p = total.matched as f64 / total.predicted as f64;
    let rc = total.matched as f64 / total.gold as f64;
    assert!((r.arg_c.f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
    let self_score = score(&gold, &gold).unwrap();
    assert_eq!(self_score.trg_c.f1, 1.0);
}
