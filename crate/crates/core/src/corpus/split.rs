use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, CorpusError, SplitTag};

/// Train/dev/test proportions of the ACE05 English split, by sentences.
pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.90, 0.045, 0.055];

/// Number of documents per split: largest-remainder rounding, then every
/// split with a non-zero ratio is topped up to at least one document.
fn allocate(docs: usize, ratios: [f64; 3]) -> Result<[usize; 3], CorpusError> {
    let wanted = ratios.iter().filter(|r| **r > 0.0).count();
    if docs < wanted {
        return Err(CorpusError::TooFewDocuments { docs, splits: wanted });
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * docs as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut left = docs - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    for i in 0..3 {
        if ratios[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    Ok(counts)
}

/// Random document-level split into train, dev and test corpora.
pub fn split_corpus(
    corpus: &Corpus,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0)
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(CorpusError::BadRatios(ratios));
    }
    let mut docs = corpus.doc_ids();
    let counts = allocate(docs.len(), ratios)?;
    docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut assignment: HashMap<&str, usize> = HashMap::new();
    let mut cursor = 0;
    for (part, &count) in counts.iter().enumerate() {
        for doc in &docs[cursor..cursor + count] {
            assignment.insert(doc.as_str(), part);
        }
        cursor += count;
    }

    let mut parts: [Vec<_>; 3] = Default::default();
    for s in &corpus.sentences {
        parts[assignment[s.doc_id.as_str()]].push(s.clone());
    }
    let [train, dev, test] = parts;
    let tagged = |sentences, tag| {
        let mut c = corpus.with_sentences(sentences);
        c.split = Some(tag);
        c
    };
    Ok((
        tagged(train, SplitTag::Train),
        tagged(dev, SplitTag::Dev),
        tagged(test, SplitTag::Test),
    ))
}
