#![allow(dead_code)]

use mutarjem::model::{NextTokenDistribution, TableModel};
use mutarjem::text::{TokenId, Vocabulary, BOS, EOS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const A: TokenId = TokenId(4);
pub const B: TokenId = TokenId(5);
pub const C: TokenId = TokenId(6);

/// A random model with `vocab_size` total tokens (specials included).
pub fn random_model(seed: u64, vocab_size: usize, order: usize) -> TableModel {
    let words: Vec<String> = (0..vocab_size - 4).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::with_words(words).unwrap();
    TableModel::random(vocab, order, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// `(model, seq_length)` pairs: |V| in 4..=6, seq_length in 2..=5,
/// order in 1..=2.
pub fn model_family(count: usize, seed: u64) -> Vec<(TableModel, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v = rng.random_range(4..=6);
            let order = rng.random_range(1..=2);
            let seq_length = rng.random_range(2..=5);
            (random_model(rng.random(), v, order), seq_length)
        })
        .collect()
}

pub fn dist(len: usize, pairs: &[(TokenId, f64)]) -> NextTokenDistribution {
    let mut w = vec![0.0; len];
    for (id, p) in pairs {
        w[id.index()] = *p;
    }
    NextTokenDistribution::new(w).unwrap()
}

/// One sampled step over {a: 0.5, b: 0.3, c: 0.2}, then EOS with certainty.
pub fn one_step_model() -> TableModel {
    let vocab = Vocabulary::with_words(["a", "b", "c"]).unwrap();
    let n = vocab.len();
    TableModel::builder(vocab, 1)
        .entry(None, &[BOS], dist(n, &[(A, 0.5), (B, 0.3), (C, 0.2)]))
        .default(dist(n, &[(EOS, 1.0)]))
        .build()
        .unwrap()
}

/// True if some n-gram occurs twice in `ids`.
pub fn has_repeated_ngram(ids: &[TokenId], n: usize) -> bool {
    if n == 0 || ids.len() < n {
        return false;
    }
    let grams: Vec<&[TokenId]> = ids.windows(n).collect();
    (0..grams.len()).any(|i| (i + 1..grams.len()).any(|j| grams[i] == grams[j]))
}
