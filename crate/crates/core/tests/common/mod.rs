//! Reference models and seeded prompts shared by the integration tests.
#![allow(dead_code)]

use lookahead_core::model::{MarkovModel, TinyTransformer, TransformerDims};
use lookahead_core::sampling::session_rng;
use lookahead_core::Token;
use rand::Rng;

pub const VOCAB: usize = 32;

/// Order-2 Markov model over a phrase-structured synthetic corpus.
pub fn reference_markov() -> MarkovModel {
    let mut rng = session_rng(0xc0de, 0);
    let phrases: Vec<Vec<Token>> = (0..24)
        .map(|_| {
            let len = rng.random_range(3..8);
            (0..len).map(|_| rng.random_range(0..VOCAB) as Token).collect()
        })
        .collect();
    let corpus: Vec<Vec<Token>> = (0..16)
        .map(|_| {
            let mut seq = Vec::new();
            while seq.len() < 300 {
                seq.extend_from_slice(&phrases[rng.random_range(0..phrases.len())]);
            }
            seq
        })
        .collect();
    MarkovModel::train(&corpus, 2, 0.1, VOCAB).unwrap()
}

pub fn reference_transformer() -> TinyTransformer {
    TinyTransformer::new(7, TransformerDims::default()).unwrap()
}

/// `count` prompts of 1..=12 tokens drawn uniformly from `vocab`.
pub fn seeded_prompts(count: usize, vocab: usize, seed: u64) -> Vec<Vec<Token>> {
    let mut rng = session_rng(seed, 0);
    (0..count)
        .map(|_| {
            let len = rng.random_range(1..=12);
            (0..len).map(|_| rng.random_range(0..vocab) as Token).collect()
        })
        .collect()
}

/// Natural-text byte corpus: a handful of sentences in random order.
pub fn sentence_text() -> Vec<u8> {
    const SENTENCES: [&str; 6] = [
        "the quick brown fox jumps over the lazy dog. ",
        "a stitch in time saves nine. ",
        "all work and no play makes jack a dull boy. ",
        "to be or not to be, that is the question. ",
        "the rain in spain stays mainly in the plain. ",
        "she sells sea shells by the sea shore. ",
    ];
    let mut rng = session_rng(0x7e47, 0);
    let mut text = Vec::new();
    for _ in 0..400 {
        text.extend_from_slice(SENTENCES[rng.random_range(0..SENTENCES.len())].as_bytes());
    }
    text
}

/// De Bruijn sequence B(k, n): every length-n word over `0..k` appears
/// exactly once as a cyclic substring.
pub fn de_bruijn(k: usize, n: usize) -> Vec<Token> {
    fn step(t: usize, p: usize, k: usize, n: usize, a: &mut [usize], out: &mut Vec<Token>) {
        if t > n {
            if n.is_multiple_of(p) {
                out.extend(a[1..=p].iter().map(|&x| x as Token));
            }
            return;
        }
        a[t] = a[t - p];
        step(t + 1, p, k, n, a, out);
        for j in a[t - p] + 1..k {
            a[t] = j;
            step(t + 1, t, k, n, a, out);
        }
    }
    let mut a = vec![0; n + 1];
    let mut out = Vec::new();
    step(1, 1, k, n, &mut a, &mut out);
    out
}

/// A repetitive corpus in which every order-3 context is observed with a
/// single successor: the B(5, 3) cycle repeated.
pub fn cyclic_corpus() -> Vec<Token> {
    let cycle = de_bruijn(5, 3);
    cycle.iter().cycle().take(cycle.len() * 20).copied().collect()
}
