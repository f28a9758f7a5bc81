//! Verification of disjoint n-gram candidates.
//!
//! Candidates are checked position by position. At each position the
//! surviving candidates share the same verified prefix, so their output
//! distributions for that position coincide and the first survivor's is
//! used. A candidate whose token is accepted keeps every later candidate
//! with the same token; everything else is dropped. If no candidate passes
//! a position, one token is drawn from the (possibly adjusted)
//! distribution and the step ends, so every step makes progress.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling::sample_categorical;
use crate::token::{Distribution, Token};

/// One candidate's speculated suffix with the N output distributions the
/// model produced for it: the base output, then one after each suffix token.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateVerdict {
    pub suffix: Vec<Token>,
    pub dists: Vec<Distribution>,
}

impl CandidateVerdict {
    pub fn new(suffix: Vec<Token>, dists: Vec<Distribution>) -> Result<Self> {
        if dists.len() != suffix.len() + 1 {
            return Err(Error::InvalidCandidate {
                expected: suffix.len() + 1,
                got: dists.len(),
            });
        }
        Ok(Self { suffix, dists })
    }
}

fn check_lengths(candidates: &[CandidateVerdict]) -> Result<usize> {
    let Some(first) = candidates.first() else {
        return Ok(0);
    };
    let len = first.suffix.len();
    for c in candidates {
        if c.suffix.len() != len || c.dists.len() != len + 1 {
            return Err(Error::InvalidCandidate {
                expected: len,
                got: c.suffix.len(),
            });
        }
    }
    Ok(len)
}

fn keep_matching(survivors: &mut Vec<usize>, from: usize, pos: usize, token: Token, candidates: &[CandidateVerdict]) {
    let kept: Vec<usize> = survivors[from..]
        .iter()
        .copied()
        .filter(|&c| candidates[c].suffix[pos] == token)
        .collect();
    *survivors = kept;
}

/// Greedy verification: accepts speculated tokens that equal the argmax.
/// Returns 1..=N tokens, identical to the next greedy tokens of the model.
pub fn verify_greedy(base: &Distribution, candidates: &[CandidateVerdict]) -> Result<Vec<Token>> {
    let suffix_len = check_lengths(candidates)?;
    if candidates.is_empty() {
        return Ok(vec![base.argmax()]);
    }
    let mut survivors: Vec<usize> = (0..candidates.len()).collect();
    let mut out = Vec::with_capacity(suffix_len + 1);
    for pos in 0..suffix_len {
        let target = candidates[survivors[0]].dists[pos].argmax();
        match survivors
            .iter()
            .position(|&c| candidates[c].suffix[pos] == target)
        {
            Some(j) => {
                out.push(target);
                keep_matching(&mut survivors, j, pos, target, candidates);
            }
            None => {
                out.push(target);
                return Ok(out);
            }
        }
    }
    out.push(candidates[survivors[0]].dists[suffix_len].argmax());
    Ok(out)
}

/// Sampling verification for greedily drafted candidates.
///
/// Each trial draws a fresh `r ~ U[0, 1)` and accepts candidate token `s`
/// when `r <= P(s)`. A rejected token has its probability zeroed and the
/// distribution renormalized before the next candidate is tried. A token
/// with zero remaining probability is always rejected. The distributions
/// must already be the ones the sampler draws from.
pub fn verify_sample<R: Rng + ?Sized>(
    base: &Distribution,
    candidates: &[CandidateVerdict],
    rng: &mut R,
) -> Result<Vec<Token>> {
    let suffix_len = check_lengths(candidates)?;
    if candidates.is_empty() {
        return Ok(vec![sample_categorical(base, rng)?]);
    }
    let mut survivors: Vec<usize> = (0..candidates.len()).collect();
    let mut out = Vec::with_capacity(suffix_len + 1);
    for pos in 0..suffix_len {
        let mut probs = candidates[survivors[0]].dists[pos].probs().to_vec();
        let mut accepted = None;
        for (j, &c) in survivors.iter().enumerate() {
            let s = candidates[c].suffix[pos];
            let p = probs[s as usize];
            let r: f64 = rng.random();
            if p > 0.0 && r <= p {
                accepted = Some((j, s));
                break;
            }
            probs[s as usize] = 0.0;
            let mass: f64 = probs.iter().sum();
            if !(mass > 0.0) {
                return Err(Error::DegenerateDistribution);
            }
            probs.iter_mut().for_each(|q| *q /= mass);
        }
        match accepted {
            Some((j, s)) => {
                out.push(s);
                keep_matching(&mut survivors, j, pos, s, candidates);
            }
            None => {
                let residual = Distribution::from_weights(probs)?;
                out.push(sample_categorical(&residual, rng)?);
                return Ok(out);
            }
        }
    }
    out.push(sample_categorical(&candidates[survivors[0]].dists[suffix_len], rng)?);
    Ok(out)
}

/// Exact law of the token emitted at one position by the sampling verifier,
/// given the model distribution `p` and single-token speculations tried in
/// order.
///
/// Follows the accept / reject / renormalize chain symbolically: with
/// `P_1 = p`, the j-th trial accepts `s_j` with probability `P_j(s_j)`,
/// otherwise (probability `r_j = 1 - P_j(s_j)`) `s_j` is zeroed and the rest
/// renormalized into `P_{j+1}`. Once every speculation is rejected the token
/// is drawn from the final distribution. The result equals `p` exactly.
pub fn exact_accept_distribution(p: &Distribution, speculations: &[Token]) -> Distribution {
    let vocab = p.vocab_size();
    let mut q = vec![0.0; vocab];
    let mut current = p.probs().to_vec();
    // probability that every trial so far was rejected
    let mut reach = 1.0;
    for &s in speculations {
        let a = current[s as usize];
        q[s as usize] += reach * a;
        let r = 1.0 - a;
        if r <= 0.0 {
            reach = 0.0;
            break;
        }
        reach *= r;
        current[s as usize] = 0.0;
        for c in current.iter_mut() {
            *c /= r;
        }
    }
    if reach > 0.0 {
        for (qv, c) in q.iter_mut().zip(&current) {
            *qv += reach * c;
        }
    }
    Distribution::from_weights(q).expect("oracle keeps unit mass")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::session_rng;
    use rand::Rng;
    use proptest::prelude::*;

    fn dist(p: &[f64]) -> Distribution {
        Distribution::new(p.to_vec()).unwrap()
    }

    fn one_hot(v: usize, t: Token) -> Distribution {
        Distribution::one_hot(v, t)
    }

    #[test]
    fn no_candidates_greedy() {
        let base = dist(&[0.2, 0.5, 0.3]);
        assert_eq!(verify_greedy(&base, &[]).unwrap(), vec![1]);
    }

    #[test]
    fn second_candidate_wins() {
        // vocab {0,1,2}; model continues 1 -> 2 -> 0 greedily.
        let base = dist(&[0.1, 0.6, 0.3]);
        let after1 = dist(&[0.2, 0.2, 0.6]);
        let after12 = dist(&[0.5, 0.3, 0.2]);
        let first = CandidateVerdict::new(
            vec![0, 2],
            vec![base.clone(), dist(&[0.4, 0.4, 0.2]), dist(&[0.3, 0.3, 0.4])],
        )
        .unwrap();
        let second =
            CandidateVerdict::new(vec![1, 2], vec![base.clone(), after1, after12]).unwrap();
        assert_eq!(verify_greedy(&base, &[first, second]).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn partial_acceptance_stops_with_correction() {
        let base = dist(&[0.1, 0.6, 0.3]);
        let c = CandidateVerdict::new(
            vec![1, 1],
            vec![base.clone(), dist(&[0.7, 0.2, 0.1]), dist(&[0.3, 0.3, 0.4])],
        )
        .unwrap();
        assert_eq!(verify_greedy(&base, &[c]).unwrap(), vec![1, 0]);
    }

    #[test]
    fn one_hot_candidates_always_accept() {
        let base = one_hot(4, 2);
        let c = CandidateVerdict::new(
            vec![2, 3, 1],
            vec![one_hot(4, 2), one_hot(4, 3), one_hot(4, 1), one_hot(4, 0)],
        )
        .unwrap();
        for seed in 0..50 {
            let mut rng = session_rng(seed, 0);
            assert_eq!(
                verify_sample(&base, std::slice::from_ref(&c), &mut rng).unwrap(),
                vec![2, 3, 1, 0]
            );
        }
    }

    #[test]
    fn sample_without_candidates_draws_base() {
        let base = one_hot(3, 1);
        let mut rng = session_rng(0, 0);
        assert_eq!(verify_sample(&base, &[], &mut rng).unwrap(), vec![1]);
    }

    #[test]
    fn mismatched_candidate_lengths() {
        let d = Distribution::uniform(2);
        let a = CandidateVerdict::new(vec![0], vec![d.clone(), d.clone()]).unwrap();
        let b = CandidateVerdict::new(vec![0, 1], vec![d.clone(), d.clone(), d.clone()]).unwrap();
        assert!(verify_greedy(&d, &[a, b]).is_err());
        assert!(CandidateVerdict::new(vec![0], vec![d]).is_err());
    }

    #[test]
    fn oracle_examples() {
        let p = dist(&[0.4, 0.3, 0.2, 0.1]);
        assert!(exact_accept_distribution(&p, &[]).tv_distance(&p) < 1e-12);
        let half = dist(&[0.5, 0.5]);
        let q = exact_accept_distribution(&half, &[0]);
        assert!((q.prob(0) - 0.5).abs() < 1e-15 && (q.prob(1) - 0.5).abs() < 1e-15);
        // certain token speculated: no residual
        let q = exact_accept_distribution(&one_hot(3, 2), &[2, 1]);
        assert_eq!(q, one_hot(3, 2));
    }

    #[test]
    fn sampled_first_token_matches_p() {
        let p = dist(&[0.4, 0.3, 0.2, 0.1]);
        let c = CandidateVerdict::new(vec![2], vec![p.clone(), Distribution::uniform(4)]).unwrap();
        let mut rng = session_rng(99, 0);
        let runs = 100_000;
        let mut counts = [0f64; 4];
        for _ in 0..runs {
            let out = verify_sample(&p, std::slice::from_ref(&c), &mut rng).unwrap();
            counts[out[0] as usize] += 1.0;
        }
        let empirical = Distribution::from_weights(counts.to_vec()).unwrap();
        assert!(empirical.tv_distance(&p) < 0.01, "{:?}", empirical);
    }

    proptest! {
        #[test]
        fn oracle_preserves_p(
            weights in proptest::collection::vec(0.0f64..1.0, 2..8),
            specs in proptest::collection::vec(0u32..8, 0..5),
        ) {
            prop_assume!(weights.iter().sum::<f64>() > 0.0);
            let p = Distribution::from_weights(weights).unwrap();
            let specs: Vec<Token> = specs.into_iter().map(|s| s % p.vocab_size() as Token).collect();
            let q = exact_accept_distribution(&p, &specs);
            for (a, b) in q.probs().iter().zip(p.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let mut rev = specs.clone();
            rev.reverse();
            let q2 = exact_accept_distribution(&p, &rev);
            for (a, b) in q.probs().iter().zip(q2.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn accepted_length_in_range(
            n_cand in 0usize..4,
            ngram in 2usize..5,
            seed in any::<u64>(),
        ) {
            let mut rng = session_rng(seed, 3);
            let vocab = 3;
            let rand_dist = |rng: &mut crate::sampling::SessionRng| {
                Distribution::from_weights((0..vocab).map(|_| rng.random::<f64>() + 0.01).collect()).unwrap()
            };
            let base = rand_dist(&mut rng);
            let cands: Vec<CandidateVerdict> = (0..n_cand)
                .map(|_| {
                    let suffix: Vec<Token> = (0..ngram - 1).map(|_| rng.random_range(0..vocab) as Token).collect();
                    let mut dists = vec![base.clone()];
                    dists.extend((0..ngram - 1).map(|_| rand_dist(&mut rng)));
                    CandidateVerdict::new(suffix, dists).unwrap()
                })
                .collect();
            let g = verify_greedy(&base, &cands).unwrap();
            prop_assert!((1..=ngram).contains(&g.len()));
            prop_assert_eq!(g[0], base.argmax());
            let s = verify_sample(&base, &cands, &mut rng).unwrap();
            prop_assert!((1..=ngram).contains(&s.len()));
        }
    }
}
