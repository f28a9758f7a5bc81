//! Laplace-smoothed order-k Markov model over token ids.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::{check_tokens, LanguageModel};
use crate::error::{Error, Result};
use crate::layout::StepLayout;
use crate::token::{Distribution, Token};

const FILE_MAGIC: &str = "lookahead-markov v1";

#[derive(Debug, Clone, Default, PartialEq)]
struct Counts {
    total: u64,
    next: HashMap<Token, u64>,
}

impl Counts {
    fn add(&mut self, token: Token, n: u64) {
        self.total += n;
        *self.next.entry(token).or_default() += n;
    }
}

/// `P(t | c) = (count(c, t) + λ) / (count(c) + λ·V)` for a seen k-token
/// context `c`. Unseen contexts, and histories shorter than k, fall back to
/// the smoothed unigram marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    order: usize,
    lambda: f64,
    vocab_size: usize,
    contexts: HashMap<Vec<Token>, Counts>,
    unigram: Counts,
}

impl MarkovModel {
    pub fn train(corpus: &[Vec<Token>], order: usize, lambda: f64, vocab_size: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidConfig("Markov order must be >= 1".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("smoothing {lambda} must be positive")));
        }
        if vocab_size == 0 {
            return Err(Error::InvalidConfig("empty vocabulary".into()));
        }
        let mut contexts: HashMap<Vec<Token>, Counts> = HashMap::new();
        let mut unigram = Counts::default();
        for seq in corpus {
            if let Some(&t) = seq.iter().find(|&&t| t as usize >= vocab_size) {
                return Err(Error::TokenOutOfRange { token: t, vocab_size });
            }
            for &t in seq {
                unigram.add(t, 1);
            }
            for w in seq.windows(order + 1) {
                contexts
                    .entry(w[..order].to_vec())
                    .or_default()
                    .add(w[order], 1);
            }
        }
        Ok(Self {
            order,
            lambda,
            vocab_size,
            contexts,
            unigram,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Next-token distribution given the most recent tokens (oldest first).
    pub fn distribution_for(&self, history: &[Token]) -> Distribution {
        let counts = if history.len() >= self.order {
            self.contexts.get(&history[history.len() - self.order..])
        } else {
            None
        };
        let counts = counts.unwrap_or(&self.unigram);
        let denom = counts.total as f64 + self.lambda * self.vocab_size as f64;
        let mut probs = vec![self.lambda / denom; self.vocab_size];
        for (&t, &c) in &counts.next {
            probs[t as usize] = (c as f64 + self.lambda) / denom;
        }
        Distribution::from_weights(probs).expect("smoothed counts are positive")
    }

    /// Serializes the count tables to the versioned text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FILE_MAGIC}");
        let _ = writeln!(out, "order {}", self.order);
        let _ = writeln!(out, "lambda {:?}", self.lambda);
        let _ = writeln!(out, "vocab {}", self.vocab_size);
        let _ = writeln!(out, "unigram {}", counts_line(&self.unigram));
        let sorted: BTreeMap<&Vec<Token>, &Counts> = self.contexts.iter().collect();
        for (ctx, counts) in sorted {
            let ctx: Vec<String> = ctx.iter().map(Token::to_string).collect();
            let _ = writeln!(out, "ctx {} | {}", ctx.join(" "), counts_line(counts));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::ModelFile(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim() == FILE_MAGIC => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated header"))?;
            line.strip_prefix(key)
                .map(|v| (n, v.trim().to_string()))
                .ok_or_else(|| bad(n, &format!("expected `{key}`")))
        };
        let (n, order) = header("order")?;
        let order: usize = order.parse().map_err(|_| bad(n, "bad order"))?;
        let (n, lambda) = header("lambda")?;
        let lambda: f64 = lambda.parse().map_err(|_| bad(n, "bad lambda"))?;
        let (n, vocab) = header("vocab")?;
        let vocab_size: usize = vocab.parse().map_err(|_| bad(n, "bad vocab"))?;
        let (n, uni) = header("unigram")?;
        let unigram = parse_counts(&uni, vocab_size).map_err(|m| bad(n, &m))?;

        let mut model = Self::train(&[], order.max(1), lambda, vocab_size.max(1))
            .map_err(|e| Error::ModelFile(e.to_string()))?;
        if order == 0 || vocab_size == 0 {
            return Err(bad(2, "order and vocab must be positive"));
        }
        model.unigram = unigram;
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let rest = line.strip_prefix("ctx ").ok_or_else(|| bad(n, "expected `ctx`"))?;
            let (ctx, counts) = rest.split_once('|').ok_or_else(|| bad(n, "missing `|`"))?;
            let ctx: Vec<Token> = ctx
                .split_whitespace()
                .map(|t| t.parse::<Token>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(n, "bad context token"))?;
            if ctx.len() != order || ctx.iter().any(|&t| t as usize >= vocab_size) {
                return Err(bad(n, "bad context"));
            }
            let counts = parse_counts(counts, vocab_size).map_err(|m| bad(n, &m))?;
            model.contexts.insert(ctx, counts);
        }
        Ok(model)
    }
}

fn counts_line(counts: &Counts) -> String {
    let sorted: BTreeMap<&Token, &u64> = counts.next.iter().collect();
    let mut out = counts.total.to_string();
    for (t, c) in sorted {
        let _ = write!(out, " {t}:{c}");
    }
    out
}

fn parse_counts(s: &str, vocab_size: usize) -> std::result::Result<Counts, String> {
    let mut fields = s.split_whitespace();
    let total: u64 = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or("bad total")?;
    let mut counts = Counts::default();
    for f in fields {
        let (t, c) = f.split_once(':').ok_or("bad count entry")?;
        let t: Token = t.parse().map_err(|_| "bad token")?;
        let c: u64 = c.parse().map_err(|_| "bad count")?;
        if t as usize >= vocab_size {
            return Err(format!("token {t} out of range"));
        }
        counts.add(t, c);
    }
    if counts.total != total {
        return Err("total does not match entries".into());
    }
    Ok(counts)
}

impl LanguageModel for MarkovModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn forward(&self, context: &[Token], layout: &StepLayout) -> Result<Vec<Distribution>> {
        check_tokens(self.vocab_size, context, layout)?;
        let queries = layout.queries();
        let mut history = Vec::with_capacity(self.order);
        Ok((0..layout.len())
            .map(|q| {
                // Walk back along the consecutive-position chain ending at q.
                history.clear();
                let chain = layout.context_chain(q);
                let mut expected = queries[q].rel_pos;
                for &i in chain.iter().rev() {
                    if history.len() == self.order || queries[i].rel_pos != expected {
                        break;
                    }
                    history.push(queries[i].token);
                    expected -= 1;
                }
                if expected == 0 && history.len() < self.order {
                    history.push(queries[0].token);
                    let need = self.order - history.len();
                    history.extend(context.iter().rev().take(need));
                }
                history.reverse();
                self.distribution_for(&history)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{QueryRole, QueryToken};

    fn ab_corpus() -> Vec<Vec<Token>> {
        vec![(0..40).map(|i| (i % 2) as Token).collect()]
    }

    #[test]
    fn closed_form_probabilities() {
        let m = MarkovModel::train(&ab_corpus(), 1, 0.01, 2).unwrap();
        // 20 occurrences of a->b (a at even positions 0..38), 0 of a->a
        let p = m.next_distribution(&[0]).unwrap();
        assert!((p.prob(1) - 20.01 / 20.02).abs() < 1e-12);
        assert!(p.prob(1) > 0.9);
    }

    #[test]
    fn empty_corpus_is_uniform() {
        let m = MarkovModel::train(&[], 2, 0.5, 4).unwrap();
        let d = m.next_distribution(&[1, 2, 3]).unwrap();
        for &p in d.probs() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn distributions_normalized() {
        let corpus = vec![vec![3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5]];
        let m = MarkovModel::train(&corpus, 2, 0.1, 10).unwrap();
        for ctx in [vec![3], vec![1, 4], vec![5, 3], vec![9, 9, 9]] {
            let d = m.next_distribution(&ctx).unwrap();
            let mass: f64 = d.probs().iter().sum();
            assert!((mass - 1.0).abs() < 1e-9);
            assert!(d.probs().iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn gap_in_chain_falls_back_to_marginal() {
        let corpus = vec![vec![0, 1, 2, 0, 1, 2, 0, 1, 2]];
        let m = MarkovModel::train(&corpus, 1, 0.1, 3).unwrap();
        // query at rel_pos 2 that sees nothing at rel_pos 1
        let layout = StepLayout::new(vec![
            QueryToken { token: 0, rel_pos: 0, visible: vec![], role: QueryRole::Confirmed },
            QueryToken { token: 1, rel_pos: 2, visible: vec![], role: QueryRole::Other },
        ])
        .unwrap();
        let out = m.forward(&[], &layout).unwrap();
        // order 1 only needs the query itself
        assert_eq!(out[1], m.distribution_for(&[1]));

        let m2 = MarkovModel::train(&corpus, 2, 0.1, 3).unwrap();
        let out = m2.forward(&[], &layout).unwrap();
        assert_eq!(out[1], m2.distribution_for(&[]));
    }

    #[test]
    fn text_round_trip() {
        let corpus = vec![vec![3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5]];
        let m = MarkovModel::train(&corpus, 2, 0.1, 10).unwrap();
        let back = MarkovModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(MarkovModel::from_text("garbage").is_err());
        let broken = m.to_text().replace("ctx 1 4", "ctx 1 44");
        assert!(MarkovModel::from_text(&broken).is_err());
    }

    #[test]
    fn bad_training_args() {
        assert!(MarkovModel::train(&[], 0, 0.1, 4).is_err());
        assert!(MarkovModel::train(&[], 1, 0.0, 4).is_err());
        assert!(MarkovModel::train(&[vec![9]], 1, 0.1, 4).is_err());
    }
}
