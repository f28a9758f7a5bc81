//! Tokens, next-token distributions and n-grams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A token id. Valid ids are `< vocab_size` of the active model.
pub type Token = u32;

/// Tolerance on the total mass of a [`Distribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Wraps `probs`, checking non-negativity and unit mass.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty vocabulary".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("bad entry {p}")));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("mass {mass} != 1")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegenerateDistribution);
        }
        Ok(Self(weights.into_iter().map(|w| w / mass).collect()))
    }

    /// Numerically stable softmax over logits.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Self(exps.into_iter().map(|e| e / sum).collect())
    }

    pub fn uniform(vocab_size: usize) -> Self {
        Self(vec![1.0 / vocab_size as f64; vocab_size])
    }

    pub fn one_hot(vocab_size: usize, token: Token) -> Self {
        let mut probs = vec![0.0; vocab_size];
        probs[token as usize] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.0
    }

    pub fn vocab_size(&self) -> usize {
        self.0.len()
    }

    pub fn prob(&self, token: Token) -> f64 {
        self.0.get(token as usize).copied().unwrap_or(0.0)
    }

    /// The most likely token, ties broken toward the lowest id.
    pub fn argmax(&self) -> Token {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best as Token
    }

    /// Total-variation distance to `other`.
    pub fn tv_distance(&self, other: &Distribution) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// A fixed-length token sequence harvested from the lookahead window.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NGram(Vec<Token>);

impl NGram {
    /// Builds an n-gram, requiring exactly `n` tokens.
    pub fn new(tokens: Vec<Token>, n: usize) -> Result<Self> {
        if tokens.len() != n || n < 2 {
            return Err(Error::InvalidNGram {
                expected: n,
                got: tokens.len(),
            });
        }
        Ok(Self(tokens))
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn leading(&self) -> Token {
        self.0[0]
    }

    pub fn suffix(&self) -> &[Token] {
        &self.0[1..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(Distribution::uniform(4).argmax(), 0);
        let d = Distribution::new(vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(d.argmax(), 1);
        let d = Distribution::new(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(Distribution::new(vec![0.5, 0.4]).is_err());
        assert!(Distribution::new(vec![1.5, -0.5]).is_err());
        assert!(Distribution::new(vec![]).is_err());
        assert_eq!(
            Distribution::from_weights(vec![0.0, 0.0]),
            Err(Error::DegenerateDistribution)
        );
    }

    #[test]
    fn softmax_sums_to_one() {
        let d = Distribution::softmax(&[1000.0, 999.0, -5.0]);
        let mass: f64 = d.probs().iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(d.argmax(), 0);
    }

    #[test]
    fn ngram_length_checked() {
        assert!(NGram::new(vec![1, 2, 3], 3).is_ok());
        assert_eq!(
            NGram::new(vec![1, 2], 3),
            Err(Error::InvalidNGram {
                expected: 3,
                got: 2
            })
        );
    }
}
