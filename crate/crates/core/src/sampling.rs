//! Token sampling: greedy argmax or temperature / top-k / top-p sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::{Distribution, Token};

/// Seeded generator used for every stochastic decision in a session.
pub type SessionRng = ChaCha8Rng;

/// A session generator on its own stream, so independent consumers of one
/// seed (window refills, sampling) never share draws.
pub fn session_rng(seed: u64, stream: u64) -> SessionRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    Greedy,
    Temperature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub mode: SamplerMode,
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
    pub seed: u64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self::greedy()
    }
}

impl SamplerSpec {
    pub fn greedy() -> Self {
        Self {
            mode: SamplerMode::Greedy,
            temperature: 1.0,
            top_k: None,
            top_p: None,
            seed: 0,
        }
    }

    pub fn temperature(temperature: f64, seed: u64) -> Self {
        Self {
            mode: SamplerMode::Temperature,
            temperature,
            top_k: None,
            top_p: None,
            seed,
        }
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = Some(k);
        self
    }

    pub fn with_top_p(mut self, p: f64) -> Self {
        self.top_p = Some(p);
        self
    }

    pub fn is_greedy(&self) -> bool {
        self.mode == SamplerMode::Greedy
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_greedy() {
            return Ok(());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.top_k == Some(0) {
            return Err(Error::InvalidConfig("top_k must be positive".into()));
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidConfig(format!("top_p {p} not in (0, 1]")));
            }
        }
        Ok(())
    }

    /// The distribution this sampler actually draws from.
    ///
    /// Greedy collapses to a one-hot on the argmax. Temperature mode scales,
    /// then truncates to the top k, then to the top-p nucleus, and
    /// renormalizes.
    pub fn transform(&self, d: &Distribution) -> Result<Distribution> {
        if self.is_greedy() {
            return Ok(Distribution::one_hot(d.vocab_size(), d.argmax()));
        }
        let inv_t = 1.0 / self.temperature;
        let mut weights: Vec<f64> = if inv_t == 1.0 {
            d.probs().to_vec()
        } else {
            // p^(1/T) equals softmax(logits / T) up to normalization.
            let max = d.probs().iter().copied().fold(0.0, f64::max);
            d.probs()
                .iter()
                .map(|&p| if p > 0.0 { (p / max).powf(inv_t) } else { 0.0 })
                .collect()
        };

        let needs_order = self.top_k.is_some() || self.top_p.is_some_and(|p| p < 1.0);
        if needs_order {
            let mut order: Vec<usize> = (0..weights.len()).collect();
            // stable: equal weights keep ascending id order
            order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
            let mut keep = order.len();
            if let Some(k) = self.top_k {
                keep = keep.min(k);
            }
            if let Some(p) = self.top_p.filter(|p| *p < 1.0) {
                let mass: f64 = order[..keep].iter().map(|&i| weights[i]).sum();
                let mut acc = 0.0;
                let mut nucleus = 0;
                for &i in &order[..keep] {
                    acc += weights[i];
                    nucleus += 1;
                    if acc >= p * mass {
                        break;
                    }
                }
                keep = nucleus;
            }
            for &i in &order[keep..] {
                weights[i] = 0.0;
            }
        }
        Distribution::from_weights(weights)
    }
}

/// Draws one token from `d` by inverse CDF on a single uniform draw.
pub fn sample_categorical<R: Rng + ?Sized>(d: &Distribution, rng: &mut R) -> Result<Token> {
    let mass: f64 = d.probs().iter().sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let u = rng.random::<f64>() * mass;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in d.probs().iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_nonzero = i;
            if u < acc {
                return Ok(i as Token);
            }
        }
    }
    Ok(last_nonzero as Token)
}

/// Samples the next token from `d` under `spec`.
///
/// Greedy mode is a pure function of `d` and does not touch `rng`.
pub fn sample_token<R: Rng + ?Sized>(
    d: &Distribution,
    spec: &SamplerSpec,
    rng: &mut R,
) -> Result<Token> {
    if spec.is_greedy() {
        return Ok(d.argmax());
    }
    let truncated = spec.transform(d)?;
    sample_categorical(&truncated, rng)
}
