use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::Token;

/// Lookahead decoding parameters.
///
/// `window` (W) is the lookahead size, `ngram` (N) the n-gram size and
/// lookback depth, `max_candidates` (G) the verification branch cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub window: usize,
    pub ngram: usize,
    pub max_candidates: usize,
    pub max_tokens: usize,
    pub eos_token: Option<Token>,
    pub seed_pool_from_prompt: bool,
    pub pool_capacity: Option<usize>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self::new(15, 5)
    }
}

impl GenerationConfig {
    /// A config with `G = W`, 64 tokens and no eos.
    pub fn new(window: usize, ngram: usize) -> Self {
        Self {
            window,
            ngram,
            max_candidates: window,
            max_tokens: 64,
            eos_token: None,
            seed_pool_from_prompt: false,
            pool_capacity: None,
        }
    }

    pub fn with_candidates(mut self, g: usize) -> Self {
        self.max_candidates = g;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_eos(mut self, eos: Option<Token>) -> Self {
        self.eos_token = eos;
        self
    }

    pub fn with_prompt_pool(mut self, on: bool) -> Self {
        self.seed_pool_from_prompt = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidConfig("window size W must be >= 1".into()));
        }
        if self.ngram < 2 {
            return Err(Error::InvalidConfig("n-gram size N must be >= 2".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidConfig("max_tokens must be >= 1".into()));
        }
        if self.pool_capacity == Some(0) {
            return Err(Error::InvalidConfig("pool capacity must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-step bookkeeping of a lookahead run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Tokens appended this step, 1..=N.
    pub accepted_count: usize,
    pub candidate_count: usize,
    /// Queries in the step's combined layout.
    pub query_count: usize,
    /// Pool size after this step's insertions.
    pub pool_size: usize,
}
