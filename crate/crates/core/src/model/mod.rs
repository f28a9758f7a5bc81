//! The pluggable model contract and two deterministic reference models.
//!
//! A model evaluates a whole [`StepLayout`] in one call: every query gets
//! the next-token distribution conditioned on the confirmed context, query
//! 0, the queries it can see, and itself. Implementations must be pure, so
//! two calls with equal arguments return bit-identical results.

mod markov;
mod tokenizer;
mod transformer;

pub use markov::MarkovModel;
pub use tokenizer::{detokenize, tokenize, TokenizerScheme};
pub use transformer::{TinyTransformer, TransformerDims};

use crate::error::{Error, Result};
use crate::layout::StepLayout;
use crate::token::{Distribution, Token};

pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Evaluates `layout` on top of `context`, the confirmed tokens that
    /// precede query 0. Returns one distribution per query, in order.
    fn forward(&self, context: &[Token], layout: &StepLayout) -> Result<Vec<Distribution>>;

    /// Next-token distribution after `sequence` (non-empty).
    fn next_distribution(&self, sequence: &[Token]) -> Result<Distribution> {
        let (&last, context) = sequence
            .split_last()
            .ok_or_else(|| Error::InvalidConfig("empty sequence".into()))?;
        let mut out = self.forward(context, &StepLayout::single(last))?;
        Ok(out.swap_remove(0))
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn forward(&self, context: &[Token], layout: &StepLayout) -> Result<Vec<Distribution>> {
        (**self).forward(context, layout)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn forward(&self, context: &[Token], layout: &StepLayout) -> Result<Vec<Distribution>> {
        (**self).forward(context, layout)
    }
}

pub(crate) fn check_tokens(
    vocab_size: usize,
    context: &[Token],
    layout: &StepLayout,
) -> Result<()> {
    let bad = context
        .iter()
        .copied()
        .chain(layout.queries().iter().map(|q| q.token))
        .find(|&t| t as usize >= vocab_size);
    match bad {
        Some(token) => Err(Error::TokenOutOfRange { token, vocab_size }),
        None => Ok(()),
    }
}
