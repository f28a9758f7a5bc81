//! Decoding orchestrators: autoregressive, Jacobi and lookahead.

use serde::{Deserialize, Serialize};

use crate::config::{GenerationConfig, StepRecord};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::layout::{LookaheadLayout, StepLayout, Window2D};
use crate::model::LanguageModel;
use crate::pool::NGramPool;
use crate::sampling::{sample_token, session_rng, SamplerSpec, SessionRng};
use crate::token::{Distribution, Token};
use crate::verify::{verify_greedy, verify_sample, CandidateVerdict};

/// Generator streams derived from one seed.
pub const STREAM_SAMPLE: u64 = 1;
pub const STREAM_WINDOW: u64 = 2;
pub const STREAM_JACOBI: u64 = 3;

fn check_prompt(prompt: &[Token], vocab_size: usize) -> Result<()> {
    if prompt.is_empty() {
        return Err(Error::InvalidConfig("prompt must not be empty".into()));
    }
    match prompt.iter().find(|&&t| t as usize >= vocab_size) {
        Some(&token) => Err(Error::TokenOutOfRange { token, vocab_size }),
        None => Ok(()),
    }
}

/// Plain one-token-per-step decoding.
pub fn decode_autoregressive<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    sampler: &SamplerSpec,
    max_tokens: usize,
    eos: Option<Token>,
) -> Result<Vec<Token>> {
    check_prompt(prompt, model.vocab_size())?;
    sampler.validate()?;
    let mut rng = session_rng(sampler.seed, STREAM_SAMPLE);
    let mut seq = prompt.to_vec();
    let mut out = Vec::with_capacity(max_tokens);
    while out.len() < max_tokens {
        let d = model.next_distribution(&seq)?;
        let t = sample_token(&d, sampler, &mut rng)?;
        seq.push(t);
        out.push(t);
        if Some(t) == eos {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JacobiTrajectory {
    /// `y^0` (the random guess) through the final iterate.
    pub iterates: Vec<Vec<Token>>,
}

impl JacobiTrajectory {
    /// Length of the prefix that already agrees with `target` at each iterate.
    pub fn converged_prefix_lengths(&self, target: &[Token]) -> Vec<usize> {
        self.iterates
            .iter()
            .map(|y| y.iter().zip(target).take_while(|(a, b)| a == b).count())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JacobiOutput {
    pub tokens: Vec<Token>,
    pub trajectory: JacobiTrajectory,
    pub iterations: usize,
}

/// Greedy Jacobi decoding of `m` tokens.
///
/// Each iteration feeds the previous iterate as one triangular chain and
/// replaces every position with the argmax of its output. Stops at a fixed
/// point or after `m` iterations, by which time the result equals greedy
/// autoregressive output.
pub fn decode_jacobi<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    m: usize,
    seed: u64,
) -> Result<JacobiOutput> {
    check_prompt(prompt, model.vocab_size())?;
    if m == 0 {
        return Err(Error::InvalidConfig("Jacobi length m must be >= 1".into()));
    }
    let vocab = model.vocab_size();
    let mut rng = session_rng(seed, STREAM_JACOBI);
    let mut y: Vec<Token> = (0..m)
        .map(|_| rand::Rng::random_range(&mut rng, 0..vocab) as Token)
        .collect();
    let (&last, context) = prompt.split_last().expect("non-empty prompt");
    let mut iterates = vec![y.clone()];
    let mut iterations = 0;
    for _ in 0..m {
        let layout = StepLayout::chain(last, &y[..m - 1]);
        let outputs = model.forward(context, &layout)?;
        let next: Vec<Token> = outputs.iter().map(Distribution::argmax).collect();
        iterations += 1;
        let fixed = next == y;
        y = next;
        iterates.push(y.clone());
        if fixed {
            break;
        }
    }
    Ok(JacobiOutput {
        tokens: y,
        trajectory: JacobiTrajectory { iterates },
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Tokens appended to the output this step (1..=N).
    pub accepted: Vec<Token>,
    /// Greedy outputs of the window's top level, one per column.
    pub new_top: Vec<Token>,
    pub candidate_count: usize,
    pub query_count: usize,
}

/// A lookahead decoding session.
pub struct DecodeState<'m, M: LanguageModel + ?Sized> {
    model: &'m M,
    prefix: Vec<Token>,
    prompt_len: usize,
    window: Window2D,
    pool: NGramPool,
    config: GenerationConfig,
    sampler: SamplerSpec,
    window_rng: SessionRng,
    sample_rng: SessionRng,
    steps: Vec<StepRecord>,
    finished: bool,
}

impl<'m, M: LanguageModel + ?Sized> DecodeState<'m, M> {
    pub fn new(
        model: &'m M,
        prompt: &[Token],
        config: GenerationConfig,
        sampler: SamplerSpec,
    ) -> Result<Self> {
        config.validate()?;
        sampler.validate()?;
        check_prompt(prompt, model.vocab_size())?;
        let mut window_rng = session_rng(sampler.seed, STREAM_WINDOW);
        let window = Window2D::init(config.window, config.ngram, model.vocab_size(), &mut window_rng);
        let mut pool = NGramPool::with_capacity(config.ngram, config.pool_capacity);
        if config.seed_pool_from_prompt {
            pool.seed_from_prompt(prompt);
        }
        Ok(Self {
            model,
            prefix: prompt.to_vec(),
            prompt_len: prompt.len(),
            window,
            pool,
            sample_rng: session_rng(sampler.seed, STREAM_SAMPLE),
            config,
            sampler,
            window_rng,
            steps: Vec::new(),
            finished: false,
        })
    }

    pub fn model(&self) -> &'m M {
        self.model
    }

    pub fn generated(&self) -> &[Token] {
        &self.prefix[self.prompt_len..]
    }

    pub fn window(&self) -> &Window2D {
        &self.window
    }

    pub fn pool(&self) -> &NGramPool {
        &self.pool
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.finished
    }

    /// Confirmed tokens before the step's query 0.
    pub fn context(&self) -> &[Token] {
        &self.prefix[..self.prefix.len() - 1]
    }

    /// Looks up candidates and builds this step's layout.
    pub fn plan_step(&self) -> Result<LookaheadLayout> {
        let last = *self.prefix.last().expect("prefix is never empty");
        let candidates = self.pool.lookup(last, self.config.max_candidates);
        self.window.build_layout(last, &candidates)
    }

    /// Verifies, appends accepted tokens, harvests n-grams and advances the
    /// window, given the model outputs for `plan`.
    pub fn finish_step(&mut self, plan: &LookaheadLayout, outputs: &[Distribution]) -> Result<StepOutcome> {
        if outputs.len() != plan.query_count() {
            return Err(Error::InvalidLayout(format!(
                "{} outputs for {} queries",
                outputs.len(),
                plan.query_count()
            )));
        }
        let new_top = plan.new_top(outputs);
        let verdicts: Vec<CandidateVerdict> = plan
            .candidates
            .iter()
            .cloned()
            .zip(plan.candidate_distributions(outputs))
            .map(|(suffix, dists)| CandidateVerdict { suffix, dists })
            .collect();

        let mut accepted = if self.sampler.is_greedy() {
            verify_greedy(&outputs[0], &verdicts)?
        } else {
            let transformed = verdicts
                .into_iter()
                .map(|v| {
                    let dists = v
                        .dists
                        .iter()
                        .map(|d| self.sampler.transform(d))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(CandidateVerdict { suffix: v.suffix, dists })
                })
                .collect::<Result<Vec<_>>>()?;
            let base = self.sampler.transform(&outputs[0])?;
            verify_sample(&base, &transformed, &mut self.sample_rng)?
        };

        let remaining = self.config.max_tokens - self.generated().len();
        accepted.truncate(remaining);
        if let Some(eos) = self.config.eos_token {
            if let Some(i) = accepted.iter().position(|&t| t == eos) {
                accepted.truncate(i + 1);
                self.finished = true;
            }
        }

        let last = *self.prefix.last().expect("prefix is never empty");
        for gram in self.window.collect_ngrams(last, &new_top) {
            self.pool.insert(gram)?;
        }
        self.window.update(&new_top, accepted.len(), &mut self.window_rng);
        self.prefix.extend_from_slice(&accepted);
        if self.generated().len() >= self.config.max_tokens {
            self.finished = true;
        }

        self.steps.push(StepRecord {
            accepted_count: accepted.len(),
            candidate_count: plan.candidates.len(),
            query_count: plan.query_count(),
            pool_size: self.pool.len(),
        });
        Ok(StepOutcome {
            accepted,
            new_top,
            candidate_count: plan.candidates.len(),
            query_count: plan.query_count(),
        })
    }

    /// One lookahead step: a single forward pass over the combined layout.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let plan = self.plan_step()?;
        let outputs = self.model.forward(self.context(), &plan.layout)?;
        self.finish_step(&plan, &outputs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookaheadRun {
    pub tokens: Vec<Token>,
    pub steps: Vec<StepRecord>,
}

impl LookaheadRun {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }
}

/// Lookahead decoding until `max_tokens` or eos.
pub fn decode_lookahead<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    config: &GenerationConfig,
    sampler: &SamplerSpec,
) -> Result<LookaheadRun> {
    let mut state = DecodeState::new(model, prompt, config.clone(), sampler.clone())?;
    while !state.is_done() {
        state.step()?;
    }
    Ok(LookaheadRun {
        tokens: state.generated().to_vec(),
        steps: state.steps,
    })
}

/// Lookahead decoding of independent prompts. Prompt `i` uses the sampler
/// seed plus `i`, so results are the same under either execution mode.
pub fn decode_lookahead_batch<M: LanguageModel + ?Sized>(
    model: &M,
    prompts: &[Vec<Token>],
    config: &GenerationConfig,
    sampler: &SamplerSpec,
    exec: ExecMode,
) -> Result<Vec<LookaheadRun>> {
    let indexed: Vec<(u64, &Vec<Token>)> = (0u64..).zip(prompts).collect();
    exec.map(&indexed, |&(i, prompt)| {
        let sampler = SamplerSpec {
            seed: sampler.seed.wrapping_add(i),
            ..sampler.clone()
        };
        decode_lookahead(model, prompt, config, &sampler)
    })
    .into_iter()
    .collect()
}
