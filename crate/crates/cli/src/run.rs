use std::fs;
use std::path::Path;

use anyhow::Context;
use lookahead_core::analytics::{flops_proxy, RunMetrics};
use lookahead_core::decode::{decode_autoregressive, decode_jacobi, decode_lookahead};
use lookahead_core::lp::{decode_lookahead_parallel, CommStats};
use lookahead_core::model::{
    tokenize, LanguageModel, MarkovModel, TinyTransformer, TokenizerScheme, TransformerDims,
};
use lookahead_core::{ExecMode, GenerationConfig, SamplerSpec, Token};

use crate::args::{Exec, Mode, ModelKind, RunArgs, Tokenizer};
use crate::Failure;

impl From<Exec> for ExecMode {
    fn from(e: Exec) -> Self {
        match e {
            Exec::Sequential => ExecMode::Sequential,
            Exec::Parallel => ExecMode::Parallel,
        }
    }
}

pub fn scheme(t: Tokenizer) -> TokenizerScheme {
    match t {
        Tokenizer::Bytes => TokenizerScheme::Bytes,
        Tokenizer::Ints => TokenizerScheme::Ints,
    }
}

/// Everything a decoding subcommand needs, validated.
pub struct Session {
    pub args: RunArgs,
    pub model: Box<dyn LanguageModel>,
    pub prompts: Vec<Vec<Token>>,
    pub config: GenerationConfig,
    pub sampler: SamplerSpec,
}

/// Outcome of decoding one prompt.
#[derive(Debug, Clone)]
pub struct PromptRecord {
    pub id: usize,
    pub prompt_tokens: usize,
    pub tokens: Vec<Token>,
    pub steps: usize,
    pub query_counts: Vec<usize>,
    pub acceptance_histogram: Option<Vec<usize>>,
    pub comm: Option<CommTotals>,
}

impl PromptRecord {
    pub fn compression(&self) -> f64 {
        self.tokens.len() as f64 / self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommTotals {
    pub tokens_synchronized: usize,
    pub sync_events: usize,
    pub redundant_queries: usize,
}

impl CommTotals {
    fn from_steps(steps: &[CommStats]) -> Self {
        steps.iter().fold(Self::default(), |acc, s| Self {
            tokens_synchronized: acc.tokens_synchronized + s.tokens_synchronized,
            sync_events: acc.sync_events + s.sync_events,
            redundant_queries: acc.redundant_queries + s.redundant_queries,
        })
    }

    pub fn add(self, other: Self) -> Self {
        Self {
            tokens_synchronized: self.tokens_synchronized + other.tokens_synchronized,
            sync_events: self.sync_events + other.sync_events,
            redundant_queries: self.redundant_queries + other.redundant_queries,
        }
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

impl Session {
    pub fn open(args: RunArgs, simulate: bool) -> Result<Self, Failure> {
        let config = GenerationConfig::new(args.window, args.ngram)
            .with_candidates(args.candidates.unwrap_or(args.window))
            .with_max_tokens(args.max_tokens)
            .with_eos(args.eos)
            .with_prompt_pool(args.pool_from_prompt);
        let config = GenerationConfig {
            pool_capacity: args.pool_capacity,
            ..config
        };
        config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        if simulate && !(1..=args.window).contains(&args.devices) {
            return Err(Failure::Usage(format!(
                "--devices must be in 1..={} (the window size)",
                args.window
            )));
        }
        let sampler = match args.temperature {
            None => SamplerSpec::greedy(),
            Some(t) => {
                let mut s = SamplerSpec::temperature(t, args.seed);
                if let Some(k) = args.top_k {
                    s = s.with_top_k(k);
                }
                if let Some(p) = args.top_p {
                    s = s.with_top_p(p);
                }
                s
            }
        };
        let sampler = SamplerSpec {
            seed: args.seed,
            ..sampler
        };
        sampler.validate().map_err(|e| Failure::Usage(e.to_string()))?;

        let model = build_model(&args)?;
        let text = read(&args.prompts)?;
        let mut lines: Vec<&[u8]> = text.split(|&b| b == b'\n').collect();
        if lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        let prompts = lines
            .into_iter()
            .enumerate()
            .map(|(i, line)| {
                let line = line.strip_suffix(b"\r").unwrap_or(line);
                let tokens = tokenize(line, scheme(args.tokenizer), model.vocab_size())
                    .with_context(|| format!("prompt line {}", i + 1))?;
                anyhow::ensure!(!tokens.is_empty(), "prompt line {} is empty", i + 1);
                Ok(tokens)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        if prompts.is_empty() {
            return Err(anyhow::anyhow!("no prompts in {}", args.prompts.display()).into());
        }
        Ok(Self {
            args,
            model,
            prompts,
            config,
            sampler,
        })
    }

    fn prompt_sampler(&self, id: usize) -> SamplerSpec {
        SamplerSpec {
            seed: self.sampler.seed.wrapping_add(id as u64),
            ..self.sampler.clone()
        }
    }

    pub fn flops_proxy(&self) -> usize {
        flops_proxy(self.config.window, self.config.ngram, self.config.max_candidates)
    }

    /// Decodes every prompt; rows come back in prompt order.
    pub fn decode(&self, mode: Mode, devices: Option<usize>) -> anyhow::Result<Vec<PromptRecord>> {
        let exec = ExecMode::from(self.args.exec);
        let ids: Vec<usize> = (0..self.prompts.len()).collect();
        exec.map(&ids, |&id| self.decode_one(id, mode, devices, exec))
            .into_iter()
            .collect()
    }

    fn decode_one(
        &self,
        id: usize,
        mode: Mode,
        devices: Option<usize>,
        exec: ExecMode,
    ) -> anyhow::Result<PromptRecord> {
        let prompt = &self.prompts[id];
        let sampler = self.prompt_sampler(id);
        let model = self.model.as_ref();
        let record = |tokens: Vec<Token>, steps, query_counts| PromptRecord {
            id,
            prompt_tokens: prompt.len(),
            tokens,
            steps,
            query_counts,
            acceptance_histogram: None,
            comm: None,
        };
        let ctx = || format!("prompt {id}");
        Ok(match (mode, devices) {
            (Mode::Autoregressive, _) => {
                let tokens = decode_autoregressive(model, prompt, &sampler, self.config.max_tokens, self.config.eos_token)
                    .with_context(ctx)?;
                let n = tokens.len();
                record(tokens, n, vec![1; n])
            }
            (Mode::Jacobi, _) => {
                let m = self.config.max_tokens;
                let out = decode_jacobi(model, prompt, m, sampler.seed).with_context(ctx)?;
                let mut tokens = out.tokens;
                if let Some(i) = self.config.eos_token.and_then(|e| tokens.iter().position(|&t| t == e)) {
                    tokens.truncate(i + 1);
                }
                record(tokens, out.iterations, vec![m; out.iterations])
            }
            (Mode::Lookahead, None) => {
                let run = decode_lookahead(model, prompt, &self.config, &sampler).with_context(ctx)?;
                self.lookahead_record(record(run.tokens, run.steps.len(), Vec::new()), &run.steps, None)?
            }
            (Mode::Lookahead, Some(d)) => {
                let run = decode_lookahead_parallel(model, prompt, &self.config, &sampler, d, exec)
                    .with_context(ctx)?;
                let comm = CommTotals::from_steps(&run.comm);
                self.lookahead_record(record(run.tokens, run.steps.len(), Vec::new()), &run.steps, Some(comm))?
            }
        })
    }

    fn lookahead_record(
        &self,
        mut rec: PromptRecord,
        steps: &[lookahead_core::config::StepRecord],
        comm: Option<CommTotals>,
    ) -> anyhow::Result<PromptRecord> {
        let metrics = RunMetrics::from_steps(steps, self.config.ngram)?;
        rec.query_counts = steps.iter().map(|s| s.query_count).collect();
        rec.acceptance_histogram = Some(metrics.acceptance_histogram);
        rec.comm = comm;
        Ok(rec)
    }
}

fn build_model(args: &RunArgs) -> Result<Box<dyn LanguageModel>, Failure> {
    match args.model {
        ModelKind::Markov => {
            if let Some(path) = &args.model_file {
                let text = String::from_utf8(read(path)?).context("model file is not UTF-8")?;
                let model = MarkovModel::from_text(&text).with_context(|| format!("loading {}", path.display()))?;
                return Ok(Box::new(model));
            }
            let Some(path) = &args.corpus else {
                return Err(Failure::Usage("--model markov needs --corpus or --model-file".into()));
            };
            if args.order == 0 || !(args.lambda > 0.0) {
                return Err(Failure::Usage("--order must be >= 1 and --lambda > 0".into()));
            }
            let corpus = tokenize(&read(path)?, scheme(args.tokenizer), args.vocab)
                .with_context(|| format!("tokenizing {}", path.display()))?;
            let model = MarkovModel::train(&[corpus], args.order, args.lambda, args.vocab)
                .context("training Markov model")?;
            if let Some(out) = &args.save_model {
                fs::write(out, model.to_text()).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(Box::new(model))
        }
        ModelKind::Transformer => {
            let dims = TransformerDims {
                vocab_size: args.vocab,
                d_model: args.d_model,
                n_layers: args.layers,
                n_heads: args.heads,
                d_ff: args.d_ff,
            };
            let model = TinyTransformer::new(args.model_seed, dims).map_err(|e| Failure::Usage(e.to_string()))?;
            Ok(Box::new(model))
        }
    }
}
