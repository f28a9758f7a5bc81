use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lookahead", version, about = "Lookahead decoding engine and speedup analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode every prompt with one mode and write outputs plus a report.
    Decode {
        #[arg(long, value_enum, default_value_t = Mode::Lookahead)]
        mode: Mode,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run autoregressive, Jacobi and lookahead decoding on the same prompts.
    Bench {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Closed-form acceptance curves with Monte Carlo comparisons.
    Analyze(AnalyzeArgs),
    /// Lookahead decoding with every step split across simulated devices.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Autoregressive,
    Jacobi,
    Lookahead,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Autoregressive => "autoregressive",
            Mode::Jacobi => "jacobi",
            Mode::Lookahead => "lookahead",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Markov,
    Transformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Tokenizer {
    Bytes,
    Ints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Exec {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Markov)]
    pub model: ModelKind,
    /// Training corpus for the Markov model.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Load a saved Markov model instead of training one.
    #[arg(long, conflicts_with = "corpus")]
    pub model_file: Option<PathBuf>,
    /// Write the trained Markov model to this path.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    /// Prompts, one per line.
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, value_enum, default_value_t = Tokenizer::Bytes)]
    pub tokenizer: Tokenizer,
    #[arg(long, default_value_t = 256)]
    pub vocab: usize,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    /// Weight seed of the transformer.
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
    #[arg(long, default_value_t = 16)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 32)]
    pub d_ff: usize,
    /// Window size W.
    #[arg(short = 'W', long = "window", default_value_t = 15)]
    pub window: usize,
    /// N-gram size N.
    #[arg(short = 'N', long = "ngram", default_value_t = 5)]
    pub ngram: usize,
    /// Verification candidates G (defaults to W).
    #[arg(short = 'G', long = "candidates")]
    pub candidates: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub max_tokens: usize,
    #[arg(long)]
    pub eos: Option<u32>,
    /// Base seed; prompt `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample at this temperature instead of decoding greedily.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub devices: usize,
    #[arg(long, action = ArgAction::Set, default_value_t = false)]
    pub pool_from_prompt: bool,
    #[arg(long)]
    pub pool_capacity: Option<usize>,
    /// Report path; generated text goes next to it as `<stem>.<mode>.txt`.
    /// Without it the report is printed and no text files are written.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, value_enum, default_value_t = Exec::Parallel)]
    pub exec: Exec,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Acceptance rates, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.425")]
    pub alpha: Vec<f64>,
    /// Speculation lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub gamma: Vec<usize>,
    /// Parallel speculation counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256")]
    pub b: Vec<usize>,
    /// Good-speculation period.
    #[arg(long, default_value_t = 1.0)]
    pub f: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, value_enum, default_value_t = Exec::Parallel)]
    pub exec: Exec,
}
