//! Lookahead decoding for autoregressive language models.
//!
//! The engine keeps a fixed 2D window over the Jacobi iteration trajectory,
//! harvests n-grams from it into a pool, and verifies pool candidates in the
//! same model step that advances the window. Greedy output is identical to
//! plain autoregressive decoding; sampled output keeps the model's
//! distribution.
//!
//! Modules, bottom up:
//!
//! - [`token`], [`pool`], [`sampling`], [`config`]: shared domain types.
//! - [`model`]: the masked multi-query forward contract plus two reference models.
//! - [`layout`]: window geometry, combined step layouts and n-gram collection.
//! - [`verify`]: greedy and sampling verification, and the exact acceptance oracle.
//! - [`decode`]: autoregressive, Jacobi and lookahead orchestrators.
//! - [`lp`]: simulated lookahead parallelism across logical devices.
//! - [`analytics`]: closed-form speedup model, Monte Carlo checks and run metrics.

pub mod analytics;
pub mod config;
pub mod decode;
pub mod error;
pub mod exec;
pub mod layout;
pub mod lp;
pub mod model;
pub mod pool;
pub mod sampling;
pub mod token;
pub mod verify;

pub use config::GenerationConfig;
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use pool::NGramPool;
pub use sampling::{SamplerMode, SamplerSpec};
pub use token::{Distribution, NGram, Token};

/// Engine version recorded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
