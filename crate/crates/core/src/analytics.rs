//! Speedup analytics: the expected-acceptance closed forms, their Monte
//! Carlo check, the scaling model for step compression, and run metrics.

use rand::distr::{Bernoulli, Distribution as _};
use serde::{Deserialize, Serialize};

use crate::config::{GenerationConfig, StepRecord};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::sampling::session_rng;

/// Parameters of the acceptance model: per-token acceptance rate `alpha`,
/// speculation length `gamma`, parallel speculations `b`, and the period
/// `f` between good speculation steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceParams {
    pub alpha: f64,
    pub gamma: usize,
    pub b: usize,
    pub f: f64,
}

impl AcceptanceParams {
    pub fn new(alpha: f64, gamma: usize, b: usize, f: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if gamma == 0 || b == 0 {
            return Err(Error::Domain("gamma and b must be >= 1".into()));
        }
        check_f(f)?;
        Ok(Self { alpha, gamma, b, f })
    }

    /// Maps an engine config onto the model: `b = G`, `gamma = N - 1`.
    pub fn from_config(config: &GenerationConfig, alpha: f64, f: f64) -> Result<Self> {
        Self::new(alpha, config.ngram - 1, config.max_candidates, f)
    }

    pub fn expected_accepted(&self) -> f64 {
        batched_unchecked(self.alpha, self.gamma, self.b)
    }

    pub fn predicted_compression(&self) -> f64 {
        (self.f - 1.0 + self.expected_accepted()) / self.f
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha {alpha} outside [0, 1)")))
    }
}

fn check_f(f: f64) -> Result<()> {
    if f >= 1.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("f {f} must be >= 1")))
    }
}

/// Expected tokens per step with one speculation of length `gamma`:
/// `(1 - alpha^(gamma+1)) / (1 - alpha)`.
pub fn expected_accepted_single(alpha: f64, gamma: usize) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha.powi(gamma as i32 + 1)) / (1.0 - alpha))
}

/// Expected tokens per step with `b` independent speculations:
/// `(gamma + 1) - sum_{i=1..gamma} (1 - alpha^i)^b`.
pub fn expected_accepted_batched(alpha: f64, gamma: usize, b: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if b == 0 {
        return Err(Error::Domain("b must be >= 1".into()));
    }
    Ok(batched_unchecked(alpha, gamma, b))
}

fn batched_unchecked(alpha: f64, gamma: usize, b: usize) -> f64 {
    let tail: f64 = (1..=gamma)
        .map(|i| (1.0 - alpha.powi(i as i32)).powi(b as i32))
        .sum();
    (gamma as f64 + 1.0) - tail
}

/// Step compression `(f - 1 + E) / f`, one good step every `f` steps.
pub fn predicted_compression(alpha: f64, f: f64, gamma: usize, b: usize) -> Result<f64> {
    check_f(f)?;
    let e = expected_accepted_batched(alpha, gamma, b)?;
    Ok((f - 1.0 + e) / f)
}

/// Generated tokens per decoding step.
pub fn compression_ratio(tokens: usize, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(Error::Domain("compression ratio needs at least one step".into()));
    }
    Ok(tokens as f64 / steps as f64)
}

/// Per-step extra input tokens, `(W + G) * (N - 1)`.
pub fn flops_proxy(window: usize, ngram: usize, max_candidates: usize) -> usize {
    (window + max_candidates) * ngram.saturating_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
}

/// Trials are split into this many independently seeded shards whatever
/// the execution mode, so results do not depend on threading.
const MC_SHARDS: u64 = 64;

/// Monte Carlo estimate of the expected accepted count.
///
/// Each trial draws `b` speculations of `gamma` tokens, each token accepted
/// independently with probability `alpha`. The step accepts one forced
/// token plus the longest accepted leading run over all speculations.
pub fn mc_expected_accepted(
    alpha: f64,
    gamma: usize,
    b: usize,
    trials: u64,
    seed: u64,
    exec: ExecMode,
) -> Result<McEstimate> {
    check_alpha(alpha)?;
    if gamma == 0 || b == 0 || trials == 0 {
        return Err(Error::Domain("gamma, b and trials must be >= 1".into()));
    }
    let coin = Bernoulli::new(alpha).map_err(|e| Error::Domain(e.to_string()))?;
    let shards = MC_SHARDS.min(trials);
    let sums = exec.map_range(shards as usize, |shard| {
        let shard = shard as u64;
        let n = trials / shards + u64::from(shard < trials % shards);
        let mut rng = session_rng(seed, 1 << 32 | shard);
        let (mut sum, mut sum_sq) = (0u64, 0u64);
        for _ in 0..n {
            let mut best = 0;
            for _ in 0..b {
                let mut run = 0;
                while run < gamma && coin.sample(&mut rng) {
                    run += 1;
                }
                best = best.max(run);
                if best == gamma {
                    break;
                }
            }
            let accepted = 1 + best as u64;
            sum += accepted;
            sum_sq += accepted * accepted;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = sums
        .into_iter()
        .fold((0u64, 0u64), |(a, b), (s, q)| (a + s, b + q));
    let n = trials as f64;
    let mean = sum as f64 / n;
    let stderr = if trials > 1 {
        let var = (sum_sq as f64 - n * mean * mean).max(0.0) / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr,
        trials,
    })
}

/// One point of a predicted-compression curve with its Monte Carlo check.
/// The `mc_*` columns estimate the same quantity as `predicted_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub alpha: f64,
    pub f: f64,
    pub gamma: usize,
    pub b: usize,
    pub predicted_s: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
}

impl CurveRow {
    /// Distance between prediction and simulation, in standard errors.
    pub fn z_score(&self) -> f64 {
        let diff = (self.predicted_s - self.mc_mean).abs();
        if self.mc_stderr > 0.0 {
            diff / self.mc_stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub fn curve_row(params: AcceptanceParams, trials: u64, seed: u64, exec: ExecMode) -> Result<CurveRow> {
    let mc = mc_expected_accepted(params.alpha, params.gamma, params.b, trials, seed, exec)?;
    Ok(CurveRow {
        alpha: params.alpha,
        f: params.f,
        gamma: params.gamma,
        b: params.b,
        predicted_s: params.predicted_compression(),
        mc_mean: (params.f - 1.0 + mc.mean) / params.f,
        mc_stderr: mc.stderr / params.f,
    })
}

pub const CURVE_CSV_HEADER: &str = "alpha,f,gamma,b,predicted_S,mc_mean,mc_stderr";

pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.alpha, r.f, r.gamma, r.b, r.predicted_s, r.mc_mean, r.mc_stderr
        ));
    }
    out
}

/// Aggregate metrics of one lookahead run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub tokens_generated: usize,
    pub steps: usize,
    pub compression_ratio: f64,
    /// `acceptance_histogram[i]` counts steps that accepted `i + 1` tokens.
    pub acceptance_histogram: Vec<usize>,
    pub total_queries: usize,
    pub mean_queries_per_step: f64,
}

impl RunMetrics {
    pub fn from_steps(steps: &[StepRecord], ngram: usize) -> Result<Self> {
        let mut histogram = vec![0; ngram.max(1)];
        for s in steps {
            if s.accepted_count == 0 || s.accepted_count > histogram.len() {
                return Err(Error::Domain(format!(
                    "accepted count {} outside 1..={ngram}",
                    s.accepted_count
                )));
            }
            histogram[s.accepted_count - 1] += 1;
        }
        let tokens: usize = steps.iter().map(|s| s.accepted_count).sum();
        let queries: usize = steps.iter().map(|s| s.query_count).sum();
        Ok(Self {
            tokens_generated: tokens,
            steps: steps.len(),
            compression_ratio: compression_ratio(tokens, steps.len())?,
            acceptance_histogram: histogram,
            total_queries: queries,
            mean_queries_per_step: queries as f64 / steps.len() as f64,
        })
    }
}
