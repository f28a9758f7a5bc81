//! Simulated lookahead parallelism: one step's layout is split across D
//! logical devices, each shard runs its own forward pass, and outputs are
//! merged before verification on the coordinator.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::config::{GenerationConfig, StepRecord};
use crate::decode::{DecodeState, StepOutcome};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::layout::{LookaheadLayout, QueryRole, StepLayout};
use crate::model::LanguageModel;
use crate::sampling::SamplerSpec;
use crate::token::{Distribution, Token};

/// The work assigned to one device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevicePlan {
    pub device: usize,
    /// Window columns (1-based) owned by this device.
    pub columns: RangeInclusive<usize>,
    /// Candidate branches owned by this device.
    pub candidates: Vec<usize>,
    /// Query indices whose outputs this device reports.
    pub owned: Vec<usize>,
    /// Query indices evaluated only to satisfy visibility.
    pub redundant: Vec<usize>,
}

impl DevicePlan {
    /// Every query the device evaluates, query 0 first, in layout order.
    pub fn shard(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.owned.iter().chain(&self.redundant).copied().collect();
        all.sort_unstable();
        all
    }

    /// Whether every visible reference of the shard resolves locally.
    pub fn is_closed(&self, layout: &StepLayout) -> bool {
        let shard = self.shard();
        shard.first() == Some(&0)
            && shard.iter().all(|&q| {
                layout.queries()[q]
                    .visible
                    .iter()
                    .all(|v| shard.binary_search(v).is_ok())
            })
    }
}

/// Splits columns into `devices` contiguous ranges (earlier ranges take
/// the remainder), round-robins candidates, and adds query 0 and the
/// level-0 cells each device's columns can see as redundant copies.
pub fn partition_layout(plan: &LookaheadLayout, devices: usize) -> Result<Vec<DevicePlan>> {
    let width = plan.window;
    if devices == 0 || devices > width {
        return Err(Error::InvalidPartition {
            devices,
            columns: width,
        });
    }
    let (base, extra) = (width / devices, width % devices);
    let mut start = 1;
    let mut plans: Vec<DevicePlan> = (0..devices)
        .map(|device| {
            let len = base + usize::from(device < extra);
            let columns = start..=start + len - 1;
            start += len;
            DevicePlan {
                device,
                columns,
                candidates: (device..plan.candidates.len()).step_by(devices).collect(),
                owned: Vec::new(),
                redundant: Vec::new(),
            }
        })
        .collect();
    let owner_of_column = |column: usize| {
        plans
            .iter()
            .position(|p| p.columns.contains(&column))
            .expect("columns cover 1..=W")
    };
    let owners: Vec<usize> = plan
        .layout
        .queries()
        .iter()
        .map(|q| match q.role {
            QueryRole::Confirmed => 0,
            QueryRole::Window { column, .. } => owner_of_column(column),
            QueryRole::Candidate { branch, .. } => branch % devices,
            QueryRole::Other => 0,
        })
        .collect();
    for (q, &owner) in owners.iter().enumerate() {
        plans[owner].owned.push(q);
    }
    for p in plans.iter_mut() {
        let max_col = *p.columns.end();
        let mut needed: Vec<usize> = std::iter::once(0)
            .chain(plan.layout.queries().iter().enumerate().filter_map(|(q, query)| {
                matches!(query.role, QueryRole::Window { level: 0, column } if column <= max_col)
                    .then_some(q)
            }))
            .filter(|q| owners[*q] != p.device)
            .collect();
        needed.sort_unstable();
        p.redundant = needed;
    }
    Ok(plans)
}

/// Communication accounting for one LP step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommStats {
    /// Token ids exchanged in the post-forward all-gather.
    pub tokens_synchronized: usize,
    pub sync_events: usize,
    /// Queries evaluated on more than one device.
    pub redundant_queries: usize,
}

/// Runs one lookahead step with the layout split across `devices` shards.
///
/// Shards run independently through `exec`; their owned outputs are merged
/// into one output vector and the step finishes exactly as on a single
/// device. Each device contributes its top-level tokens and N verdict
/// values per owned candidate, sent to the other `D - 1` devices.
pub fn lp_step<M: LanguageModel + ?Sized>(
    state: &mut DecodeState<'_, M>,
    devices: usize,
    exec: ExecMode,
) -> Result<(StepOutcome, CommStats)> {
    let plan = state.plan_step()?;
    let plans = partition_layout(&plan, devices)?;
    let model = state.model();
    let context = state.context();
    let shards = plans
        .iter()
        .map(|p| {
            let shard = p.shard();
            let layout = plan.layout.restrict(&shard)?;
            Ok((shard, layout))
        })
        .collect::<Result<Vec<_>>>()?;
    let results = exec.map(&shards, |(_, layout)| model.forward(context, layout));

    let mut merged: Vec<Option<Distribution>> = vec![None; plan.query_count()];
    for ((p, (shard, _)), result) in plans.iter().zip(&shards).zip(results) {
        let outputs = result?;
        for &q in &p.owned {
            let local = shard.binary_search(&q).expect("owned query is in its shard");
            merged[q] = Some(outputs[local].clone());
        }
    }
    let outputs = merged
        .into_iter()
        .enumerate()
        .map(|(q, d)| d.ok_or_else(|| Error::InvalidLayout(format!("query {q} has no owner"))))
        .collect::<Result<Vec<_>>>()?;

    let ngram = plan.ngram;
    let payload: usize = plans
        .iter()
        .map(|p| p.columns.clone().count() + p.candidates.len() * ngram)
        .sum();
    let stats = CommStats {
        tokens_synchronized: payload * (devices - 1),
        sync_events: 1,
        redundant_queries: plans.iter().map(|p| p.redundant.len()).sum(),
    };
    let outcome = state.finish_step(&plan, &outputs)?;
    Ok((outcome, stats))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpRun {
    pub tokens: Vec<Token>,
    pub steps: Vec<StepRecord>,
    pub comm: Vec<CommStats>,
}

/// Lookahead decoding with every step split across `devices` shards.
pub fn decode_lookahead_parallel<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    config: &GenerationConfig,
    sampler: &SamplerSpec,
    devices: usize,
    exec: ExecMode,
) -> Result<LpRun> {
    let mut state = DecodeState::new(model, prompt, config.clone(), sampler.clone())?;
    let mut comm = Vec::new();
    while !state.is_done() {
        let (_, stats) = lp_step(&mut state, devices, exec)?;
        comm.push(stats);
    }
    Ok(LpRun {
        tokens: state.generated().to_vec(),
        steps: state.steps().to_vec(),
        comm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::decode_lookahead;
    use crate::layout::Window2D;
    use crate::model::{MarkovModel, TinyTransformer, TransformerDims};
    use crate::sampling::session_rng;

    fn layout(width: usize, ngram: usize, candidates: usize) -> LookaheadLayout {
        let mut rng = session_rng(3, 0);
        let window = Window2D::init(width, ngram, 8, &mut rng);
        let cands: Vec<Vec<Token>> = (0..candidates)
            .map(|b| vec![b as Token % 8; ngram - 1])
            .collect();
        window.build_layout(1, &cands).unwrap()
    }

    #[test]
    fn single_device_has_no_redundancy() {
        let plan = layout(5, 4, 3);
        let plans = partition_layout(&plan, 1).unwrap();
        assert_eq!(plans.len(), 1);
        assert!(plans[0].redundant.is_empty());
        assert_eq!(plans[0].owned.len(), plan.query_count());
        assert_eq!(plans[0].candidates, vec![0, 1, 2]);
    }

    #[test]
    fn four_devices_over_five_columns() {
        let plan = layout(5, 4, 5);
        let plans = partition_layout(&plan, 4).unwrap();
        let ranges: Vec<_> = plans.iter().map(|p| p.columns.clone()).collect();
        assert_eq!(ranges, vec![1..=2, 3..=3, 4..=4, 5..=5]);
        assert_eq!(plans[0].candidates, vec![0, 4]);
        assert_eq!(plans[3].candidates, vec![3]);
        // level-0 cell (0, j) is query j - 1
        assert!(plans[0].redundant.is_empty());
        assert_eq!(plans[1].redundant, vec![0, 1]);
        assert_eq!(plans[2].redundant, vec![0, 1, 2]);
        assert_eq!(plans[3].redundant, vec![0, 1, 2, 3]);
        for p in &plans {
            assert!(p.is_closed(&plan.layout));
            assert!(plan.layout.restrict(&p.shard()).is_ok());
        }
        let mut owned: Vec<usize> = plans.iter().flat_map(|p| p.owned.clone()).collect();
        owned.sort_unstable();
        assert_eq!(owned, (0..plan.query_count()).collect::<Vec<_>>());
    }

    #[test]
    fn bad_device_counts() {
        let plan = layout(3, 3, 0);
        assert!(matches!(
            partition_layout(&plan, 4),
            Err(Error::InvalidPartition { devices: 4, columns: 3 })
        ));
        assert!(partition_layout(&plan, 0).is_err());
    }

    #[test]
    fn lp_matches_single_device() {
        let transformer = TinyTransformer::new(5, TransformerDims::default()).unwrap();
        let corpus = vec![(0..200).map(|i| (i * 7 % 5) as Token).collect()];
        let markov = MarkovModel::train(&corpus, 2, 0.1, 32).unwrap();
        let models: [&dyn LanguageModel; 2] = [&transformer, &markov];
        let config = GenerationConfig::new(4, 3).with_max_tokens(24);
        for model in models {
            let prompt = [3, 1, 4, 1, 5];
            let single = decode_lookahead(model, &prompt, &config, &SamplerSpec::greedy()).unwrap();
            for devices in [1, 2, 4] {
                for exec in [ExecMode::Sequential, ExecMode::Parallel] {
                    let run = decode_lookahead_parallel(model, &prompt, &config, &SamplerSpec::greedy(), devices, exec)
                        .unwrap();
                    assert_eq!(run.tokens, single.tokens);
                    assert_eq!(run.steps, single.steps);
                    assert!(run.comm.iter().all(|c| c.sync_events == 1));
                    if devices == 1 {
                        assert!(run.comm.iter().all(|c| c.tokens_synchronized == 0));
                    }
                }
            }
        }
    }

    #[test]
    fn comm_volume_counts_tokens() {
        let markov = MarkovModel::train(&[vec![0, 1, 2, 3]], 1, 0.5, 4).unwrap();
        let config = GenerationConfig::new(4, 3).with_max_tokens(1);
        let mut state = DecodeState::new(&markov, &[0], config, SamplerSpec::greedy()).unwrap();
        let (_, stats) = lp_step(&mut state, 2, ExecMode::Sequential).unwrap();
        // empty pool: 4 top tokens, gathered to one other device
        assert_eq!(stats.tokens_synchronized, 4);
        // device 1 copies query 0 and level-0 column 2
        assert_eq!(stats.redundant_queries, 2);
    }
}
