use std::fmt::Write as _;

use lookahead_core::analytics::{curve_to_csv, CurveRow};
use lookahead_core::model::detokenize;
use serde_json::{json, Map, Value};

use crate::args::{Format, ModelKind, RunArgs};
use crate::run::{scheme, CommTotals, PromptRecord, Session};

/// Rebuilds every object with keys inserted in sorted order, so output is
/// canonical whatever map ordering serde_json was built with.
fn canonical(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, canonical(v))).collect::<Map<_, _>>())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        other => other,
    }
}

pub fn to_json(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&canonical(v)).expect("values serialize");
    s.push('\n');
    s
}

fn engine() -> Value {
    json!({ "name": "lookahead-core", "version": lookahead_core::VERSION })
}

fn config_echo(session: &Session, mode: &str, devices: Option<usize>) -> Value {
    let a: &RunArgs = &session.args;
    let model = match a.model {
        ModelKind::Markov => json!({
            "kind": "markov",
            "corpus": a.corpus.as_ref().map(|p| p.display().to_string()),
            "model_file": a.model_file.as_ref().map(|p| p.display().to_string()),
            "order": a.order,
            "lambda": a.lambda,
        }),
        ModelKind::Transformer => json!({
            "kind": "transformer",
            "seed": a.model_seed,
            "d_model": a.d_model,
            "layers": a.layers,
            "heads": a.heads,
            "d_ff": a.d_ff,
        }),
    };
    let c = &session.config;
    json!({
        "mode": mode,
        "model": model,
        "vocab": session.model.vocab_size(),
        "tokenizer": format!("{:?}", a.tokenizer).to_lowercase(),
        "prompts": a.prompts.display().to_string(),
        "window": c.window,
        "ngram": c.ngram,
        "candidates": c.max_candidates,
        "max_tokens": c.max_tokens,
        "eos": c.eos_token,
        "pool_from_prompt": c.seed_pool_from_prompt,
        "pool_capacity": c.pool_capacity,
        "sampler": serde_json::to_value(&session.sampler).expect("sampler serializes"),
        "devices": devices,
    })
}

fn seeds(session: &Session) -> Value {
    json!({ "base": session.sampler.seed, "per_prompt": "base + prompt index" })
}

fn comm_json(c: &CommTotals) -> Value {
    json!({
        "tokens_synchronized": c.tokens_synchronized,
        "sync_events": c.sync_events,
        "redundant_queries": c.redundant_queries,
    })
}

fn prompt_json(r: &PromptRecord) -> Value {
    json!({
        "id": r.id,
        "prompt_tokens": r.prompt_tokens,
        "tokens": r.tokens,
        "generated": r.tokens.len(),
        "steps": r.steps,
        "compression_ratio": r.compression(),
        "acceptance_histogram": r.acceptance_histogram,
        "query_counts": r.query_counts,
        "total_queries": r.query_counts.iter().sum::<usize>(),
        "comm": r.comm.as_ref().map(comm_json),
    })
}

fn aggregate(session: &Session, records: &[PromptRecord], lookahead: bool) -> Value {
    let tokens: usize = records.iter().map(|r| r.tokens.len()).sum();
    let steps: usize = records.iter().map(|r| r.steps).sum();
    let mean_prompt_s = records.iter().map(PromptRecord::compression).sum::<f64>() / records.len() as f64;
    let comm = records
        .iter()
        .filter_map(|r| r.comm)
        .reduce(CommTotals::add);
    json!({
        "total_tokens": tokens,
        "total_steps": steps,
        "compression_ratio": tokens as f64 / steps as f64,
        "mean_prompt_compression_ratio": mean_prompt_s,
        "total_queries": records.iter().flat_map(|r| &r.query_counts).sum::<usize>(),
        "flops_proxy": lookahead.then(|| session.flops_proxy()),
        "comm": comm.as_ref().map(comm_json),
    })
}

fn mode_json(session: &Session, records: &[PromptRecord], lookahead: bool) -> Value {
    json!({
        "prompts": records.iter().map(prompt_json).collect::<Vec<_>>(),
        "aggregate": aggregate(session, records, lookahead),
    })
}

/// Report for one decoding mode.
pub fn single_report(
    session: &Session,
    mode: &str,
    records: &[PromptRecord],
    devices: Option<usize>,
) -> String {
    match session.args.format {
        Format::Json => {
            let mut v = mode_json(session, records, mode == "lookahead");
            let obj = v.as_object_mut().expect("object");
            obj.insert("engine".into(), engine());
            obj.insert("config".into(), config_echo(session, mode, devices));
            obj.insert("seeds".into(), seeds(session));
            to_json(v)
        }
        Format::Csv => csv_rows(&[(mode, records)]),
    }
}

/// Report covering several modes over the same prompts.
pub fn bench_report(session: &Session, runs: &[(&str, Vec<PromptRecord>)]) -> String {
    match session.args.format {
        Format::Json => {
            let modes: Map<String, Value> = runs
                .iter()
                .map(|(mode, records)| (mode.to_string(), mode_json(session, records, *mode == "lookahead")))
                .collect();
            let compression: Map<String, Value> = runs
                .iter()
                .map(|(mode, records)| {
                    let tokens: usize = records.iter().map(|r| r.tokens.len()).sum();
                    let steps: usize = records.iter().map(|r| r.steps).sum();
                    (mode.to_string(), json!(tokens as f64 / steps as f64))
                })
                .collect();
            to_json(json!({
                "engine": engine(),
                "config": config_echo(session, "bench", None),
                "seeds": seeds(session),
                "modes": modes,
                "compression_ratio": compression,
            }))
        }
        Format::Csv => {
            let borrowed: Vec<(&str, &[PromptRecord])> =
                runs.iter().map(|(m, r)| (*m, r.as_slice())).collect();
            csv_rows(&borrowed)
        }
    }
}

const CSV_HEADER: &str =
    "mode,prompt_id,prompt_tokens,generated,steps,compression_ratio,total_queries,tokens_synchronized,sync_events";

fn csv_rows(runs: &[(&str, &[PromptRecord])]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (mode, records) in runs {
        for r in records.iter() {
            let (synced, events) = match r.comm {
                Some(c) => (c.tokens_synchronized.to_string(), c.sync_events.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{mode},{},{},{},{},{},{},{synced},{events}",
                r.id,
                r.prompt_tokens,
                r.tokens.len(),
                r.steps,
                r.compression(),
                r.query_counts.iter().sum::<usize>()
            );
        }
    }
    out
}

/// Generated text, one line per prompt.
pub fn generated_text(session: &Session, records: &[PromptRecord]) -> String {
    records
        .iter()
        .map(|r| detokenize(&r.tokens, scheme(session.args.tokenizer)) + "\n")
        .collect()
}

pub fn curve_report(rows: &[CurveRow], format: Format, trials: u64, seed: u64) -> String {
    match format {
        Format::Csv => curve_to_csv(rows),
        Format::Json => to_json(json!({
            "engine": engine(),
            "trials": trials,
            "seed": seed,
            "rows": rows.iter().map(|r| serde_json::to_value(r).expect("row serializes")).collect::<Vec<_>>(),
        })),
    }
}
