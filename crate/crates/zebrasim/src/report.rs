//! JSON and CSV result tables.

use std::fs;
use std::path::Path;

use serde::Serialize;
use zebrasim_core::{ExpertAssignment, StrategyResult, SweepRecord, TaskGraph};

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    fs::write(path, text + "\n")
}

/// Tasks and edges for debugging.
pub fn write_graph(graph: &TaskGraph, path: impl AsRef<Path>) -> std::io::Result<()> {
    write_json(graph, path)
}

fn plan_cell(plan: &Option<ExpertAssignment>) -> String {
    plan.as_ref()
        .map(|p| p.offload.iter().map(u32::to_string).collect::<Vec<_>>().join(";"))
        .unwrap_or_default()
}

#[derive(Serialize)]
struct StrategyRow<'a> {
    rank: usize,
    strategy: &'a str,
    makespan_ns: Option<u64>,
    throughput_tokens_per_s: Option<f64>,
    offload: String,
    infeasible: &'a str,
}

pub fn write_strategy_csv(results: &[StrategyResult], path: impl AsRef<Path>) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, r) in results.iter().enumerate() {
        w.serialize(StrategyRow {
            rank: i + 1,
            strategy: r.strategy.as_str(),
            makespan_ns: r.makespan,
            throughput_tokens_per_s: r.throughput,
            offload: plan_cell(&r.offload),
            infeasible: r.infeasible.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow<'a> {
    attention_gpus: u32,
    expert_gpus: u32,
    experts_per_layer: u32,
    seq_len: u64,
    microbatches: u32,
    strategy: &'a str,
    makespan_ns: Option<u64>,
    throughput_tokens_per_s: Option<f64>,
    speedup_vs_ep_ideal: Option<f64>,
    offload: String,
    asym_ea_available: bool,
    infeasible: &'a str,
}

pub fn write_sweep_csv(records: &[SweepRecord], path: impl AsRef<Path>) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(SweepRow {
            attention_gpus: r.attention_gpus,
            expert_gpus: r.expert_gpus,
            experts_per_layer: r.experts_per_layer,
            seq_len: r.seq_len,
            microbatches: r.microbatches,
            strategy: r.strategy.as_str(),
            makespan_ns: r.makespan,
            throughput_tokens_per_s: r.throughput,
            speedup_vs_ep_ideal: r.speedup_vs_ep_ideal,
            offload: plan_cell(&r.offload),
            asym_ea_available: r.asym_ea_available,
            infeasible: r.infeasible.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text ranking for the terminal.
pub fn ranking_table(results: &[StrategyResult]) -> String {
    let mut out = format!("{:<4} {:<10} {:>16} {:>18}  note\n", "rank", "strategy", "makespan (ns)", "tokens/s");
    for (i, r) in results.iter().enumerate() {
        let makespan = r.makespan.map_or_else(|| "-".to_string(), |m| m.to_string());
        let thr = r.throughput.map_or_else(|| "-".to_string(), |t| format!("{t:.1}"));
        let note = r.infeasible.as_deref().unwrap_or("");
        out.push_str(&format!("{:<4} {:<10} {:>16} {:>18}  {note}\n", i + 1, r.strategy.as_str(), makespan, thr));
    }
    out
}
