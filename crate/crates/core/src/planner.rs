//! Strategy comparison and ZP-group ratio sweeps.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{ExpertAssignment, Role, SimSpec, ZpMode};
use crate::costmodel::{
    alltoall_duration, attention_duration, class_rates, derive_task_durations, ep_ideal_throughput,
    expert_duration, memory_bounds, CostError, TaskDurations,
};
use crate::scheduler::{asym_ea_offload, chunk_sizes, stream_order, OffloadPlan, OffloadPlanInputs, SchedError};
use crate::simulator::{compute_metrics, simulate, validate_timeline, Metrics, Timeline};
use crate::taskgraph::{
    build_distep_graph, ep_iteration_time, pp_assign_layers, zp_graph_for, EpClassTimes, GraphShape, PpStage,
    TaskGraph,
};
use crate::time::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "ZP")]
    Zp,
    #[serde(rename = "ZP+AsymEA")]
    ZpAsymEa,
    #[serde(rename = "DistEP")]
    DistEp,
    #[serde(rename = "EP")]
    Ep,
    #[serde(rename = "EP-Ideal")]
    EpIdeal,
    #[serde(rename = "PP")]
    Pp,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Zp,
        Strategy::ZpAsymEa,
        Strategy::DistEp,
        Strategy::Ep,
        Strategy::EpIdeal,
        Strategy::Pp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Zp => "ZP",
            Strategy::ZpAsymEa => "ZP+AsymEA",
            Strategy::DistEp => "DistEP",
            Strategy::Ep => "EP",
            Strategy::EpIdeal => "EP-Ideal",
            Strategy::Pp => "PP",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Graph(#[from] crate::taskgraph::GraphError),
    #[error(transparent)]
    Sim(#[from] crate::simulator::SimError),
    #[error(transparent)]
    Pp(#[from] crate::taskgraph::PpError),
    #[error("simulated timeline failed validation: {0}")]
    Timeline(String),
    #[error("expert GPUs cannot hold all experts without offloading (n_min = {0})")]
    NeedsOffload(u64),
    #[error("no pipeline stages configured")]
    NoPipeline,
    #[error("{role} GPUs ({gpus}) cannot fill {stages} pipeline stages")]
    PipelineGpus { role: Role, gpus: u32, stages: u32 },
}

/// One strategy's outcome. Infeasible strategies carry the reason and no
/// numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub makespan: Option<Nanos>,
    /// Tokens per second.
    pub throughput: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offload: Option<ExpertAssignment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<String>,
}

impl StrategyResult {
    fn ok(strategy: Strategy, makespan: Option<Nanos>, throughput: f64, offload: Option<ExpertAssignment>) -> Self {
        StrategyResult {
            strategy,
            makespan,
            throughput: Some(throughput),
            offload,
            infeasible: None,
        }
    }

    fn failed(strategy: Strategy, reason: impl fmt::Display) -> Self {
        StrategyResult {
            strategy,
            makespan: None,
            throughput: None,
            offload: None,
            infeasible: Some(format!("{reason}")),
        }
    }
}

/// A simulated ZP-style run with its graph.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub graph: TaskGraph,
    pub timeline: Timeline,
    pub metrics: Metrics,
}

/// Tokens entering the attention GPUs over one iteration.
pub fn tokens_per_iteration(spec: &SimSpec) -> u64 {
    spec.global_tokens_per_microbatch() * u64::from(spec.model.microbatches)
}

fn throughput(tokens: u64, makespan: Nanos) -> f64 {
    if makespan == 0 {
        f64::INFINITY
    } else {
        tokens as f64 * 1e9 / makespan as f64
    }
}

/// Simulates `graph` with its default stream order and checks the result.
pub fn run_graph(spec: &SimSpec, graph: TaskGraph) -> Result<SimRun, PlanError> {
    let timeline = simulate(&graph, &stream_order(&graph))?;
    if let Some(v) = validate_timeline(&graph, &timeline).first() {
        return Err(PlanError::Timeline(format!("{v}")));
    }
    let metrics = compute_metrics(&graph, &timeline, tokens_per_iteration(spec), Some(spec.steady_window()));
    Ok(SimRun {
        graph,
        timeline,
        metrics,
    })
}

pub fn simulate_zp(spec: &SimSpec, durations: &TaskDurations, plan: &ExpertAssignment) -> Result<SimRun, PlanError> {
    run_graph(spec, zp_graph_for(spec, durations, plan)?)
}

pub fn simulate_distep(spec: &SimSpec, durations: &TaskDurations) -> Result<SimRun, PlanError> {
    let g = build_distep_graph(&GraphShape::from_spec(spec), durations, spec.run.forward_only)?;
    run_graph(spec, g)
}

/// Offload plan inputs for `spec` with its memory bounds.
pub fn offload_inputs(spec: &SimSpec, durations: &TaskDurations) -> Result<OffloadPlanInputs, PlanError> {
    Ok(OffloadPlanInputs {
        experts_per_layer: spec.model.experts_per_layer,
        layers: spec.model.layers,
        attention_gpus: spec.cluster.attention_gpus(),
        expert_gpus: spec.cluster.expert_gpus(),
        attn_fwd: durations.attn_fwd,
        single_expert_fwd: durations.single_expert_fwd,
        expert_layer_fwd: durations.expert_layer_fwd,
        bounds: memory_bounds(spec)?,
        squeeze_mode: spec.run.squeeze_mode,
    })
}

/// Runs the offload planner for `spec`. In zp-theorem mode the last layer
/// has no expert tasks, so the plan covers layers `1..L-1` and `o_L = 0`.
pub fn plan_offload(spec: &SimSpec, durations: &TaskDurations) -> Result<OffloadPlan, PlanError> {
    let mut inputs = offload_inputs(spec, durations)?;
    let theorem = spec.run.mode == ZpMode::ZpTheorem;
    if theorem {
        if inputs.layers == 1 {
            chunk_sizes(inputs.attention_gpus, inputs.expert_gpus)?;
            if inputs.bounds.n_min > 0 {
                return Err(SchedError::CannotGather { n_min: inputs.bounds.n_min }.into());
            }
            let mut plan = asym_ea_offload(&inputs)?;
            plan.assignment = ExpertAssignment::zeros(1);
            plan.steps.clear();
            return Ok(plan);
        }
        inputs.layers -= 1;
    }
    let mut plan = asym_ea_offload(&inputs)?;
    if theorem {
        plan.assignment.offload.push(0);
    }
    Ok(plan)
}

/// Per-GPU EP shares: every GPU holds attention for `G / (M + N)` tokens
/// and an even slice of the experts.
pub fn ep_class_times(spec: &SimSpec) -> Result<(Vec<EpClassTimes>, Nanos, Nanos), PlanError> {
    let m = spec.cluster.attention_gpus();
    let n = spec.cluster.expert_gpus();
    let total = f64::from(m + n);
    let seqs = f64::from(m) * f64::from(spec.model.sequences_per_microbatch) / total;
    let tokens = spec.global_tokens_per_microbatch() as f64 / total;
    let assignments = tokens * f64::from(spec.model.top_k);
    let mut out = Vec::new();
    for role in Role::ALL {
        let class = spec.gpu_class(role).ok_or(CostError::NeedsCoefficients(role))?;
        out.push(EpClassTimes {
            gpus: spec.cluster.role(role).count,
            attn_fwd: attention_duration(spec.model.seq_len, seqs, &class),
            expert_fwd: crate::time::round_half_up(class.expert_coeff * assignments),
        });
    }
    let (d, c) = spec.comm_override().unwrap_or_else(|| {
        let t = alltoall_duration(
            crate::time::round_half_up(assignments),
            spec.bytes_per_token(),
            spec.cluster.link_bandwidth,
        );
        (t, t)
    });
    Ok((out, d, c))
}

pub fn ep_makespan(spec: &SimSpec) -> Result<Nanos, PlanError> {
    let (classes, d, c) = ep_class_times(spec)?;
    Ok(ep_iteration_time(
        &classes,
        d,
        c,
        spec.model.layers,
        spec.model.microbatches,
        spec.run.gamma,
        spec.run.forward_only,
    ))
}

/// EP(Ideal) throughput in tokens per second.
pub fn ep_ideal_tokens_per_s(spec: &SimSpec) -> Result<f64, PlanError> {
    let phase = if spec.run.forward_only { 1.0 } else { 1.0 + spec.run.gamma };
    let samples_per_ns = ep_ideal_throughput(&class_rates(spec)?, spec.model.layers, phase);
    Ok(samples_per_ns * spec.model.seq_len as f64 * 1e9)
}

/// Pipeline over the configured stages; each role's GPUs form as many
/// replicas as its stage count allows.
pub fn pp_makespan(spec: &SimSpec) -> Result<Nanos, PlanError> {
    let pp = spec.run.pp.as_ref().ok_or(PlanError::NoPipeline)?;
    let mut replicas = u32::MAX;
    for role in Role::ALL {
        let stages = pp.stages.iter().filter(|r| **r == role).count() as u32;
        if stages == 0 {
            continue;
        }
        let gpus = spec.cluster.role(role).count;
        if gpus < stages {
            return Err(PlanError::PipelineGpus { role, gpus, stages });
        }
        replicas = replicas.min(gpus / stages);
    }
    let replicas = replicas.max(1);
    let tokens = spec.global_tokens_per_microbatch() / u64::from(replicas);
    let seqs = tokens as f64 / spec.model.seq_len.max(1) as f64;
    let r = u64::from(spec.model.microbatches);
    let stages = pp
        .stages
        .iter()
        .map(|&role| {
            let class = spec.gpu_class(role).ok_or(CostError::NeedsCoefficients(role))?;
            let layer_time = attention_duration(spec.model.seq_len, seqs, &class)
                + expert_duration(tokens * u64::from(spec.model.top_k), 0, &class);
            Ok(PpStage {
                role,
                layer_time,
                memory_capacity: class.memory_capacity,
                layer_memory: pp.layer_memory + spec.model.activation_mem_per_token * tokens * r,
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    let plan = pp_assign_layers(&stages, spec.model.layers, spec.model.microbatches, spec.run.gamma, spec.run.forward_only)?;
    Ok(plan.iteration_time)
}

fn zp_plain(spec: &SimSpec, d: &TaskDurations) -> Result<SimRun, PlanError> {
    let bounds = memory_bounds(spec)?;
    if bounds.n_min > 0 {
        return Err(PlanError::NeedsOffload(bounds.n_min));
    }
    simulate_zp(spec, d, &ExpertAssignment::zeros(spec.model.layers))
}

fn zp_asym(spec: &SimSpec, d: &TaskDurations) -> Result<(SimRun, ExpertAssignment), PlanError> {
    let plan = match &spec.run.offload {
        Some(o) => ExpertAssignment::from_vec(o.clone()),
        None => plan_offload(spec, d)?.assignment,
    };
    Ok((simulate_zp(spec, d, &plan)?, plan))
}

/// Evaluates one strategy; errors are returned, not recorded.
pub fn evaluate_strategy(spec: &SimSpec, strategy: Strategy) -> Result<StrategyResult, PlanError> {
    let d = derive_task_durations(spec)?;
    let tokens = tokens_per_iteration(spec);
    let sim = |run: SimRun, offload: Option<ExpertAssignment>| {
        let m = run.timeline.makespan;
        StrategyResult::ok(strategy, Some(m), throughput(tokens, m), offload)
    };
    Ok(match strategy {
        Strategy::Zp => sim(zp_plain(spec, &d)?, None),
        Strategy::ZpAsymEa => {
            let (run, plan) = zp_asym(spec, &d)?;
            sim(run, Some(plan))
        }
        Strategy::DistEp => sim(simulate_distep(spec, &d)?, None),
        Strategy::Ep => {
            let m = ep_makespan(spec)?;
            StrategyResult::ok(strategy, Some(m), throughput(tokens, m), None)
        }
        Strategy::EpIdeal => StrategyResult::ok(strategy, None, ep_ideal_tokens_per_s(spec)?, None),
        Strategy::Pp => {
            let m = pp_makespan(spec)?;
            StrategyResult::ok(strategy, Some(m), throughput(tokens, m), None)
        }
    })
}

/// Every strategy for `spec`, fastest first; infeasible ones go last in
/// declaration order.
pub fn compare_strategies(spec: &SimSpec) -> Vec<StrategyResult> {
    let mut out: Vec<StrategyResult> = Strategy::ALL
        .iter()
        .map(|&s| evaluate_strategy(spec, s).unwrap_or_else(|e| StrategyResult::failed(s, e)))
        .collect();
    out.sort_by(|a, b| match (a.throughput, b.throughput) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.strategy.cmp(&b.strategy)),
        (Some(_), None) => core::cmp::Ordering::Less,
        (None, Some(_)) => core::cmp::Ordering::Greater,
        (None, None) => a.strategy.cmp(&b.strategy),
    });
    out
}

/// One (N, seq_len) cell of a ratio sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub attention_gpus: u32,
    pub expert_gpus: u32,
    pub experts_per_layer: u32,
    pub seq_len: u64,
    pub microbatches: u32,
    pub strategy: Strategy,
    pub makespan: Option<Nanos>,
    pub throughput: Option<f64>,
    /// Throughput over EP(Ideal) on the same cluster.
    pub speedup_vs_ep_ideal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offload: Option<ExpertAssignment>,
    pub asym_ea_available: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<String>,
}

/// Configuration of a sweep cell: `N` expert GPUs with the expert count scaled
/// linearly, and sequence length `seq_len`.
pub fn sweep_cell_spec(base: &SimSpec, expert_gpus: u32, seq_len: u64) -> SimSpec {
    let mut spec = base.clone();
    let n0 = base.cluster.expert_gpus().max(1);
    spec.model.experts_per_layer = base.model.experts_per_layer / n0 * expert_gpus;
    spec.cluster.expert.count = expert_gpus;
    spec.model.seq_len = seq_len;
    spec.run.offload = None;
    spec
}

/// Evaluates ZP and ZP+AsymEA in one sweep cell.
pub fn sweep_cell(base: &SimSpec, expert_gpus: u32, seq_len: u64) -> Vec<SweepRecord> {
    let spec = sweep_cell_spec(base, expert_gpus, seq_len);
    let available = chunk_sizes(spec.cluster.attention_gpus(), expert_gpus).is_ok();
    let ideal = ep_ideal_tokens_per_s(&spec).ok();
    [Strategy::Zp, Strategy::ZpAsymEa]
        .into_iter()
        .map(|strategy| {
            let result = if strategy == Strategy::ZpAsymEa && !available {
                StrategyResult::failed(strategy, "asymmetric offload unavailable: M and N do not divide")
            } else {
                evaluate_strategy(&spec, strategy).unwrap_or_else(|e| StrategyResult::failed(strategy, e))
            };
            SweepRecord {
                attention_gpus: spec.cluster.attention_gpus(),
                expert_gpus,
                experts_per_layer: spec.model.experts_per_layer,
                seq_len,
                microbatches: spec.model.microbatches,
                strategy,
                makespan: result.makespan,
                throughput: result.throughput,
                speedup_vs_ep_ideal: result.throughput.zip(ideal).map(|(t, i)| t / i),
                offload: result.offload,
                asym_ea_available: available,
                infeasible: result.infeasible,
            }
        })
        .collect()
}

/// Sorts records by (seq_len, expert_gpus, strategy); the merge key that
/// makes results independent of evaluation order.
pub fn sort_records(records: &mut [SweepRecord]) {
    records.sort_by(|a, b| {
        (a.seq_len, a.expert_gpus, a.strategy).cmp(&(b.seq_len, b.expert_gpus, b.strategy))
    });
}

/// Sequential sweep over every `(N, seq_len)` pair.
pub fn sweep_ratios(base: &SimSpec, expert_gpus: &[u32], seq_lens: &[u64]) -> Vec<SweepRecord> {
    let mut out = Vec::new();
    for &s in seq_lens {
        for &n in expert_gpus {
            out.extend(sweep_cell(base, n, s));
        }
    }
    sort_records(&mut out);
    out
}

/// Best expert-GPU count per sequence length, by the better of ZP and
/// ZP+AsymEA speedup over EP(Ideal). Ties go to the smaller `N`.
pub fn best_ratio_per_seq(records: &[SweepRecord]) -> Vec<(u64, u32, f64)> {
    let mut out: Vec<(u64, u32, f64)> = Vec::new();
    for r in records {
        let Some(s) = r.speedup_vs_ep_ideal else { continue };
        match out.iter_mut().find(|(len, _, _)| *len == r.seq_len) {
            Some(entry) => {
                if s > entry.2 || (s == entry.2 && r.expert_gpus < entry.1) {
                    *entry = (r.seq_len, r.expert_gpus, s);
                }
            }
            None => out.push((r.seq_len, r.expert_gpus, s)),
        }
    }
    out.sort_by_key(|e| e.0);
    out
}
