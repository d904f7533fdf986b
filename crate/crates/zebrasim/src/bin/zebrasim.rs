use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use zebrasim_core::costmodel::{derive_task_durations, memory_bounds, CostError};
use zebrasim_core::planner::{
    best_ratio_per_seq, compare_strategies, plan_offload, simulate_zp, PlanError, SimRun,
};
use zebrasim_core::scheduler::SchedError;
use zebrasim_core::{ExpertAssignment, Metrics, Role, SimSpec, SqueezeMode, ZpMode};

use zebrasim::configfile::{load_unvalidated, LoadError};
use zebrasim::report::{ranking_table, write_graph, write_json, write_strategy_csv, write_sweep_csv};
use zebrasim::sweep::parallel_sweep;
use zebrasim::trace::{export_trace, write_trace};

const EXIT_INVALID: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "zebrasim", version, about = "Simulate and plan zebra-parallel MoE training on two GPU classes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one iteration; writes trace.json and metrics.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the task graph to graph.json.
        #[arg(long)]
        dump_graph: bool,
    },
    /// Plan expert offloading; writes offload_plan.json and optimize_report.json.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep expert-GPU counts and sequence lengths; writes sweep.json and sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Expert-GPU counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        expert_gpus: Option<Vec<u32>>,
        /// Sequence lengths, comma separated.
        #[arg(long, value_delimiter = ',')]
        seq_lens: Option<Vec<u64>>,
    },
    /// Rank all strategies; writes compare.json and compare.csv.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Check a config and list every violation.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    mode: Option<ModeArg>,
    #[arg(long)]
    squeeze: Option<SqueezeArg>,
    /// Backward-to-forward compute ratio.
    #[arg(long)]
    gamma: Option<f64>,
    /// Recorded in every output file.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ZpTheorem,
    ZpFull,
}

#[derive(Clone, Copy, ValueEnum)]
enum SqueezeArg {
    Verbatim,
    Rederived,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_IO, e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = if e.downcast_ref::<std::io::Error>().is_some() || e.downcast_ref::<csv::Error>().is_some() {
            EXIT_IO
        } else {
            EXIT_INVALID
        };
        Failure { code, error: e }
    }
}

fn plan_failure(e: PlanError) -> Failure {
    let code = match &e {
        PlanError::Cost(CostError::MemoryInfeasible { .. })
        | PlanError::NeedsOffload(_)
        | PlanError::Sched(SchedError::CannotGather { .. } | SchedError::NoFeasibleChunks { .. })
        | PlanError::Pp(_)
        | PlanError::PipelineGpus { .. } => EXIT_INFEASIBLE,
        _ => EXIT_INVALID,
    };
    Failure::new(code, e)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { common } => validate(&common),
        Command::Simulate { common, dump_graph } => simulate(&common, dump_graph),
        Command::Optimize { common } => optimize(&common),
        Command::Sweep {
            common,
            expert_gpus,
            seq_lens,
        } => sweep(&common, expert_gpus, seq_lens),
        Command::Compare { common } => compare(&common),
    }
}

fn read_spec(common: &Common) -> Result<SimSpec, Failure> {
    let mut spec = load_unvalidated(&common.config).map_err(|e| match e {
        LoadError::Io { .. } => Failure::new(EXIT_IO, e),
        _ => Failure::new(EXIT_INVALID, e),
    })?;
    if let Some(m) = common.mode {
        spec.run.mode = match m {
            ModeArg::ZpTheorem => ZpMode::ZpTheorem,
            ModeArg::ZpFull => ZpMode::ZpFull,
        };
    }
    if let Some(s) = common.squeeze {
        spec.run.squeeze_mode = match s {
            SqueezeArg::Verbatim => SqueezeMode::Verbatim,
            SqueezeArg::Rederived => SqueezeMode::Rederived,
        };
    }
    if let Some(g) = common.gamma {
        spec.run.gamma = g;
    }
    Ok(spec)
}

fn valid_spec(common: &Common) -> Result<SimSpec, Failure> {
    let spec = read_spec(common)?;
    let violations = spec.validate();
    if violations.is_empty() {
        return Ok(spec);
    }
    for v in &violations {
        eprintln!("violation: {v}");
    }
    Err(Failure::new(
        EXIT_INVALID,
        anyhow::anyhow!("{} has {} violation(s)", common.config.display(), violations.len()),
    ))
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&common.out)
        .with_context(|| format!("cannot create {}", common.out.display()))?;
    Ok(&common.out)
}

fn validate(common: &Common) -> Result<(), Failure> {
    valid_spec(common)?;
    println!("{}: valid", common.config.display());
    Ok(())
}

fn mode_name(mode: ZpMode) -> &'static str {
    match mode {
        ZpMode::ZpTheorem => "zp-theorem",
        ZpMode::ZpFull => "zp-full",
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    seed: u64,
    mode: &'static str,
    offload: &'a ExpertAssignment,
    makespan_ns: u64,
    metrics: &'a Metrics,
}

fn simulate(common: &Common, dump_graph: bool) -> Result<(), Failure> {
    let spec = valid_spec(common)?;
    let d = derive_task_durations(&spec).map_err(|e| plan_failure(e.into()))?;
    let plan = match &spec.run.offload {
        Some(o) => ExpertAssignment::from_vec(o.clone()),
        None if spec.run.asym_ea => plan_offload(&spec, &d).map_err(plan_failure)?.assignment,
        None => {
            let bounds = memory_bounds(&spec).map_err(|e| plan_failure(e.into()))?;
            if bounds.n_min > 0 {
                return Err(plan_failure(PlanError::NeedsOffload(bounds.n_min)));
            }
            ExpertAssignment::zeros(spec.model.layers)
        }
    };
    let SimRun { graph, timeline, metrics } = simulate_zp(&spec, &d, &plan).map_err(plan_failure)?;
    let out = out_dir(common)?;
    write_trace(&export_trace(&graph, &timeline), out.join("trace.json"))
        .with_context(|| format!("cannot write {}", out.join("trace.json").display()))?;
    let report = SimulateReport {
        seed: common.seed,
        mode: mode_name(spec.run.mode),
        offload: &plan,
        makespan_ns: timeline.makespan,
        metrics: &metrics,
    };
    write_json(&report, out.join("metrics.json"))
        .with_context(|| format!("cannot write {}", out.join("metrics.json").display()))?;
    if dump_graph {
        write_graph(&graph, out.join("graph.json"))
            .with_context(|| format!("cannot write {}", out.join("graph.json").display()))?;
    }
    let a = metrics.device(Role::Attention);
    let e = metrics.device(Role::Expert);
    println!("makespan: {} ns", timeline.makespan);
    println!("throughput: {:.1} tokens/s", metrics.throughput);
    println!("offload: {:?}", plan.offload);
    println!(
        "attention utilization: {:.3} (steady {:.3}), expert utilization: {:.3}",
        a.utilization_active, a.steady_state_utilization, e.utilization_active
    );
    Ok(())
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    seed: u64,
    mode: &'static str,
    squeeze_mode: SqueezeMode,
    plan: &'a zebrasim_core::OffloadPlan,
    makespan_without_offload_ns: Option<u64>,
    makespan_with_plan_ns: u64,
    improvement: Option<f64>,
    attention_idle_without_offload_ns: Option<u64>,
    attention_idle_with_plan_ns: u64,
    note: Option<&'static str>,
}

fn optimize(common: &Common) -> Result<(), Failure> {
    let spec = valid_spec(common)?;
    let d = derive_task_durations(&spec).map_err(|e| plan_failure(e.into()))?;
    let plan = plan_offload(&spec, &d).map_err(plan_failure)?;
    let with_plan = simulate_zp(&spec, &d, &plan.assignment).map_err(plan_failure)?;
    let needs_offload = memory_bounds(&spec).map(|b| b.n_min > 0).unwrap_or(true);
    let without = if needs_offload {
        None
    } else {
        Some(simulate_zp(&spec, &d, &ExpertAssignment::zeros(spec.model.layers)).map_err(plan_failure)?)
    };
    let before = without.as_ref().map(|r| r.timeline.makespan);
    let after = with_plan.timeline.makespan;
    let idle = |r: &SimRun| r.metrics.device(Role::Attention).idle_total;
    let note = (plan.t_gather <= zebrasim_core::time::Frac::from_integer(0)).then_some("no bubbles to squeeze");
    let report = OptimizeReport {
        seed: common.seed,
        mode: mode_name(spec.run.mode),
        squeeze_mode: spec.run.squeeze_mode,
        plan: &plan,
        makespan_without_offload_ns: before,
        makespan_with_plan_ns: after,
        improvement: before.map(|b| 1.0 - after as f64 / b as f64),
        attention_idle_without_offload_ns: without.as_ref().map(idle),
        attention_idle_with_plan_ns: idle(&with_plan),
        note,
    };
    let out = out_dir(common)?;
    write_json(&plan.assignment, out.join("offload_plan.json"))?;
    write_json(&report, out.join("optimize_report.json"))?;
    println!("offload plan: {:?}", plan.assignment.offload);
    if let Some(n) = note {
        println!("{n}");
    }
    match before {
        Some(b) => println!("makespan: {b} ns -> {after} ns"),
        None => println!("makespan with plan: {after} ns (no-offload run does not fit memory)"),
    }
    Ok(())
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    seed: u64,
    results: &'a T,
}

fn sweep(common: &Common, expert_gpus: Option<Vec<u32>>, seq_lens: Option<Vec<u64>>) -> Result<(), Failure> {
    let spec = valid_spec(common)?;
    let cfg = spec.run.sweep.clone();
    let ns = expert_gpus
        .or_else(|| cfg.as_ref().map(|c| c.expert_gpus.clone()))
        .unwrap_or_else(|| vec![spec.cluster.expert_gpus()]);
    let lens = seq_lens
        .or_else(|| cfg.as_ref().map(|c| c.seq_lens.clone()))
        .unwrap_or_else(|| vec![spec.model.seq_len]);
    if ns.contains(&0) {
        return Err(Failure::new(EXIT_INVALID, anyhow::anyhow!("expert GPU counts must be positive")));
    }
    let records = parallel_sweep(&spec, &ns, &lens);
    let out = out_dir(common)?;
    write_json(&Wrapped { seed: common.seed, results: &records }, out.join("sweep.json"))?;
    write_sweep_csv(&records, out.join("sweep.csv")).context("cannot write sweep.csv")?;
    let best = best_ratio_per_seq(&records);
    if best.is_empty() {
        println!("no EP-Ideal reference: speedups need coefficient-priced roles");
    }
    for (len, n, s) in best {
        println!("seq_len {len}: best {}:{n} (speedup over EP-Ideal {s:.3})", spec.cluster.attention_gpus());
    }
    for r in records.iter().filter(|r| !r.asym_ea_available && r.strategy == zebrasim_core::Strategy::ZpAsymEa) {
        println!("{}:{} seq_len {}: asymmetric offload unavailable", r.attention_gpus, r.expert_gpus, r.seq_len);
    }
    Ok(())
}

fn compare(common: &Common) -> Result<(), Failure> {
    let spec = valid_spec(common)?;
    let results = compare_strategies(&spec);
    let out = out_dir(common)?;
    write_json(&Wrapped { seed: common.seed, results: &results }, out.join("compare.json"))?;
    write_strategy_csv(&results, out.join("compare.csv")).context("cannot write compare.csv")?;
    print!("{}", ranking_table(&results));
    Ok(())
}
