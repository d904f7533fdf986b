//! Cluster, model, profile and run settings, plus cross-field validation.
//!
//! The types here mirror the JSON document one-to-one (`cluster`, `model`,
//! `profile`, `run`); unknown keys are rejected on deserialization. Parsing
//! from a file happens in the `zebrasim` crate.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::time::Nanos;

/// One side of a ZP group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Attention,
    Expert,
}

impl Role {
    pub const ALL: [Role; 2] = [Role::Attention, Role::Expert];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Attention => "attention",
            Role::Expert => "expert",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub cluster: ClusterSpec,
    pub model: ModelSpec,
    pub profile: HardwareProfile,
    #[serde(default)]
    pub run: RunConfig,
}

/// GPU class names for a role. A list is accepted so that configs naming
/// several classes for one role are reported by validation instead of
/// failing to parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GpuSelector {
    One(String),
    Many(Vec<String>),
}

impl GpuSelector {
    pub fn names(&self) -> Vec<&str> {
        match self {
            GpuSelector::One(s) => alloc::vec![s.as_str()],
            GpuSelector::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }

    /// The single class for this role, or `None` if zero or several distinct
    /// classes are named.
    pub fn single(&self) -> Option<&str> {
        let names = self.names();
        let first = *names.first()?;
        names.iter().all(|n| *n == first).then_some(first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSpec {
    pub count: u32,
    pub gpu: GpuSelector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub attention: RoleSpec,
    pub expert: RoleSpec,
    /// Per-GPU link bandwidth, bytes per second.
    pub link_bandwidth: u64,
    /// Bytes moved per token per all-to-all; defaults to `2 * hidden_dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes_per_token: Option<u64>,
}

impl ClusterSpec {
    /// `M`.
    pub fn attention_gpus(&self) -> u32 {
        self.attention.count
    }

    /// `N`.
    pub fn expert_gpus(&self) -> u32 {
        self.expert.count
    }

    pub fn role(&self, role: Role) -> &RoleSpec {
        match role {
            Role::Attention => &self.attention,
            Role::Expert => &self.expert,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layers: u32,
    pub experts_per_layer: u32,
    pub top_k: u32,
    pub hidden_dim: u32,
    /// Tokens per sequence; every sequence in a run has this length.
    pub seq_len: u64,
    pub microbatches: u32,
    /// Sequences each attention GPU processes per microbatch.
    pub sequences_per_microbatch: u32,
    /// Bytes per expert including gradients and optimizer state. Without it
    /// no memory bounds apply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_mem: Option<u64>,
    #[serde(default)]
    pub activation_mem_per_token: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuMemory {
    pub memory_capacity: u64,
    /// Weights, gradients and optimizer state of everything except experts.
    #[serde(default)]
    pub non_expert_memory: u64,
}

/// Per-token cost coefficients, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub attn_linear: f64,
    pub attn_quadratic: f64,
    /// Time per token for one layer's expert FFN.
    pub expert: f64,
}

/// Directly measured forward times for a class, in integer nanoseconds.
/// Signed so that bad tables surface as violations rather than parse errors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDurations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn_fwd: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_expert_fwd: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_layer_fwd: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommTable {
    pub dispatch: i64,
    pub combine: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareProfile {
    pub gpus: BTreeMap<String, GpuMemory>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub coefficients: BTreeMap<String, Coefficients>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub durations: BTreeMap<String, ClassDurations>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm: Option<CommTable>,
    /// Relative routing load per expert; balanced when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_load: Option<Vec<f64>>,
}

/// How the last layer is modelled in a ZP graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZpMode {
    /// Layer `L` has no expert tasks; forward turns straight into backward
    /// on the attention GPU.
    ZpTheorem,
    /// Layer `L` experts run and the turnaround happens on the expert GPU.
    #[default]
    ZpFull,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SqueezeMode {
    /// `T_squeeze = T^Exp_E N/n * n1 + T^Attn_E N/n * n2`.
    #[default]
    Verbatim,
    /// Per-GPU accounting: `n2 * T^Exp_E N/n + n1 * T^Attn_E N/n`.
    Rederived,
}

/// Inclusive range of layers used for steady-state utilization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerWindow {
    pub first: u32,
    pub last: u32,
}

impl LayerWindow {
    /// Middle half of the model: drops the first and last quarter of layers.
    pub fn middle(layers: u32) -> Self {
        let skip = layers / 4;
        LayerWindow {
            first: skip + 1,
            last: (layers - skip).max(skip + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpConfig {
    /// GPU role of each pipeline stage, first stage first.
    pub stages: Vec<Role>,
    /// Bytes of weights, gradients and optimizer state for one full layer.
    pub layer_memory: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub expert_gpus: Vec<u32>,
    pub seq_lens: Vec<u64>,
}

fn default_gamma() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: ZpMode,
    #[serde(default)]
    pub asym_ea: bool,
    #[serde(default)]
    pub squeeze_mode: SqueezeMode,
    /// Backward-to-forward compute time ratio.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub forward_only: bool,
    /// Fixed offload plan (experts per expert GPU per layer).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offload: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_window: Option<LayerWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pp: Option<PpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: ZpMode::default(),
            asym_ea: false,
            squeeze_mode: SqueezeMode::default(),
            gamma: default_gamma(),
            forward_only: false,
            offload: None,
            steady_window: None,
            pp: None,
            sweep: None,
        }
    }
}

/// Experts offloaded from each expert GPU at each layer (`o_1 .. o_L`).
/// Serializes as a bare JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpertAssignment {
    pub offload: Vec<u32>,
}

impl ExpertAssignment {
    pub fn zeros(layers: u32) -> Self {
        ExpertAssignment {
            offload: alloc::vec![0; layers as usize],
        }
    }

    pub fn from_vec(offload: Vec<u32>) -> Self {
        ExpertAssignment { offload }
    }

    pub fn total(&self) -> u64 {
        self.offload.iter().map(|&o| u64::from(o)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.offload.iter().all(|&o| o == 0)
    }

    /// Offload at 1-based `layer`; layers past the end offload nothing.
    pub fn at(&self, layer: u32) -> u32 {
        self.offload.get(layer as usize - 1).copied().unwrap_or(0)
    }
}

/// A GPU class with coefficient costs, resolved from the profile.
#[derive(Debug, Clone, PartialEq)]
pub struct GpuClass {
    pub name: String,
    pub memory_capacity: u64,
    pub non_expert_memory: u64,
    pub attn_coeff_linear: f64,
    pub attn_coeff_quadratic: f64,
    pub expert_coeff: f64,
}

impl GpuClass {
    pub fn new(name: &str, linear: f64, quadratic: f64, expert: f64) -> Self {
        GpuClass {
            name: String::from(name),
            memory_capacity: u64::MAX,
            non_expert_memory: 0,
            attn_coeff_linear: linear,
            attn_coeff_quadratic: quadratic,
            expert_coeff: expert,
        }
    }
}

/// How a role's compute times are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassCost<'a> {
    Coefficients(GpuClass),
    Table(&'a ClassDurations),
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("{role} GPU count must be at least 1")]
    NoGpus { role: Role },
    #[error("{role} role names several GPU classes; one class per role is supported")]
    MixedClasses { role: Role },
    #[error("{role} role uses unknown GPU class `{name}`")]
    UnknownGpuClass { role: Role, name: String },
    #[error("GPU class `{class}` needs exactly one of profile.coefficients / profile.durations (found {found})")]
    CostSource { class: String, found: u8 },
    #[error("GPU class `{class}` duration table is missing `{field}`")]
    MissingDuration { class: String, field: &'static str },
    #[error("duration `{field}` is negative ({value} ns)")]
    NegativeDuration { field: String, value: i64 },
    #[error("GPU class `{class}` coefficient `{field}` must be finite and >= 0")]
    InvalidCoefficient { class: String, field: &'static str },
    #[error("GPU class `{class}` has zero memory capacity")]
    ZeroMemoryCapacity { class: String },
    #[error("N must divide n: {experts} experts per layer over {expert_gpus} expert GPUs")]
    ExpertsNotDivisible { experts: u32, expert_gpus: u32 },
    #[error("model needs at least one layer")]
    NoLayers,
    #[error("model needs at least one microbatch")]
    NoMicrobatches,
    #[error("top_k must satisfy 1 <= k <= n (k = {top_k}, n = {experts})")]
    TopKRange { top_k: u32, experts: u32 },
    #[error("asymmetric expert assignment needs M to be a multiple of N or N a multiple of M (M = {attention_gpus}, N = {expert_gpus})")]
    AsymEaDivisibility { attention_gpus: u32, expert_gpus: u32 },
    #[error("link bandwidth must be positive when no comm table is given")]
    ZeroBandwidth,
    #[error("offload plan has {got} entries, model has {expected} layers")]
    OffloadLength { expected: usize, got: usize },
    #[error("offload at layer {layer} is {experts}, not a multiple of the chunk size {chunk}")]
    OffloadNotChunkMultiple { layer: u32, experts: u32, chunk: u32 },
    #[error("offload at layer {layer} is {experts}, but each expert GPU only holds {capacity}")]
    OffloadExceedsLayer { layer: u32, experts: u32, capacity: u32 },
    #[error("zp-theorem mode has no layer-{layer} experts to offload")]
    OffloadOnTheoremLastLayer { layer: u32 },
    #[error("gamma must be finite and > 0 (got {0})")]
    Gamma(f64),
    #[error("expert_load must have {expected} finite non-negative entries with a positive sum")]
    ExpertLoad { expected: u32 },
    #[error("steady-state window {first}..={last} is outside 1..={layers}")]
    Window { first: u32, last: u32, layers: u32 },
    #[error("pipeline needs at least 2 stages (got {0})")]
    PipelineStages(usize),
}

/// Every violated invariant of `spec`; empty means valid.
pub fn validate_spec(spec: &SimSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let cluster = &spec.cluster;
    let model = &spec.model;
    let run = &spec.run;

    for role in Role::ALL {
        if cluster.role(role).count == 0 {
            out.push(Violation::NoGpus { role });
        }
    }

    for role in Role::ALL {
        let sel = &cluster.role(role).gpu;
        let Some(name) = sel.single() else {
            out.push(Violation::MixedClasses { role });
            continue;
        };
        if !spec.profile.gpus.contains_key(name) {
            out.push(Violation::UnknownGpuClass {
                role,
                name: String::from(name),
            });
        }
    }

    // Every class the profile defines must have exactly one cost source.
    for (name, mem) in &spec.profile.gpus {
        if mem.memory_capacity == 0 {
            out.push(Violation::ZeroMemoryCapacity { class: name.clone() });
        }
        let found = u8::from(spec.profile.coefficients.contains_key(name))
            + u8::from(spec.profile.durations.contains_key(name));
        if found != 1 {
            out.push(Violation::CostSource {
                class: name.clone(),
                found,
            });
        }
    }
    for (name, c) in &spec.profile.coefficients {
        for (field, v) in [
            ("attn_linear", c.attn_linear),
            ("attn_quadratic", c.attn_quadratic),
            ("expert", c.expert),
        ] {
            if !v.is_finite() || v < 0.0 {
                out.push(Violation::InvalidCoefficient {
                    class: name.clone(),
                    field,
                });
            }
        }
    }
    for (name, d) in &spec.profile.durations {
        for (field, v) in [
            ("attn_fwd", d.attn_fwd),
            ("single_expert_fwd", d.single_expert_fwd),
            ("expert_layer_fwd", d.expert_layer_fwd),
        ] {
            if let Some(v) = v.filter(|v| *v < 0) {
                out.push(Violation::NegativeDuration {
                    field: alloc::format!("durations.{name}.{field}"),
                    value: v,
                });
            }
        }
    }
    // A duration-table class must provide what its role consumes.
    for role in Role::ALL {
        let Some(name) = cluster.role(role).gpu.single() else { continue };
        let Some(d) = spec.profile.durations.get(name) else { continue };
        let required: &[(&'static str, Option<i64>)] = match role {
            Role::Attention => &[
                ("attn_fwd", d.attn_fwd),
                ("single_expert_fwd", d.single_expert_fwd),
            ],
            Role::Expert => &[("expert_layer_fwd", d.expert_layer_fwd)],
        };
        for (field, v) in required {
            if v.is_none() {
                out.push(Violation::MissingDuration {
                    class: String::from(name),
                    field,
                });
            }
        }
    }
    match &spec.profile.comm {
        Some(c) => {
            for (field, v) in [("comm.dispatch", c.dispatch), ("comm.combine", c.combine)] {
                if v < 0 {
                    out.push(Violation::NegativeDuration {
                        field: String::from(field),
                        value: v,
                    });
                }
            }
        }
        None => {
            if cluster.link_bandwidth == 0 {
                out.push(Violation::ZeroBandwidth);
            }
        }
    }

    if model.layers == 0 {
        out.push(Violation::NoLayers);
    }
    if model.microbatches == 0 {
        out.push(Violation::NoMicrobatches);
    }
    if model.top_k == 0 || model.top_k > model.experts_per_layer {
        out.push(Violation::TopKRange {
            top_k: model.top_k,
            experts: model.experts_per_layer,
        });
    }
    let m = cluster.attention_gpus();
    let n_gpus = cluster.expert_gpus();
    if n_gpus > 0 && !model.experts_per_layer.is_multiple_of(n_gpus) {
        out.push(Violation::ExpertsNotDivisible {
            experts: model.experts_per_layer,
            expert_gpus: n_gpus,
        });
    }
    if let Some(load) = &spec.profile.expert_load {
        let ok = load.len() == model.experts_per_layer as usize
            && load.iter().all(|x| x.is_finite() && *x >= 0.0)
            && load.iter().sum::<f64>() > 0.0;
        if !ok {
            out.push(Violation::ExpertLoad {
                expected: model.experts_per_layer,
            });
        }
    }

    let offload_requested = run
        .offload
        .as_ref()
        .is_some_and(|o| o.iter().any(|x| *x > 0));
    let divisible = m > 0 && n_gpus > 0 && (m.is_multiple_of(n_gpus) || n_gpus.is_multiple_of(m));
    if (run.asym_ea || offload_requested) && m > 0 && n_gpus > 0 && !divisible {
        out.push(Violation::AsymEaDivisibility {
            attention_gpus: m,
            expert_gpus: n_gpus,
        });
    }
    if let Some(plan) = &run.offload {
        if plan.len() != model.layers as usize {
            out.push(Violation::OffloadLength {
                expected: model.layers as usize,
                got: plan.len(),
            });
        }
        if divisible && n_gpus > 0 {
            let (_, chunk) = crate::scheduler::chunk_sizes(m, n_gpus)
                .expect("divisibility checked above");
            let capacity = model.experts_per_layer / n_gpus;
            out.extend(plan_violations(plan, chunk, capacity, run.mode));
        }
    }

    if !run.gamma.is_finite() || run.gamma <= 0.0 {
        out.push(Violation::Gamma(run.gamma));
    }
    if let Some(w) = run.steady_window {
        if w.first == 0 || w.first > w.last || w.last > model.layers {
            out.push(Violation::Window {
                first: w.first,
                last: w.last,
                layers: model.layers,
            });
        }
    }
    if let Some(pp) = &run.pp {
        if pp.stages.len() < 2 {
            out.push(Violation::PipelineStages(pp.stages.len()));
        }
    }
    out
}

/// Chunk-granularity and per-layer capacity checks for an offload plan.
pub fn plan_violations(plan: &[u32], chunk: u32, capacity: u32, mode: ZpMode) -> Vec<Violation> {
    let mut out = Vec::new();
    let layers = plan.len() as u32;
    for (i, &o) in plan.iter().enumerate() {
        let layer = i as u32 + 1;
        if chunk > 0 && o % chunk != 0 {
            out.push(Violation::OffloadNotChunkMultiple {
                layer,
                experts: o,
                chunk,
            });
        }
        if o > capacity {
            out.push(Violation::OffloadExceedsLayer {
                layer,
                experts: o,
                capacity,
            });
        }
        if mode == ZpMode::ZpTheorem && layer == layers && o > 0 {
            out.push(Violation::OffloadOnTheoremLastLayer { layer });
        }
    }
    out
}

impl SimSpec {
    pub fn validate(&self) -> Vec<Violation> {
        validate_spec(self)
    }

    pub fn class_name(&self, role: Role) -> Option<&str> {
        self.cluster.role(role).gpu.single()
    }

    /// Coefficient view of a role's GPU class, if the class is priced by
    /// coefficients.
    pub fn gpu_class(&self, role: Role) -> Option<GpuClass> {
        let name = self.class_name(role)?;
        self.class_by_name(name)
    }

    pub fn class_by_name(&self, name: &str) -> Option<GpuClass> {
        let c = self.profile.coefficients.get(name)?;
        let mem = self.profile.gpus.get(name);
        Some(GpuClass {
            name: String::from(name),
            memory_capacity: mem.map_or(u64::MAX, |m| m.memory_capacity),
            non_expert_memory: mem.map_or(0, |m| m.non_expert_memory),
            attn_coeff_linear: c.attn_linear,
            attn_coeff_quadratic: c.attn_quadratic,
            expert_coeff: c.expert,
        })
    }

    pub fn class_cost(&self, role: Role) -> Option<ClassCost<'_>> {
        let name = self.class_name(role)?;
        if let Some(t) = self.profile.durations.get(name) {
            return Some(ClassCost::Table(t));
        }
        self.class_by_name(name).map(ClassCost::Coefficients)
    }

    pub fn memory(&self, role: Role) -> Option<&GpuMemory> {
        self.profile.gpus.get(self.class_name(role)?)
    }

    pub fn bytes_per_token(&self) -> u64 {
        self.cluster
            .bytes_per_token
            .unwrap_or(2 * u64::from(self.model.hidden_dim))
    }

    /// Fixed comm override in ns, if the profile supplies one.
    pub fn comm_override(&self) -> Option<(Nanos, Nanos)> {
        self.profile
            .comm
            .map(|c| (c.dispatch.max(0) as Nanos, c.combine.max(0) as Nanos))
    }

    pub fn steady_window(&self) -> LayerWindow {
        self.run
            .steady_window
            .unwrap_or_else(|| LayerWindow::middle(self.model.layers))
    }

    /// Tokens entering all attention GPUs per microbatch.
    pub fn global_tokens_per_microbatch(&self) -> u64 {
        u64::from(self.cluster.attention_gpus())
            * u64::from(self.model.sequences_per_microbatch)
            * self.model.seq_len
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::minimal;
    use super::*;

    #[test]
    fn minimal_is_valid() {
        assert_eq!(validate_spec(&minimal()), Vec::new());
    }

    #[test]
    fn n_must_divide_experts() {
        let mut spec = minimal();
        spec.model.experts_per_layer = 7;
        spec.cluster.expert.count = 2;
        let v = validate_spec(&spec);
        assert_eq!(
            v,
            [Violation::ExpertsNotDivisible {
                experts: 7,
                expert_gpus: 2
            }]
        );
        assert!(alloc::format!("{}", v[0]).contains("N must divide n"));
    }

    #[test]
    fn asym_ea_needs_ratio_divisibility() {
        let mut spec = minimal();
        spec.cluster.attention.count = 4;
        spec.cluster.expert.count = 3;
        spec.model.experts_per_layer = 6;
        spec.run.asym_ea = true;
        assert_eq!(
            validate_spec(&spec),
            [Violation::AsymEaDivisibility {
                attention_gpus: 4,
                expert_gpus: 3
            }]
        );
        // Plain ZP does not care.
        spec.run.asym_ea = false;
        assert!(validate_spec(&spec).is_empty());
    }

    #[test]
    fn offload_chunk_multiple() {
        let mut spec = minimal();
        // M=4, N=2 -> chunk of 2 experts per expert GPU
        spec.cluster.attention.count = 4;
        spec.cluster.expert.count = 2;
        spec.model.experts_per_layer = 8;
        spec.model.layers = 2;
        spec.run.offload = Some(alloc::vec![0, 1]);
        assert_eq!(
            validate_spec(&spec),
            [Violation::OffloadNotChunkMultiple {
                layer: 2,
                experts: 1,
                chunk: 2
            }]
        );
    }

    #[test]
    fn reports_every_violation() {
        let mut spec = minimal();
        spec.model.experts_per_layer = 3;
        spec.cluster.expert.count = 2;
        spec.profile.comm = Some(CommTable {
            dispatch: -5,
            combine: 0,
        });
        let v = validate_spec(&spec);
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v.contains(&Violation::ExpertsNotDivisible {
            experts: 3,
            expert_gpus: 2
        }));
        assert!(v.contains(&Violation::NegativeDuration {
            field: String::from("comm.dispatch"),
            value: -5
        }));
    }

    #[test]
    fn mixed_and_unknown_classes() {
        let mut spec = minimal();
        spec.cluster.attention.gpu =
            GpuSelector::Many(alloc::vec![String::from("fast"), String::from("slow")]);
        spec.cluster.expert.gpu = GpuSelector::One(String::from("tpu"));
        let v = validate_spec(&spec);
        assert!(v.contains(&Violation::MixedClasses {
            role: Role::Attention
        }));
        assert!(v.contains(&Violation::UnknownGpuClass {
            role: Role::Expert,
            name: String::from("tpu")
        }));
        // Repeating the same name is not mixing.
        spec.cluster.attention.gpu =
            GpuSelector::Many(alloc::vec![String::from("fast"), String::from("fast")]);
        assert_eq!(spec.class_name(Role::Attention), Some("fast"));
    }

    #[test]
    fn duration_table_class() {
        let mut spec = minimal();
        spec.profile.coefficients.remove("slow");
        let v = validate_spec(&spec);
        assert_eq!(
            v,
            [Violation::CostSource {
                class: String::from("slow"),
                found: 0
            }]
        );
        spec.profile
            .durations
            .insert(String::from("slow"), ClassDurations::default());
        assert_eq!(
            validate_spec(&spec),
            [Violation::MissingDuration {
                class: String::from("slow"),
                field: "expert_layer_fwd"
            }]
        );
        spec.profile.durations.get_mut("slow").unwrap().expert_layer_fwd = Some(4);
        assert!(validate_spec(&spec).is_empty());
        assert!(matches!(
            spec.class_cost(Role::Expert),
            Some(ClassCost::Table(_))
        ));
    }

    #[test]
    fn middle_window() {
        assert_eq!(LayerWindow::middle(20), LayerWindow { first: 6, last: 15 });
        assert_eq!(LayerWindow::middle(1), LayerWindow { first: 1, last: 1 });
        assert_eq!(LayerWindow::middle(3), LayerWindow { first: 1, last: 3 });
    }
}
