//! Typed task DAGs for zebra parallelism and the disaggregated baseline.
//!
//! A ZP group is simulated with one representative device per role: all
//! attention GPUs run identical work, as do all expert GPUs, and each
//! all-to-all is a single aggregated task per (layer, microbatch,
//! direction). Every device has one compute lane and two comm lanes; a comm
//! task sits on the lane of the device that sends it.
//!
//! Forward chain for layer `i`, microbatch `j`:
//! `AttnF(i,j) -> DispF(i,j) -> ExpF(i,j) -> CombF(i,j) -> AttnF(i+1,j)`.
//! Backward mirrors it: `AttnB(i+1,j) -> DispB(i,j) -> ExpB(i,j) ->
//! CombB(i,j) -> AttnB(i,j)`. Offloaded experts add `DispF -> OffExpF ->
//! AttnF(i+1)` (and the backward mirror) on the attention device.

mod baselines;

pub use baselines::{
    ep_iteration_time, pp_assign_layers, EpClassTimes, PpError, PpPlan, PpStage,
};

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{plan_violations, ExpertAssignment, Role, SimSpec, Violation, ZpMode};
use crate::costmodel::TaskDurations;
use crate::time::{mul_div_round, Nanos};

/// Representative device of a role.
pub type Device = Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    AttnF,
    AttnB,
    ExpF,
    ExpB,
    OffExpF,
    OffExpB,
    DispF,
    DispB,
    CombF,
    CombB,
}

impl TaskKind {
    pub fn is_backward(self) -> bool {
        matches!(
            self,
            TaskKind::AttnB | TaskKind::ExpB | TaskKind::OffExpB | TaskKind::DispB | TaskKind::CombB
        )
    }

    pub fn is_comm(self) -> bool {
        matches!(
            self,
            TaskKind::DispF | TaskKind::DispB | TaskKind::CombF | TaskKind::CombB
        )
    }

    pub fn device(self) -> Device {
        match self {
            TaskKind::AttnF
            | TaskKind::AttnB
            | TaskKind::OffExpF
            | TaskKind::OffExpB
            | TaskKind::DispF
            | TaskKind::DispB => Role::Attention,
            TaskKind::ExpF | TaskKind::ExpB | TaskKind::CombF | TaskKind::CombB => Role::Expert,
        }
    }

    pub fn lane(self) -> Lane {
        match self {
            TaskKind::DispF | TaskKind::DispB => Lane::Dispatch,
            TaskKind::CombF | TaskKind::CombB => Lane::Combine,
            _ => Lane::Compute,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::AttnF => "AttnF",
            TaskKind::AttnB => "AttnB",
            TaskKind::ExpF => "ExpF",
            TaskKind::ExpB => "ExpB",
            TaskKind::OffExpF => "OffExpF",
            TaskKind::OffExpB => "OffExpB",
            TaskKind::DispF => "DispF",
            TaskKind::DispB => "DispB",
            TaskKind::CombF => "CombF",
            TaskKind::CombB => "CombB",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Compute,
    Dispatch,
    Combine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaneId {
    pub device: Device,
    pub lane: Lane,
}

impl LaneId {
    pub const COUNT: usize = 6;

    pub const ALL: [LaneId; 6] = [
        LaneId::new(Role::Attention, Lane::Compute),
        LaneId::new(Role::Attention, Lane::Dispatch),
        LaneId::new(Role::Attention, Lane::Combine),
        LaneId::new(Role::Expert, Lane::Compute),
        LaneId::new(Role::Expert, Lane::Dispatch),
        LaneId::new(Role::Expert, Lane::Combine),
    ];

    pub const fn new(device: Device, lane: Lane) -> Self {
        LaneId { device, lane }
    }

    pub const fn index(self) -> usize {
        let d = match self.device {
            Role::Attention => 0,
            Role::Expert => 3,
        };
        let l = match self.lane {
            Lane::Compute => 0,
            Lane::Dispatch => 1,
            Lane::Combine => 2,
        };
        d + l
    }

    pub fn is_compute(self) -> bool {
        self.lane == Lane::Compute
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub kind: TaskKind,
    /// 1-based.
    pub layer: u32,
    /// 1-based.
    pub microbatch: u32,
    pub device: Device,
    pub lane: Lane,
    pub duration: Nanos,
    /// Token-expert assignments this task moves or computes.
    pub tokens: u64,
    /// Compute task whose lane position decides where a comm task queues.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub producer: Option<TaskId>,
}

impl Task {
    pub fn lane_id(&self) -> LaneId {
        LaneId::new(self.device, self.lane)
    }

    pub fn label(&self) -> alloc::string::String {
        alloc::format!("{}({},{})", self.kind, self.layer, self.microbatch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMode {
    ZpTheorem,
    ZpFull,
    DistEp,
}

impl From<ZpMode> for GraphMode {
    fn from(m: ZpMode) -> Self {
        match m {
            ZpMode::ZpTheorem => GraphMode::ZpTheorem,
            ZpMode::ZpFull => GraphMode::ZpFull,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("offload plan has {got} layers, graph has {expected}")]
    PlanLength { expected: usize, got: usize },
    #[error("offload plan rejected: {0}")]
    Plan(Violation),
    #[error("asymmetric offload needs M | N or N | M (M = {0}, N = {1})")]
    Divisibility(u32, u32),
    #[error("dependency cycle through {0:?}")]
    Cycle(Vec<TaskId>),
}

/// Shape of the workload the graph is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphShape {
    pub layers: u32,
    pub microbatches: u32,
    pub experts_per_layer: u32,
    pub attention_gpus: u32,
    pub expert_gpus: u32,
    /// Token-expert assignments dispatched per (layer, microbatch).
    pub assignments_per_microbatch: u64,
}

impl GraphShape {
    pub fn from_spec(spec: &SimSpec) -> Self {
        GraphShape {
            layers: spec.model.layers,
            microbatches: spec.model.microbatches,
            experts_per_layer: spec.model.experts_per_layer,
            attention_gpus: spec.cluster.attention_gpus(),
            expert_gpus: spec.cluster.expert_gpus(),
            assignments_per_microbatch: spec.global_tokens_per_microbatch()
                * u64::from(spec.model.top_k),
        }
    }

    /// A shape with `M = N = 1` and plenty of experts, for tests and
    /// analytic scenarios given directly as durations.
    pub fn simple(layers: u32, microbatches: u32, experts_per_layer: u32) -> Self {
        GraphShape {
            layers,
            microbatches,
            experts_per_layer,
            attention_gpus: 1,
            expert_gpus: 1,
            assignments_per_microbatch: 0,
        }
    }
}

/// Immutable task DAG.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskGraph {
    mode: GraphMode,
    layers: u32,
    microbatches: u32,
    forward_only: bool,
    tasks: Vec<Task>,
    edges: Vec<(TaskId, TaskId)>,
    #[serde(skip)]
    preds: Vec<Vec<TaskId>>,
    #[serde(skip)]
    succs: Vec<Vec<TaskId>>,
    #[serde(skip)]
    index: BTreeMap<(TaskKind, u32, u32), TaskId>,
}

impl TaskGraph {
    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    pub fn layers(&self) -> u32 {
        self.layers
    }

    pub fn microbatches(&self) -> u32 {
        self.microbatches
    }

    pub fn forward_only(&self) -> bool {
        self.forward_only
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id.index()]
    }

    pub fn edges(&self) -> &[(TaskId, TaskId)] {
        &self.edges
    }

    pub fn preds(&self, id: TaskId) -> &[TaskId] {
        &self.preds[id.index()]
    }

    pub fn succs(&self, id: TaskId) -> &[TaskId] {
        &self.succs[id.index()]
    }

    pub fn has_edge(&self, from: TaskId, to: TaskId) -> bool {
        self.succs[from.index()].contains(&to)
    }

    pub fn find(&self, kind: TaskKind, layer: u32, microbatch: u32) -> Option<TaskId> {
        self.index.get(&(kind, layer, microbatch)).copied()
    }

    /// Panicking lookup for tasks the caller knows exist.
    pub fn id(&self, kind: TaskKind, layer: u32, microbatch: u32) -> TaskId {
        self.find(kind, layer, microbatch)
            .unwrap_or_else(|| panic!("no task {kind}({layer},{microbatch})"))
    }

    pub fn lane_tasks(&self, lane: LaneId) -> impl Iterator<Item = &Task> + '_ {
        self.tasks.iter().filter(move |t| t.lane_id() == lane)
    }

    pub fn count(&self, pred: impl Fn(&Task) -> bool) -> usize {
        self.tasks.iter().filter(|t| pred(t)).count()
    }

    /// Returns a copy with `duration` of one task replaced.
    pub fn with_duration(&self, id: TaskId, duration: Nanos) -> TaskGraph {
        let mut g = self.clone();
        g.tasks[id.index()].duration = duration;
        g
    }

    /// Kahn's algorithm, smallest id first. Errors with a cycle if any.
    pub fn topo_order(&self) -> Result<Vec<TaskId>, Vec<TaskId>> {
        let extra: &[(TaskId, TaskId)] = &[];
        topo_with(self, extra)
    }
}

/// Topological order over graph edges plus `extra` edges, or a cycle.
pub(crate) fn topo_with(graph: &TaskGraph, extra: &[(TaskId, TaskId)]) -> Result<Vec<TaskId>, Vec<TaskId>> {
    use alloc::collections::BinaryHeap;
    use core::cmp::Reverse;

    let n = graph.tasks.len();
    let mut succ: Vec<Vec<TaskId>> = graph.succs.clone();
    let mut indeg: Vec<usize> = graph.preds.iter().map(Vec::len).collect();
    for &(a, b) in extra {
        succ[a.index()].push(b);
        indeg[b.index()] += 1;
    }
    let mut heap: BinaryHeap<Reverse<TaskId>> = (0..n)
        .filter(|&i| indeg[i] == 0)
        .map(|i| Reverse(TaskId(i as u32)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(t)) = heap.pop() {
        order.push(t);
        for &s in &succ[t.index()] {
            indeg[s.index()] -= 1;
            if indeg[s.index()] == 0 {
                heap.push(Reverse(s));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(find_cycle(&succ, &indeg))
}

/// Some cycle among nodes with remaining in-degree.
fn find_cycle(succ: &[Vec<TaskId>], indeg: &[usize]) -> Vec<TaskId> {
    let n = succ.len();
    let alive: Vec<bool> = indeg.iter().map(|&d| d > 0).collect();
    // Every live node has a live predecessor, so walking live successors
    // backwards is awkward; walk forward instead, which also stays live.
    let mut state = vec![0u8; n];
    for start in 0..n {
        if !alive[start] || state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        let mut path: Vec<usize> = vec![start];
        state[start] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < succ[node].len() {
                let s = succ[node][*next].index();
                *next += 1;
                if !alive[s] {
                    continue;
                }
                if state[s] == 1 {
                    let pos = path.iter().position(|&p| p == s).unwrap_or(0);
                    return path[pos..].iter().map(|&p| TaskId(p as u32)).collect();
                }
                if state[s] == 0 {
                    state[s] = 1;
                    stack.push((s, 0));
                    path.push(s);
                }
            } else {
                state[node] = 2;
                stack.pop();
                path.pop();
            }
        }
    }
    Vec::new()
}

struct Builder {
    graph: TaskGraph,
}

impl Builder {
    fn new(mode: GraphMode, layers: u32, microbatches: u32, forward_only: bool) -> Self {
        Builder {
            graph: TaskGraph {
                mode,
                layers,
                microbatches,
                forward_only,
                tasks: Vec::new(),
                edges: Vec::new(),
                preds: Vec::new(),
                succs: Vec::new(),
                index: BTreeMap::new(),
            },
        }
    }

    fn add(&mut self, kind: TaskKind, layer: u32, microbatch: u32, duration: Nanos, tokens: u64) -> TaskId {
        let id = TaskId(self.graph.tasks.len() as u32);
        self.graph.tasks.push(Task {
            id,
            kind,
            layer,
            microbatch,
            device: kind.device(),
            lane: kind.lane(),
            duration,
            tokens,
            producer: None,
        });
        self.graph.preds.push(Vec::new());
        self.graph.succs.push(Vec::new());
        self.graph.index.insert((kind, layer, microbatch), id);
        id
    }

    fn comm(&mut self, kind: TaskKind, layer: u32, mb: u32, duration: Nanos, tokens: u64, producer: TaskId) -> TaskId {
        let id = self.add(kind, layer, mb, duration, tokens);
        self.graph.tasks[id.index()].producer = Some(producer);
        self.edge(producer, id);
        id
    }

    fn edge(&mut self, from: TaskId, to: TaskId) {
        if self.graph.has_edge(from, to) {
            return;
        }
        self.graph.edges.push((from, to));
        self.graph.succs[from.index()].push(to);
        self.graph.preds[to.index()].push(from);
    }

    fn finish(self) -> Result<TaskGraph, GraphError> {
        self.graph.topo_order().map_err(GraphError::Cycle)?;
        Ok(self.graph)
    }
}

/// Per-layer durations and token split for a ZP graph.
struct LayerCost {
    attn_f: Nanos,
    attn_b: Nanos,
    exp_f: Nanos,
    exp_b: Nanos,
    off_f: Nanos,
    off_b: Nanos,
    exp_tokens: u64,
    off_tokens: u64,
}

fn layer_cost(shape: &GraphShape, d: &TaskDurations, offload: u32) -> LayerCost {
    let n = u128::from(shape.experts_per_layer.max(1));
    let big_n = u128::from(shape.expert_gpus);
    let m = u128::from(shape.attention_gpus.max(1));
    let moved = u128::from(offload) * big_n;
    let kept = n.saturating_sub(moved);
    // Each expert GPU keeps (n - o N)/n of its tokens; each attention GPU
    // takes o N / M experts, each costing T^Attn_E * N / n.
    let exp_f = mul_div_round(u128::from(d.expert_layer_fwd), kept, n);
    let off_f = mul_div_round(u128::from(d.single_expert_fwd), moved * big_n, m * n);
    let off_tokens = (u128::from(shape.assignments_per_microbatch) * moved / n) as u64;
    LayerCost {
        attn_f: d.attn_fwd,
        attn_b: d.backward(d.attn_fwd),
        exp_f,
        exp_b: d.backward(exp_f),
        off_f,
        off_b: d.backward(off_f),
        exp_tokens: shape.assignments_per_microbatch - off_tokens,
        off_tokens,
    }
}

fn check_plan(shape: &GraphShape, assignment: &ExpertAssignment, mode: ZpMode) -> Result<(), GraphError> {
    let expected = shape.layers as usize;
    if assignment.offload.len() != expected {
        return Err(GraphError::PlanLength {
            expected,
            got: assignment.offload.len(),
        });
    }
    if assignment.is_zero() {
        return Ok(());
    }
    let (m, n_gpus) = (shape.attention_gpus, shape.expert_gpus);
    let (_, chunk) = crate::scheduler::chunk_sizes(m, n_gpus)
        .map_err(|_| GraphError::Divisibility(m, n_gpus))?;
    let capacity = shape.experts_per_layer / n_gpus.max(1);
    match plan_violations(&assignment.offload, chunk, capacity, mode).into_iter().next() {
        Some(v) => Err(GraphError::Plan(v)),
        None => Ok(()),
    }
}

/// Builds the ZP graph. `forward_only` stops after the forward pass (layer
/// `L` keeps its combine so the forward output is back on the attention
/// side).
pub fn build_zp_graph(
    shape: &GraphShape,
    durations: &TaskDurations,
    assignment: &ExpertAssignment,
    mode: ZpMode,
    forward_only: bool,
) -> Result<TaskGraph, GraphError> {
    check_plan(shape, assignment, mode)?;
    let mut b = Builder::new(mode.into(), shape.layers, shape.microbatches, forward_only);
    build_zp_into(&mut b, shape, durations, assignment, mode, forward_only);
    b.finish()
}

fn build_zp_into(
    b: &mut Builder,
    shape: &GraphShape,
    d: &TaskDurations,
    assignment: &ExpertAssignment,
    mode: ZpMode,
    forward_only: bool,
) {
    use TaskKind::*;
    let l_max = shape.layers;
    let r = shape.microbatches;
    let total_tokens = shape.assignments_per_microbatch;
    let experts_at = |layer: u32| layer < l_max || mode == ZpMode::ZpFull;
    let costs: Vec<LayerCost> = (1..=l_max)
        .map(|l| layer_cost(shape, d, assignment.at(l)))
        .collect();
    let cost = |l: u32| &costs[l as usize - 1];

    // Forward.
    for l in 1..=l_max {
        let c = cost(l);
        let has_off = assignment.at(l) > 0;
        for j in 1..=r {
            let a = b.add(AttnF, l, j, c.attn_f, total_tokens);
            if l > 1 {
                if let Some(prev) = b.graph.find(CombF, l - 1, j) {
                    b.edge(prev, a);
                }
                if let Some(prev) = b.graph.find(OffExpF, l - 1, j) {
                    b.edge(prev, a);
                }
            }
            if !experts_at(l) {
                continue;
            }
            let disp = b.comm(DispF, l, j, d.dispatch, total_tokens, a);
            if has_off {
                let off = b.add(OffExpF, l, j, c.off_f, c.off_tokens);
                b.edge(disp, off);
            }
            let e = b.add(ExpF, l, j, c.exp_f, c.exp_tokens);
            b.edge(disp, e);
            if l < l_max || forward_only {
                b.comm(CombF, l, j, d.combine, total_tokens, e);
            }
        }
    }
    if forward_only {
        return;
    }

    // Backward, last layer first.
    for l in (1..=l_max).rev() {
        let c = cost(l);
        let has_off = assignment.at(l) > 0;
        for j in 1..=r {
            if !experts_at(l) {
                // zp-theorem turnaround on the attention GPU.
                let af = b.graph.id(AttnF, l, j);
                let ab = b.add(AttnB, l, j, c.attn_b, total_tokens);
                b.edge(af, ab);
                continue;
            }
            let (e, off) = if l == l_max {
                // Full-mode turnaround on the expert GPU (and for the
                // offloaded share, on the attention GPU).
                let ef = b.graph.id(ExpF, l, j);
                let e = b.add(ExpB, l, j, c.exp_b, c.exp_tokens);
                b.edge(ef, e);
                let off = has_off.then(|| {
                    let off_f = b.graph.id(OffExpF, l, j);
                    let off = b.add(OffExpB, l, j, c.off_b, c.off_tokens);
                    b.edge(off_f, off);
                    off
                });
                (e, off)
            } else {
                let upstream = b.graph.id(AttnB, l + 1, j);
                let disp = b.comm(DispB, l, j, d.dispatch, total_tokens, upstream);
                let off = has_off.then(|| {
                    let off = b.add(OffExpB, l, j, c.off_b, c.off_tokens);
                    b.edge(disp, off);
                    off
                });
                let e = b.add(ExpB, l, j, c.exp_b, c.exp_tokens);
                b.edge(disp, e);
                (e, off)
            };
            let comb = b.comm(CombB, l, j, d.combine, total_tokens, e);
            let ab = b.add(AttnB, l, j, c.attn_b, total_tokens);
            b.edge(comb, ab);
            if let Some(off) = off {
                b.edge(off, ab);
            }
        }
    }
}

/// ZP tasks (full mode, no offload) serialized into strict (layer,
/// microbatch) lockstep: every unit of work waits for the previous unit to
/// finish, so no two devices ever overlap.
pub fn build_distep_graph(
    shape: &GraphShape,
    durations: &TaskDurations,
    forward_only: bool,
) -> Result<TaskGraph, GraphError> {
    use TaskKind::*;
    let zero = ExpertAssignment::zeros(shape.layers);
    let mut b = Builder::new(GraphMode::DistEp, shape.layers, shape.microbatches, forward_only);
    build_zp_into(&mut b, shape, durations, &zero, ZpMode::ZpFull, forward_only);

    let l_max = shape.layers;
    let r = shape.microbatches;
    // (first, last) task of each unit, in execution order.
    let mut units: Vec<(TaskId, TaskId)> = Vec::new();
    for l in 1..=l_max {
        for j in 1..=r {
            let first = b.graph.id(AttnF, l, j);
            let last = if l < l_max || forward_only {
                b.graph.id(CombF, l, j)
            } else {
                b.graph.id(ExpF, l, j)
            };
            units.push((first, last));
        }
    }
    if !forward_only {
        for l in (1..=l_max).rev() {
            for j in 1..=r {
                let first = if l == l_max {
                    b.graph.id(ExpB, l, j)
                } else {
                    b.graph.id(DispB, l, j)
                };
                units.push((first, b.graph.id(AttnB, l, j)));
            }
        }
    }
    for w in units.windows(2) {
        b.edge(w[0].1, w[1].0);
    }
    b.finish()
}

/// ZP graph for a validated spec using its run options.
pub fn zp_graph_for(
    spec: &SimSpec,
    durations: &TaskDurations,
    assignment: &ExpertAssignment,
) -> Result<TaskGraph, GraphError> {
    build_zp_graph(
        &GraphShape::from_spec(spec),
        durations,
        assignment,
        spec.run.mode,
        spec.run.forward_only,
    )
}
