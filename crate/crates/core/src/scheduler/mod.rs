//! Per-stream execution orders, offload planning and exhaustive oracles.

mod brute;
mod offload;

pub use brute::{brute_force_offload, brute_force_schedule, BruteSchedule};
pub use offload::{
    asym_ea_offload, chunk_sizes, compute_l_busy, LBusy, LayerStep, OffloadPlan, OffloadPlanInputs,
};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::Role;
use crate::taskgraph::{GraphMode, Lane, LaneId, TaskGraph, TaskId, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedError {
    #[error("asymmetric offload needs M | N or N | M (M = {m}, N = {n})")]
    Divisibility { m: u32, n: u32 },
    #[error("invalid offload inputs: {0}")]
    Inputs(&'static str),
    #[error("memory needs at least {n_min} experts offloaded but there is no bubble to absorb them")]
    CannotGather { n_min: u64 },
    #[error("memory bounds admit no chunk count: at least {min_chunks} chunks, at most {max_chunks}")]
    NoFeasibleChunks { min_chunks: u64, max_chunks: u64 },
    #[error("search space exceeds the bound of {bound}")]
    BoundExceeded { bound: u64 },
    #[error("no candidate could be evaluated")]
    NoCandidate,
}

/// Ordered task lists, one per lane, indexed by [`LaneId::index`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamOrder {
    lanes: Vec<Vec<TaskId>>,
}

impl Default for StreamOrder {
    fn default() -> Self {
        StreamOrder {
            lanes: vec![Vec::new(); LaneId::COUNT],
        }
    }
}

impl StreamOrder {
    pub fn lane(&self, lane: LaneId) -> &[TaskId] {
        &self.lanes[lane.index()]
    }

    pub fn lane_mut(&mut self, lane: LaneId) -> &mut Vec<TaskId> {
        &mut self.lanes[lane.index()]
    }

    pub fn attention(&self) -> &[TaskId] {
        self.lane(LaneId::new(Role::Attention, Lane::Compute))
    }

    pub fn expert(&self) -> &[TaskId] {
        self.lane(LaneId::new(Role::Expert, Lane::Compute))
    }
}

/// Compute-lane orders of the optimal ZP schedule.
///
/// zp-theorem: attention runs each layer's forwards microbatch by
/// microbatch, interleaves `AttnF(L,j) AttnB(L,j)` at the turnaround, then
/// runs backwards layer by layer; the expert GPU runs forwards of layers
/// `1..L-1` then backwards `L-1..1`.
///
/// zp-full: the turnaround moves to the expert GPU, which interleaves
/// `ExpF(L,j) ExpB(L,j)`; attention stays layer-major in both directions.
///
/// Offloaded expert tasks of a layer follow all of its attention forwards,
/// and their backwards precede that layer's attention backwards.
pub fn zp_compute_order(graph: &TaskGraph) -> StreamOrder {
    use TaskKind::*;
    let l_max = graph.layers();
    let r = graph.microbatches();
    let theorem = graph.mode() == GraphMode::ZpTheorem;
    let mut attn: Vec<(TaskKind, u32, u32)> = Vec::new();
    let mut exp: Vec<(TaskKind, u32, u32)> = Vec::new();
    let layer = |kind: TaskKind, l: u32, out: &mut Vec<_>| out.extend((1..=r).map(|j| (kind, l, j)));

    for l in 1..=l_max {
        if theorem && l == l_max {
            for j in 1..=r {
                attn.push((AttnF, l, j));
                attn.push((AttnB, l, j));
            }
        } else {
            layer(AttnF, l, &mut attn);
            layer(OffExpF, l, &mut attn);
        }
    }
    for l in (1..=l_max).rev() {
        if theorem && l == l_max {
            continue;
        }
        layer(OffExpB, l, &mut attn);
        layer(AttnB, l, &mut attn);
    }

    for l in 1..l_max {
        layer(ExpF, l, &mut exp);
    }
    if !theorem {
        for j in 1..=r {
            exp.push((ExpF, l_max, j));
            exp.push((ExpB, l_max, j));
        }
    }
    for l in (1..l_max).rev() {
        layer(ExpB, l, &mut exp);
    }

    let mut order = StreamOrder::default();
    let resolve = |keys: Vec<(TaskKind, u32, u32)>| -> Vec<TaskId> {
        keys.into_iter().filter_map(|(k, l, j)| graph.find(k, l, j)).collect()
    };
    *order.lane_mut(LaneId::new(Role::Attention, Lane::Compute)) = resolve(attn);
    *order.lane_mut(LaneId::new(Role::Expert, Lane::Compute)) = resolve(exp);
    order
}

/// Fills the comm lanes: each comm task queues in the order its producer
/// appears on its compute lane, ties by id.
pub fn comm_order(graph: &TaskGraph, order: &mut StreamOrder) {
    let mut position = vec![usize::MAX; graph.len()];
    for device in Role::ALL {
        for (i, &t) in order.lane(LaneId::new(device, Lane::Compute)).iter().enumerate() {
            position[t.index()] = i;
        }
    }
    for lane in LaneId::ALL.into_iter().filter(|l| !l.is_compute()) {
        let mut tasks: Vec<TaskId> = graph.lane_tasks(lane).map(|t| t.id).collect();
        tasks.sort_by_key(|&t| {
            let p = graph.task(t).producer.map_or(usize::MAX, |p| position[p.index()]);
            (p, t)
        });
        *order.lane_mut(lane) = tasks;
    }
}

/// Complete ZP stream order: [`zp_compute_order`] plus [`comm_order`].
pub fn zp_stream_order(graph: &TaskGraph) -> StreamOrder {
    let mut order = zp_compute_order(graph);
    comm_order(graph, &mut order);
    order
}

/// Lane orders taken from the smallest-id topological order of the graph.
pub fn topo_stream_order(graph: &TaskGraph) -> StreamOrder {
    let mut order = StreamOrder::default();
    let topo = graph
        .topo_order()
        .expect("graphs are acyclic by construction");
    for t in topo {
        order.lane_mut(graph.task(t).lane_id()).push(t);
    }
    order
}

/// Default stream order for a graph of any mode.
pub fn stream_order(graph: &TaskGraph) -> StreamOrder {
    match graph.mode() {
        GraphMode::ZpTheorem | GraphMode::ZpFull => zp_stream_order(graph),
        GraphMode::DistEp => topo_stream_order(graph),
    }
}
