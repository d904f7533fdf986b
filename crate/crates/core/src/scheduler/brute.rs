//! Exhaustive search oracles for stream orders and offload plans.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{chunk_sizes, comm_order, OffloadPlanInputs, SchedError, StreamOrder};
use crate::config::{ExpertAssignment, Role};
use crate::taskgraph::{Lane, LaneId, TaskGraph, TaskId};
use crate::time::Nanos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteSchedule {
    pub makespan: Nanos,
    pub order: StreamOrder,
    /// Search nodes visited.
    pub explored: u64,
}

struct Search<'a> {
    graph: &'a TaskGraph,
    compute_lanes: [LaneId; 2],
    end: Vec<Option<Nanos>>,
    lane_free: [Nanos; LaneId::COUNT],
    remaining: [Nanos; LaneId::COUNT],
    queues: Vec<VecDeque<TaskId>>,
    /// Comm tasks each compute task produces, by id.
    produces: Vec<Vec<TaskId>>,
    appended: [Vec<TaskId>; 2],
    canonical: bool,
    best: Nanos,
    best_order: Option<[Vec<TaskId>; 2]>,
    explored: u64,
    bound: u64,
    scheduled: usize,
}

impl Search<'_> {
    fn deps_end(&self, t: TaskId) -> Option<Nanos> {
        let mut m = 0;
        for &p in self.graph.preds(t) {
            m = m.max(self.end[p.index()]?);
        }
        Some(m)
    }

    fn place(&mut self, t: TaskId, start: Nanos) {
        let task = self.graph.task(t);
        let lane = task.lane_id().index();
        let e = start + task.duration;
        self.end[t.index()] = Some(e);
        self.lane_free[lane] = e;
        self.remaining[lane] -= task.duration;
        self.scheduled += 1;
    }

    fn unplace(&mut self, t: TaskId, prev_free: Nanos) {
        let task = self.graph.task(t);
        let lane = task.lane_id().index();
        self.end[t.index()] = None;
        self.lane_free[lane] = prev_free;
        self.remaining[lane] += task.duration;
        self.scheduled -= 1;
    }

    /// Runs queued comm tasks whose dependencies are done; returns an undo log.
    fn flush(&mut self) -> Vec<(TaskId, Nanos)> {
        let mut log = Vec::new();
        loop {
            let mut progressed = false;
            for q in 0..self.queues.len() {
                while let Some(&head) = self.queues[q].front() {
                    let Some(dep) = self.deps_end(head) else { break };
                    let lane = self.graph.task(head).lane_id().index();
                    let prev = self.lane_free[lane];
                    self.queues[q].pop_front();
                    self.place(head, prev.max(dep));
                    log.push((head, prev));
                    progressed = true;
                }
            }
            if !progressed {
                return log;
            }
        }
    }

    fn undo_flush(&mut self, log: Vec<(TaskId, Nanos)>) {
        for (t, prev) in log.into_iter().rev() {
            self.unplace(t, prev);
            let q = comm_queue(self.graph.task(t).lane_id());
            self.queues[q].push_front(t);
        }
    }

    fn lower_bound(&self) -> Nanos {
        (0..LaneId::COUNT)
            .map(|l| self.lane_free[l] + self.remaining[l])
            .max()
            .unwrap_or(0)
    }

    fn dfs(&mut self, last: Option<(Nanos, usize)>) -> Result<(), SchedError> {
        self.explored += 1;
        if self.explored > self.bound {
            return Err(SchedError::BoundExceeded { bound: self.bound });
        }
        if self.scheduled == self.graph.len() {
            let makespan = self.end.iter().map(|e| e.unwrap_or(0)).max().unwrap_or(0);
            if makespan < self.best {
                self.best = makespan;
                self.best_order = Some(self.appended.clone());
            }
            return Ok(());
        }
        if self.lower_bound() >= self.best {
            return Ok(());
        }
        let mut candidates: Vec<(Nanos, usize, TaskId)> = Vec::new();
        for (li, &lane) in self.compute_lanes.iter().enumerate() {
            let free = self.lane_free[lane.index()];
            for t in self.graph.lane_tasks(lane) {
                if self.end[t.id.index()].is_some() {
                    continue;
                }
                if let Some(dep) = self.deps_end(t.id) {
                    let s = free.max(dep);
                    if !self.canonical || last.is_none_or(|l| (s, li) > l) {
                        candidates.push((s, li, t.id));
                    }
                }
            }
        }
        candidates.sort_unstable();
        for (s, li, t) in candidates {
            let lane = self.compute_lanes[li].index();
            let prev = self.lane_free[lane];
            self.place(t, s);
            self.appended[li].push(t);
            let mut pushed = Vec::new();
            for i in 0..self.produces[t.index()].len() {
                let c = self.produces[t.index()][i];
                let q = comm_queue(self.graph.task(c).lane_id());
                self.queues[q].push_back(c);
                pushed.push(q);
            }
            let log = self.flush();
            let res = self.dfs(Some((s, li)));
            // Undoing the flush restores the queues to their state right
            // after the pushes above.
            self.undo_flush(log);
            for q in pushed.into_iter().rev() {
                self.queues[q].pop_back();
            }
            self.appended[li].pop();
            self.unplace(t, prev);
            res?;
        }
        Ok(())
    }
}

fn comm_queue(lane: LaneId) -> usize {
    match (lane.device, lane.lane) {
        (Role::Attention, Lane::Dispatch) => 0,
        (Role::Attention, Lane::Combine) => 1,
        (Role::Expert, Lane::Dispatch) => 2,
        _ => 3,
    }
}

/// Minimum makespan over every pair of compute-lane orders, with comm lanes
/// queued in producer order. Fails once more than `bound` search nodes are
/// visited.
///
/// When every compute task takes positive time the search only builds the
/// (start, lane)-sorted append sequence of each schedule, which visits each
/// distinct schedule once; otherwise it enumerates all interleavings.
pub fn brute_force_schedule(graph: &TaskGraph, bound: u64) -> Result<BruteSchedule, SchedError> {
    let n = graph.len();
    let compute_lanes = [
        LaneId::new(Role::Attention, Lane::Compute),
        LaneId::new(Role::Expert, Lane::Compute),
    ];
    let mut remaining = [0; LaneId::COUNT];
    let mut produces = vec![Vec::new(); n];
    for t in graph.tasks() {
        remaining[t.lane_id().index()] += t.duration;
        if let Some(p) = t.producer {
            produces[p.index()].push(t.id);
        }
    }
    let canonical = graph
        .tasks()
        .iter()
        .filter(|t| t.lane_id().is_compute())
        .all(|t| t.duration > 0);
    let mut search = Search {
        graph,
        compute_lanes,
        end: vec![None; n],
        lane_free: [0; LaneId::COUNT],
        remaining,
        queues: vec![VecDeque::new(); 4],
        produces,
        appended: [Vec::new(), Vec::new()],
        canonical,
        best: Nanos::MAX,
        best_order: None,
        explored: 0,
        bound,
        scheduled: 0,
    };
    // Producer-less comm tasks (none in built graphs) would otherwise never queue.
    for t in graph.tasks().iter().filter(|t| !t.lane_id().is_compute() && t.producer.is_none()) {
        search.queues[comm_queue(t.lane_id())].push_back(t.id);
    }
    search.flush();
    search.dfs(None)?;
    let [attn, exp] = search.best_order.ok_or(SchedError::NoCandidate)?;
    let mut order = StreamOrder::default();
    *order.lane_mut(compute_lanes[0]) = attn;
    *order.lane_mut(compute_lanes[1]) = exp;
    comm_order(graph, &mut order);
    Ok(BruteSchedule {
        makespan: search.best,
        order,
        explored: search.explored,
    })
}

/// Evaluates every chunk-granular plan whose total lies within the memory
/// bounds and returns the first minimizer in lexicographic order.
///
/// `evaluate` returns `None` for plans it cannot run. Layers listed in
/// `frozen` stay at zero.
pub fn brute_force_offload<F>(
    inputs: &OffloadPlanInputs,
    frozen: &[u32],
    bound: u64,
    mut evaluate: F,
) -> Result<(ExpertAssignment, Nanos), SchedError>
where
    F: FnMut(&ExpertAssignment) -> Option<Nanos>,
{
    let (_, n2) = chunk_sizes(inputs.attention_gpus, inputs.expert_gpus)?;
    let per_gpu = inputs.experts_per_layer / inputs.expert_gpus;
    let max_chunks = u64::from(per_gpu / n2);
    let layers = inputs.layers as usize;
    let free_layers = (1..=inputs.layers).filter(|l| !frozen.contains(l)).count() as u32;
    let space = (max_chunks + 1).checked_pow(free_layers).unwrap_or(u64::MAX);
    if space > bound {
        return Err(SchedError::BoundExceeded { bound });
    }
    let mut counts = vec![0u64; layers];
    let mut best: Option<(ExpertAssignment, Nanos)> = None;
    loop {
        let plan = ExpertAssignment::from_vec(counts.iter().map(|&c| (c * u64::from(n2)) as u32).collect());
        if inputs.bounds.contains(plan.total()) {
            if let Some(m) = evaluate(&plan) {
                if best.as_ref().is_none_or(|(_, b)| m < *b) {
                    best = Some((plan, m));
                }
            }
        }
        // Odometer over the free layers, last layer fastest.
        let mut i = layers;
        loop {
            if i == 0 {
                return best.ok_or(SchedError::NoCandidate);
            }
            i -= 1;
            if frozen.contains(&(i as u32 + 1)) {
                continue;
            }
            if counts[i] < max_chunks {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
        }
    }
}
