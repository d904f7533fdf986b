//! Deterministic list-scheduling engine, timeline checks and metrics.
//!
//! A task starts once its lane predecessor and every dependency have
//! finished. Because lane orders are fixed, start times are fully determined;
//! the event heap only fixes the processing order, keyed by `(start, id)`.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::config::{LayerWindow, Role};
use crate::scheduler::StreamOrder;
use crate::taskgraph::{topo_with, Device, LaneId, TaskGraph, TaskId, TaskKind};
use crate::time::Nanos;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("task {0} is missing from the stream orders")]
    Missing(TaskId),
    #[error("task {0} appears more than once in the stream orders")]
    Duplicate(TaskId),
    #[error("task {0} is ordered on a lane it does not belong to")]
    WrongLane(TaskId),
    #[error("task {0} is not in the graph")]
    Unknown(TaskId),
    #[error("stream orders deadlock; blocking cycle {cycle:?}")]
    Deadlock { cycle: Vec<TaskId> },
}

/// Start and end time of every task, indexed by task id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub start: Vec<Nanos>,
    pub end: Vec<Nanos>,
    pub makespan: Nanos,
    /// Per-lane execution sequences, indexed by [`LaneId::index`].
    pub lanes: Vec<Vec<TaskId>>,
}

impl Timeline {
    pub fn start_of(&self, id: TaskId) -> Nanos {
        self.start[id.index()]
    }

    pub fn end_of(&self, id: TaskId) -> Nanos {
        self.end[id.index()]
    }

    pub fn lane(&self, lane: LaneId) -> &[TaskId] {
        &self.lanes[lane.index()]
    }

    pub fn busy(&self, lane: LaneId) -> Nanos {
        self.lane(lane).iter().map(|&t| self.end_of(t) - self.start_of(t)).sum()
    }

    /// `[first start, last end]` of a lane, if it ran anything.
    pub fn active_window(&self, lane: LaneId) -> Option<(Nanos, Nanos)> {
        let tasks = self.lane(lane);
        let first = tasks.iter().map(|&t| self.start_of(t)).min()?;
        let last = tasks.iter().map(|&t| self.end_of(t)).max()?;
        Some((first, last))
    }

    /// Idle intervals between consecutive tasks inside the active window.
    pub fn bubbles(&self, lane: LaneId) -> Vec<(Nanos, Nanos)> {
        let mut spans: Vec<(Nanos, Nanos)> = self
            .lane(lane)
            .iter()
            .map(|&t| (self.start_of(t), self.end_of(t)))
            .collect();
        spans.sort_unstable();
        let mut out = Vec::new();
        let mut cursor: Option<Nanos> = None;
        for (s, e) in spans {
            if let Some(c) = cursor {
                if s > c {
                    out.push((c, s));
                }
            }
            cursor = Some(cursor.map_or(e, |c| c.max(e)));
        }
        out
    }

    /// Busy time of a lane inside `[from, to)`.
    pub fn busy_between(&self, lane: LaneId, from: Nanos, to: Nanos) -> Nanos {
        self.lane(lane)
            .iter()
            .map(|&t| {
                let s = self.start_of(t).max(from);
                let e = self.end_of(t).min(to);
                e.saturating_sub(s)
            })
            .sum()
    }
}

/// Runs `graph` with the given lane orders.
pub fn simulate(graph: &TaskGraph, orders: &StreamOrder) -> Result<Timeline, SimError> {
    let n = graph.len();
    let mut lane_pred: Vec<Option<TaskId>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut chain: Vec<(TaskId, TaskId)> = Vec::new();
    for lane in LaneId::ALL {
        let seq = orders.lane(lane);
        for (pos, &t) in seq.iter().enumerate() {
            if t.index() >= n {
                return Err(SimError::Unknown(t));
            }
            if seen[t.index()] {
                return Err(SimError::Duplicate(t));
            }
            seen[t.index()] = true;
            if graph.task(t).lane_id() != lane {
                return Err(SimError::WrongLane(t));
            }
            if pos > 0 {
                lane_pred[t.index()] = Some(seq[pos - 1]);
                chain.push((seq[pos - 1], t));
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(SimError::Missing(TaskId(i as u32)));
    }

    // Remaining blockers per task: dependencies plus the lane predecessor.
    let mut waiting: Vec<usize> = (0..n)
        .map(|i| {
            let t = TaskId(i as u32);
            graph.preds(t).len() + usize::from(lane_pred[i].is_some_and(|p| !graph.has_edge(p, t)))
        })
        .collect();
    let mut lane_succ: Vec<Option<TaskId>> = vec![None; n];
    for &(a, b) in &chain {
        lane_succ[a.index()] = Some(b);
    }
    let mut ready_at: Vec<Nanos> = vec![0; n];
    let mut start = vec![0; n];
    let mut end = vec![0; n];
    let mut heap: BinaryHeap<Reverse<(Nanos, TaskId)>> = (0..n)
        .filter(|&i| waiting[i] == 0)
        .map(|i| Reverse((0, TaskId(i as u32))))
        .collect();
    let mut done = 0usize;
    while let Some(Reverse((s, t))) = heap.pop() {
        let e = s + graph.task(t).duration;
        start[t.index()] = s;
        end[t.index()] = e;
        done += 1;
        let mut release = |v: TaskId, waiting: &mut Vec<usize>, heap: &mut BinaryHeap<_>| {
            let vi = v.index();
            ready_at[vi] = ready_at[vi].max(e);
            waiting[vi] -= 1;
            if waiting[vi] == 0 {
                heap.push(Reverse((ready_at[vi], v)));
            }
        };
        for &v in graph.succs(t) {
            release(v, &mut waiting, &mut heap);
        }
        if let Some(v) = lane_succ[t.index()] {
            if !graph.has_edge(t, v) {
                release(v, &mut waiting, &mut heap);
            }
        }
    }
    if done < n {
        let cycle = topo_with(graph, &chain).err().unwrap_or_default();
        return Err(SimError::Deadlock { cycle });
    }
    let makespan = end.iter().copied().max().unwrap_or(0);
    Ok(Timeline {
        start,
        end,
        makespan,
        lanes: LaneId::ALL.iter().map(|&l| orders.lane(l).to_vec()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum TimelineViolation {
    #[error("timeline covers {got} tasks, graph has {expected}")]
    Size { expected: usize, got: usize },
    #[error("task {task} runs {got} ns, expected {expected} ns")]
    Duration { task: TaskId, expected: Nanos, got: Nanos },
    #[error("edge {from} -> {to}: start {start} is before dependency end {end}")]
    Edge { from: TaskId, to: TaskId, start: Nanos, end: Nanos },
    #[error("tasks {first} and {second} overlap on one lane")]
    Overlap { first: TaskId, second: TaskId },
    #[error("task {0} sits on the wrong lane")]
    Lane(TaskId),
    #[error("makespan {got} differs from the last end {expected}")]
    Makespan { expected: Nanos, got: Nanos },
}

/// Checks dependency and lane-exclusivity constraints exhaustively.
pub fn validate_timeline(graph: &TaskGraph, timeline: &Timeline) -> Vec<TimelineViolation> {
    let n = graph.len();
    let mut out = Vec::new();
    if timeline.start.len() != n || timeline.end.len() != n {
        out.push(TimelineViolation::Size {
            expected: n,
            got: timeline.start.len().min(timeline.end.len()),
        });
        return out;
    }
    for t in graph.tasks() {
        let got = timeline.end_of(t.id).saturating_sub(timeline.start_of(t.id));
        if got != t.duration || timeline.end_of(t.id) < timeline.start_of(t.id) {
            out.push(TimelineViolation::Duration {
                task: t.id,
                expected: t.duration,
                got,
            });
        }
    }
    for &(from, to) in graph.edges() {
        let (s, e) = (timeline.start_of(to), timeline.end_of(from));
        if s < e {
            out.push(TimelineViolation::Edge { from, to, start: s, end: e });
        }
    }
    // Lane membership comes from the graph so a timeline cannot hide a task.
    for lane in LaneId::ALL {
        let mut tasks: Vec<TaskId> = graph.lane_tasks(lane).map(|t| t.id).collect();
        tasks.sort_by_key(|&t| (timeline.start_of(t), timeline.end_of(t), t));
        for w in tasks.windows(2) {
            if timeline.start_of(w[1]) < timeline.end_of(w[0]) {
                out.push(TimelineViolation::Overlap {
                    first: w[0],
                    second: w[1],
                });
            }
        }
    }
    if timeline.lanes.len() == LaneId::COUNT {
        for lane in LaneId::ALL {
            for &t in timeline.lane(lane) {
                if t.index() >= n || graph.task(t).lane_id() != lane {
                    out.push(TimelineViolation::Lane(t));
                }
            }
        }
    }
    let last = timeline.end.iter().copied().max().unwrap_or(0);
    if last != timeline.makespan {
        out.push(TimelineViolation::Makespan {
            expected: last,
            got: timeline.makespan,
        });
    }
    out
}

/// Compute-lane accounting for one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub device: Device,
    pub busy: Nanos,
    pub active_start: Nanos,
    pub active_end: Nanos,
    /// Busy over the active window; 0 for an idle device.
    pub utilization_active: f64,
    /// Busy over the whole makespan.
    pub utilization_makespan: f64,
    /// Idle time inside the active window.
    pub bubble_total: Nanos,
    /// Idle time over the whole makespan, including warm-up and drain.
    pub idle_total: Nanos,
    pub steady_state_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub iteration_time: Nanos,
    /// Tokens per second.
    pub throughput: f64,
    pub tokens_per_iteration: u64,
    pub steady_window: LayerWindow,
    /// `[start, end)` of the steady-state interval in ns.
    pub steady_interval: (Nanos, Nanos),
    pub devices: Vec<DeviceMetrics>,
}

impl Metrics {
    pub fn device(&self, d: Device) -> &DeviceMetrics {
        self.devices
            .iter()
            .find(|m| m.device == d)
            .expect("metrics carry both devices")
    }
}

/// Steady-state interval for `window`: from the first attention forward of
/// layer `first` to the first attention forward of layer `last + 1` (or the
/// end of the last forward attention when `last` is the final layer).
pub fn steady_interval(graph: &TaskGraph, timeline: &Timeline, window: LayerWindow) -> Option<(Nanos, Nanos)> {
    let first = graph.find(TaskKind::AttnF, window.first, 1)?;
    let from = timeline.start_of(first);
    let to = match graph.find(TaskKind::AttnF, window.last + 1, 1) {
        Some(next) => timeline.start_of(next),
        None => graph
            .tasks()
            .iter()
            .filter(|t| t.kind == TaskKind::AttnF && t.layer == window.last)
            .map(|t| timeline.end_of(t.id))
            .max()?,
    };
    Some((from, to.max(from)))
}

/// Metrics for a simulated timeline. `window` defaults to the middle half
/// of the layers.
pub fn compute_metrics(
    graph: &TaskGraph,
    timeline: &Timeline,
    tokens_per_iteration: u64,
    window: Option<LayerWindow>,
) -> Metrics {
    let window = window.unwrap_or_else(|| LayerWindow::middle(graph.layers()));
    let interval = steady_interval(graph, timeline, window).unwrap_or((0, 0));
    let makespan = timeline.makespan;
    let ratio = |num: Nanos, den: Nanos| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let devices = Role::ALL
        .iter()
        .map(|&device| {
            let lane = LaneId::new(device, crate::taskgraph::Lane::Compute);
            let busy = timeline.busy(lane);
            let (a, b) = timeline.active_window(lane).unwrap_or((0, 0));
            let steady_busy = timeline.busy_between(lane, interval.0, interval.1);
            DeviceMetrics {
                device,
                busy,
                active_start: a,
                active_end: b,
                utilization_active: ratio(busy, b - a),
                utilization_makespan: ratio(busy, makespan),
                bubble_total: (b - a) - busy,
                idle_total: makespan - busy,
                steady_state_utilization: ratio(steady_busy, interval.1 - interval.0),
            }
        })
        .collect();
    Metrics {
        iteration_time: makespan,
        throughput: if makespan == 0 {
            0.0
        } else {
            tokens_per_iteration as f64 * 1e9 / makespan as f64
        },
        tokens_per_iteration,
        steady_window: window,
        steady_interval: interval,
        devices,
    }
}
