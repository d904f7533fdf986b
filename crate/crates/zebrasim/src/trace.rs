//! Chrome trace export. One track per (device, lane): `pid` is the device,
//! `tid` the lane. Timestamps are microseconds; exact nanosecond bounds ride
//! along in `args` so a trace can be turned back into a timeline.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use zebrasim_core::taskgraph::{Lane, LaneId, TaskGraph, TaskId, TaskKind};
use zebrasim_core::{Nanos, Role, Timeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceArgs {
    pub kind: TaskKind,
    pub layer: u32,
    pub microbatch: u32,
    pub task_id: u32,
    /// Position on its lane.
    pub seq: u32,
    pub start_ns: Nanos,
    pub end_ns: Nanos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub name: String,
    pub cat: String,
    pub ph: String,
    pub ts: f64,
    pub dur: f64,
    pub pid: u32,
    pub tid: u32,
    pub args: TraceArgs,
}

fn pid(device: Role) -> u32 {
    match device {
        Role::Attention => 0,
        Role::Expert => 1,
    }
}

fn tid(lane: Lane) -> u32 {
    match lane {
        Lane::Compute => 0,
        Lane::Dispatch => 1,
        Lane::Combine => 2,
    }
}

fn lane_of(pid: u32, tid: u32) -> Option<LaneId> {
    let device = match pid {
        0 => Role::Attention,
        1 => Role::Expert,
        _ => return None,
    };
    let lane = match tid {
        0 => Lane::Compute,
        1 => Lane::Dispatch,
        2 => Lane::Combine,
        _ => return None,
    };
    Some(LaneId::new(device, lane))
}

/// Complete events for every task, ordered by (start, id).
pub fn export_trace(graph: &TaskGraph, timeline: &Timeline) -> Vec<TraceEvent> {
    let mut seq = vec![0u32; graph.len()];
    for lane in &timeline.lanes {
        for (i, t) in lane.iter().enumerate() {
            seq[t.index()] = i as u32;
        }
    }
    let mut tasks: Vec<_> = graph.tasks().iter().collect();
    tasks.sort_by_key(|t| (timeline.start_of(t.id), t.id));
    tasks
        .into_iter()
        .map(|t| {
            let (s, e) = (timeline.start_of(t.id), timeline.end_of(t.id));
            TraceEvent {
                name: t.label(),
                cat: if t.kind.is_comm() { "comm" } else { "compute" }.to_string(),
                ph: "X".to_string(),
                ts: s as f64 / 1000.0,
                dur: (e - s) as f64 / 1000.0,
                pid: pid(t.device),
                tid: tid(t.lane),
                args: TraceArgs {
                    kind: t.kind,
                    layer: t.layer,
                    microbatch: t.microbatch,
                    task_id: t.id.0,
                    seq: seq[t.id.index()],
                    start_ns: s,
                    end_ns: e,
                },
            }
        })
        .collect()
}

pub fn write_trace(events: &[TraceEvent], path: impl AsRef<Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(events).map_err(std::io::Error::other)?;
    fs::write(path, text + "\n")
}

pub fn parse_trace(text: &str) -> serde_json::Result<Vec<TraceEvent>> {
    serde_json::from_str(text)
}

pub fn read_trace(path: impl AsRef<Path>) -> std::io::Result<Vec<TraceEvent>> {
    let text = fs::read_to_string(path)?;
    parse_trace(&text).map_err(std::io::Error::other)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("event {0} names an unknown track")]
    Track(String),
    #[error("task id {0} is out of range or repeated")]
    TaskId(u32),
    #[error("trace covers {got} of {expected} tasks")]
    Coverage { expected: usize, got: usize },
}

/// Rebuilds a timeline from exported events.
pub fn timeline_from_trace(events: &[TraceEvent], task_count: usize) -> Result<Timeline, TraceError> {
    let mut start = vec![0; task_count];
    let mut end = vec![0; task_count];
    let mut seen = vec![false; task_count];
    let mut lanes: Vec<Vec<(u32, TaskId)>> = vec![Vec::new(); LaneId::COUNT];
    for ev in events.iter().filter(|e| e.ph == "X") {
        let lane = lane_of(ev.pid, ev.tid).ok_or_else(|| TraceError::Track(ev.name.clone()))?;
        let i = ev.args.task_id as usize;
        if i >= task_count || seen[i] {
            return Err(TraceError::TaskId(ev.args.task_id));
        }
        seen[i] = true;
        start[i] = ev.args.start_ns;
        end[i] = ev.args.end_ns;
        lanes[lane.index()].push((ev.args.seq, TaskId(ev.args.task_id)));
    }
    let got = seen.iter().filter(|s| **s).count();
    if got != task_count {
        return Err(TraceError::Coverage {
            expected: task_count,
            got,
        });
    }
    Ok(Timeline {
        makespan: end.iter().copied().max().unwrap_or(0),
        start,
        end,
        lanes: lanes
            .into_iter()
            .map(|mut l| {
                l.sort_unstable();
                l.into_iter().map(|(_, t)| t).collect()
            })
            .collect(),
    })
}
