//! Analytic baselines: heterogeneity-unaware EP and layer-balanced PP.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::Role;
use crate::time::{round_half_up, Nanos};

/// Forward time of one GPU class for its share of one (layer, microbatch)
/// under EP, where every GPU holds attention and an even slice of experts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpClassTimes {
    pub gpus: u32,
    pub attn_fwd: Nanos,
    pub expert_fwd: Nanos,
}

/// EP iteration time: each step is gated by the slowest GPU.
///
/// Per (layer, microbatch) the forward pass costs
/// `max attn + T_D + max expert + T_C`; backward scales the compute parts by
/// `gamma` and repeats the comm.
pub fn ep_iteration_time(
    classes: &[EpClassTimes],
    dispatch: Nanos,
    combine: Nanos,
    layers: u32,
    microbatches: u32,
    gamma: f64,
    forward_only: bool,
) -> Nanos {
    let live = || classes.iter().filter(|c| c.gpus > 0);
    let attn = live().map(|c| c.attn_fwd).max().unwrap_or(0);
    let exp = live().map(|c| c.expert_fwd).max().unwrap_or(0);
    let comm = dispatch.saturating_add(combine);
    let fwd = attn + exp + comm;
    let step = if forward_only {
        fwd
    } else {
        let bwd = round_half_up(attn as f64 * gamma) + round_half_up(exp as f64 * gamma) + comm;
        fwd + bwd
    };
    step.saturating_mul(u64::from(layers) * u64::from(microbatches))
}

/// One pipeline stage: a role's GPU with its per-layer cost and memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpStage {
    pub role: Role,
    /// Forward time of one layer for one microbatch.
    pub layer_time: Nanos,
    pub memory_capacity: u64,
    /// Bytes one layer occupies on this stage.
    pub layer_memory: u64,
}

impl PpStage {
    fn max_layers(&self) -> u64 {
        self.memory_capacity.checked_div(self.layer_memory).unwrap_or(u64::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpPlan {
    pub layers_per_stage: Vec<u32>,
    pub stage_times: Vec<Nanos>,
    pub max_stage_time: Nanos,
    pub iteration_time: Nanos,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PpError {
    #[error("pipeline needs at least 2 stages, got {0}")]
    TooFewStages(usize),
    #[error("{layers} layers cannot fill {stages} stages")]
    TooFewLayers { layers: u32, stages: usize },
    #[error("no stage split fits memory: some stage cannot hold its layers")]
    Infeasible,
}

/// Contiguous split minimizing the slowest stage under per-stage memory.
///
/// Every composition of `layers` into non-empty stages is tried. Among
/// equally fast splits the one putting more layers on earlier stages wins.
/// Iteration time follows a fill-drain pipeline:
/// `(R + S - 1) * max_stage * (1 + gamma)`.
pub fn pp_assign_layers(
    stages: &[PpStage],
    layers: u32,
    microbatches: u32,
    gamma: f64,
    forward_only: bool,
) -> Result<PpPlan, PpError> {
    let s = stages.len();
    if s < 2 {
        return Err(PpError::TooFewStages(s));
    }
    if (layers as usize) < s {
        return Err(PpError::TooFewLayers { layers, stages: s });
    }

    let mut best: Option<(Nanos, Vec<u32>)> = None;
    let mut current = vec![0u32; s];
    search(stages, 0, layers, &mut current, &mut best);
    let (max_stage, split) = best.ok_or(PpError::Infeasible)?;

    let phase = if forward_only { 1.0 } else { 1.0 + gamma };
    let slots = u64::from(microbatches) + s as u64 - 1;
    let stage_times = stages
        .iter()
        .zip(&split)
        .map(|(st, &c)| st.layer_time * u64::from(c))
        .collect();
    Ok(PpPlan {
        layers_per_stage: split,
        stage_times,
        max_stage_time: max_stage,
        iteration_time: round_half_up((slots * max_stage) as f64 * phase),
    })
}

fn search(
    stages: &[PpStage],
    idx: usize,
    remaining: u32,
    current: &mut Vec<u32>,
    best: &mut Option<(Nanos, Vec<u32>)>,
) {
    let left_after = (stages.len() - idx - 1) as u32;
    if left_after == 0 {
        if u64::from(remaining) > stages[idx].max_layers() {
            return;
        }
        current[idx] = remaining;
        let t = stages
            .iter()
            .zip(current.iter())
            .map(|(st, &c)| st.layer_time * u64::from(c))
            .max()
            .unwrap_or(0);
        // Descending enumeration visits earlier-heavy splits first, so only
        // a strictly better split replaces the incumbent.
        if best.as_ref().is_none_or(|(b, _)| t < *b) {
            *best = Some((t, current.clone()));
        }
        return;
    }
    let cap = stages[idx].max_layers().min(u64::from(remaining - left_after)) as u32;
    for c in (1..=cap).rev() {
        current[idx] = c;
        search(stages, idx + 1, remaining - c, current, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(role: Role, t: Nanos, cap: u64) -> PpStage {
        PpStage {
            role,
            layer_time: t,
            memory_capacity: cap,
            layer_memory: 1,
        }
    }

    #[test]
    fn speed_ratio_split() {
        let st = [stage(Role::Attention, 1, 100), stage(Role::Expert, 3, 100)];
        let plan = pp_assign_layers(&st, 8, 4, 2.0, false).unwrap();
        assert_eq!(plan.layers_per_stage, [6, 2]);
        assert_eq!(plan.max_stage_time, 6);
        assert_eq!(plan.iteration_time, (4 + 1) * 6 * 3);
    }

    #[test]
    fn equal_speed_even_split() {
        let st = [stage(Role::Attention, 5, 100), stage(Role::Expert, 5, 100)];
        assert_eq!(pp_assign_layers(&st, 8, 1, 2.0, false).unwrap().layers_per_stage, [4, 4]);
        // Odd L ties between 4/3 and 3/4; the earlier stage takes more.
        assert_eq!(pp_assign_layers(&st, 7, 1, 2.0, false).unwrap().layers_per_stage, [4, 3]);
    }

    #[test]
    fn memory_blocks_split() {
        let mut st = [stage(Role::Attention, 1, 3), stage(Role::Expert, 3, 100)];
        assert_eq!(pp_assign_layers(&st, 8, 1, 2.0, false).unwrap().layers_per_stage, [3, 5]);
        st[0].memory_capacity = 0;
        assert_eq!(pp_assign_layers(&st, 8, 1, 2.0, false), Err(PpError::Infeasible));
    }

    #[test]
    fn layer_too_big_is_infeasible() {
        let st = [
            PpStage { role: Role::Attention, layer_time: 1, memory_capacity: 10, layer_memory: 11 },
            PpStage { role: Role::Expert, layer_time: 1, memory_capacity: 10, layer_memory: 11 },
        ];
        assert_eq!(pp_assign_layers(&st, 2, 1, 2.0, false), Err(PpError::Infeasible));
        assert_eq!(pp_assign_layers(&st[..1], 2, 1, 2.0, false), Err(PpError::TooFewStages(1)));
    }

    #[test]
    fn ep_gated_by_slowest() {
        let fast = EpClassTimes { gpus: 2, attn_fwd: 10, expert_fwd: 10 };
        let slow = EpClassTimes { gpus: 2, attn_fwd: 30, expert_fwd: 10 };
        assert_eq!(ep_iteration_time(&[fast], 0, 0, 1, 1, 2.0, true), 20);
        assert_eq!(ep_iteration_time(&[fast, slow], 0, 0, 1, 1, 2.0, true), 40);
        assert_eq!(ep_iteration_time(&[fast, slow], 1, 2, 2, 3, 2.0, false), (43 + 83) * 6);
        let idle = EpClassTimes { gpus: 0, ..slow };
        assert_eq!(ep_iteration_time(&[fast, idle], 0, 0, 1, 1, 2.0, true), 20);
    }
}
