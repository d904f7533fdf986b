//! Per-task durations, memory bounds and closed-form throughputs.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::{ClassCost, GpuClass, Role, SimSpec};
use crate::time::{frac, mul_div_round, round_half_up, Frac, Nanos};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("{0} role has no usable GPU class")]
    MissingClass(Role),
    #[error("{0} role is priced by a duration table; this needs coefficients")]
    NeedsCoefficients(Role),
    #[error("memory bounds are infeasible: at least {n_min} experts must leave each expert GPU but attention GPUs can take only {n_max}")]
    MemoryInfeasible { n_min: u64, n_max: u64 },
}

/// Forward durations for one layer and one microbatch, plus the backward
/// scaling factor. Comm times are not scaled for backward: the same bytes
/// move in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskDurations {
    /// `T^Attn_A`: attention on an attention GPU.
    pub attn_fwd: Nanos,
    /// `T^Exp_E`: a whole layer's resident experts on an expert GPU.
    pub expert_layer_fwd: Nanos,
    /// `T^Attn_E`: one expert over `B` tokens on an attention GPU.
    pub single_expert_fwd: Nanos,
    pub dispatch: Nanos,
    pub combine: Nanos,
    /// `gamma`: backward / forward compute ratio.
    pub backward_factor: f64,
}

impl TaskDurations {
    pub fn new(attn: Nanos, expert: Nanos, single_expert: Nanos, dispatch: Nanos, combine: Nanos) -> Self {
        TaskDurations {
            attn_fwd: attn,
            expert_layer_fwd: expert,
            single_expert_fwd: single_expert,
            dispatch,
            combine,
            backward_factor: 2.0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.backward_factor = gamma;
        self
    }

    /// Backward time of a compute task whose forward time is `fwd`.
    pub fn backward(&self, fwd: Nanos) -> Nanos {
        round_half_up(fwd as f64 * self.backward_factor)
    }

    pub fn is_valid(&self) -> bool {
        self.backward_factor.is_finite() && self.backward_factor > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadShape {
    pub tokens_per_microbatch_per_attn_gpu: u64,
    /// `B`: token-expert assignments the busiest expert GPU handles per
    /// microbatch.
    pub tokens_per_expert_gpu_per_microbatch: u64,
    pub seq_len: u64,
}

pub fn workload_shape(spec: &SimSpec) -> WorkloadShape {
    let model = &spec.model;
    let per_attn = u64::from(model.sequences_per_microbatch) * model.seq_len;
    let assignments = u128::from(spec.global_tokens_per_microbatch()) * u128::from(model.top_k);
    let n_gpus = u128::from(spec.cluster.expert_gpus().max(1));
    let b = match &spec.profile.expert_load {
        Some(load) if !load.is_empty() => {
            let per_gpu = load.len() / n_gpus as usize;
            let total: f64 = load.iter().sum();
            let busiest = load
                .chunks(per_gpu.max(1))
                .map(|c| c.iter().sum::<f64>())
                .fold(0.0, f64::max);
            round_half_up(assignments as f64 * busiest / total)
        }
        _ => mul_div_round(assignments, 1, n_gpus),
    };
    WorkloadShape {
        tokens_per_microbatch_per_attn_gpu: per_attn,
        tokens_per_expert_gpu_per_microbatch: b,
        seq_len: model.seq_len,
    }
}

/// `sequences * (linear * s + quadratic * s^2)`, rounded half-up.
/// Fractional sequence counts are allowed for per-GPU shares.
pub fn attention_duration(seq_len: u64, sequences: f64, gpu: &GpuClass) -> Nanos {
    let s = seq_len as f64;
    round_half_up(sequences * (gpu.attn_coeff_linear * s + gpu.attn_coeff_quadratic * s * s))
}

/// Expert compute is linear in tokens; which experts are resident does not
/// matter under balanced routing, so `_experts_resident` is ignored.
pub fn expert_duration(tokens: u64, _experts_resident: u32, gpu: &GpuClass) -> Nanos {
    round_half_up(gpu.expert_coeff * tokens as f64)
}

/// One direction's aggregated all-to-all for `tokens` tokens.
pub fn alltoall_duration(tokens: u64, bytes_per_token: u64, bandwidth: u64) -> Nanos {
    if bandwidth == 0 {
        return if tokens == 0 { 0 } else { Nanos::MAX };
    }
    mul_div_round(
        u128::from(tokens) * u128::from(bytes_per_token),
        1_000_000_000,
        u128::from(bandwidth),
    )
}

pub fn derive_task_durations(spec: &SimSpec) -> Result<TaskDurations, CostError> {
    let shape = workload_shape(spec);
    let b = shape.tokens_per_expert_gpu_per_microbatch;
    let resident = spec.model.experts_per_layer / spec.cluster.expert_gpus().max(1);

    let (attn_fwd, single_expert_fwd) = match spec
        .class_cost(Role::Attention)
        .ok_or(CostError::MissingClass(Role::Attention))?
    {
        ClassCost::Table(t) => (
            t.attn_fwd.unwrap_or(0).max(0) as Nanos,
            t.single_expert_fwd.unwrap_or(0).max(0) as Nanos,
        ),
        ClassCost::Coefficients(c) => (
            attention_duration(
                spec.model.seq_len,
                f64::from(spec.model.sequences_per_microbatch),
                &c,
            ),
            expert_duration(b, 1, &c),
        ),
    };
    let expert_layer_fwd = match spec
        .class_cost(Role::Expert)
        .ok_or(CostError::MissingClass(Role::Expert))?
    {
        ClassCost::Table(t) => t.expert_layer_fwd.unwrap_or(0).max(0) as Nanos,
        ClassCost::Coefficients(c) => expert_duration(b, resident, &c),
    };
    let (dispatch, combine) = spec.comm_override().unwrap_or_else(|| {
        let sent = shape.tokens_per_microbatch_per_attn_gpu * u64::from(spec.model.top_k);
        let t = alltoall_duration(sent, spec.bytes_per_token(), spec.cluster.link_bandwidth);
        (t, t)
    });
    Ok(TaskDurations {
        attn_fwd,
        expert_layer_fwd,
        single_expert_fwd,
        dispatch,
        combine,
        backward_factor: spec.run.gamma,
    })
}

/// Bounds on the total experts (summed over layers) each expert GPU offloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBounds {
    pub n_min: u64,
    /// `None` means attention GPUs impose no limit.
    pub n_max: Option<u64>,
}

impl MemoryBounds {
    pub const UNBOUNDED: MemoryBounds = MemoryBounds {
        n_min: 0,
        n_max: None,
    };

    pub fn contains(&self, total: u64) -> bool {
        total >= self.n_min && self.n_max.is_none_or(|m| total <= m)
    }
}

pub fn memory_bounds(spec: &SimSpec) -> Result<MemoryBounds, CostError> {
    let Some(expert_mem) = spec.model.expert_mem.filter(|m| *m > 0) else {
        return Ok(MemoryBounds::UNBOUNDED);
    };
    let model = &spec.model;
    let m = u64::from(spec.cluster.attention_gpus());
    let n_gpus = u64::from(spec.cluster.expert_gpus().max(1));
    let shape = workload_shape(spec);
    let r = u64::from(model.microbatches);

    let available = |role: Role, resident_tokens: u64| -> u64 {
        let Some(mem) = spec.memory(role) else { return 0 };
        let used = mem
            .non_expert_memory
            .saturating_add(model.activation_mem_per_token.saturating_mul(resident_tokens));
        mem.memory_capacity.saturating_sub(used)
    };

    let hosted = u64::from(model.layers) * u64::from(model.experts_per_layer) / n_gpus;
    let expert_avail = available(Role::Expert, shape.tokens_per_expert_gpu_per_microbatch * r);
    let fits = expert_avail / expert_mem;
    let n_min = hosted.saturating_sub(fits);

    let attn_avail = available(Role::Attention, shape.tokens_per_microbatch_per_attn_gpu * r);
    let per_attn_gpu = attn_avail / expert_mem;
    let n_max = per_attn_gpu * m / n_gpus;

    if n_min > n_max {
        return Err(CostError::MemoryInfeasible { n_min, n_max });
    }
    Ok(MemoryBounds {
        n_min,
        n_max: Some(n_max),
    })
}

/// Per-sample costs of one GPU class running homogeneous EP on its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRate {
    pub gpus: u32,
    pub attn_per_sample: f64,
    pub expert_per_sample: f64,
}

/// Samples per nanosecond when every class runs its own homogeneous EP and
/// the throughputs add. `phase_factor` is `1 + gamma` for full iterations,
/// `1` for forward only. Comm is left out of this bound.
pub fn ep_ideal_throughput(classes: &[ClassRate], layers: u32, phase_factor: f64) -> f64 {
    classes
        .iter()
        .map(|c| {
            let per_sample = (c.attn_per_sample + c.expert_per_sample) * f64::from(layers) * phase_factor;
            if per_sample.is_finite() && per_sample > 0.0 {
                f64::from(c.gpus) / per_sample
            } else if per_sample == 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum()
}

/// Per-class sample rates for `spec`; both roles must use coefficients.
pub fn class_rates(spec: &SimSpec) -> Result<Vec<ClassRate>, CostError> {
    let s = spec.model.seq_len;
    let k = u64::from(spec.model.top_k);
    Role::ALL
        .iter()
        .map(|&role| {
            let class = spec.gpu_class(role).ok_or(if spec.class_name(role).is_some() {
                CostError::NeedsCoefficients(role)
            } else {
                CostError::MissingClass(role)
            })?;
            Ok(ClassRate {
                gpus: spec.cluster.role(role).count,
                attn_per_sample: class.attn_coeff_linear * s as f64
                    + class.attn_coeff_quadratic * (s * s) as f64,
                expert_per_sample: class.expert_coeff * (s * k) as f64,
            })
        })
        .collect()
}

/// `8nL / (6nL + 3)`: ZP over EP(Ideal) for the two-class synthetic case.
pub fn theoretical_speedup(microbatches: u64, layers: u64) -> Frac {
    let nl = i128::from(microbatches) * i128::from(layers);
    frac(8 * nl, 6 * nl + 3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::fixtures::minimal;
    use crate::config::{ClassDurations, CommTable};
    use alloc::string::String;

    #[test]
    fn attention_formula() {
        let lin = GpuClass::new("a", 1.0, 0.0, 0.0);
        assert_eq!(attention_duration(0, 1.0, &lin), 0);
        assert_eq!(attention_duration(4, 1.0, &lin), 4);
        let quad = GpuClass::new("b", 2.0, 0.5, 0.0);
        assert_eq!(attention_duration(10, 2.0, &quad), 140);
    }

    #[test]
    fn expert_formula_ignores_residency() {
        let g = GpuClass::new("e", 0.0, 0.0, 3.0);
        assert_eq!(expert_duration(0, 4, &g), 0);
        assert_eq!(expert_duration(7, 4, &g), 21);
        assert_eq!(expert_duration(600, 1, &g), expert_duration(600, 6, &g));
    }

    #[test]
    fn alltoall_formula() {
        assert_eq!(alltoall_duration(0, 4096, 100_000_000_000), 0);
        assert_eq!(alltoall_duration(1000, 4096, 100_000_000_000), 40960);
        let slow = alltoall_duration(777, 4096, 50_000_000_000);
        let fast = alltoall_duration(777, 4096, 100_000_000_000);
        assert!(slow.abs_diff(2 * fast) <= 1);
    }

    #[test]
    fn tokens_per_expert_gpu() {
        let mut spec = minimal();
        // 1000 global tokens per microbatch, k = 2, N = 2
        spec.model.seq_len = 1000;
        spec.model.top_k = 2;
        spec.model.experts_per_layer = 4;
        spec.cluster.expert.count = 2;
        assert_eq!(workload_shape(&spec).tokens_per_expert_gpu_per_microbatch, 1000);
        // Skewed load: first GPU holds 3/4 of it.
        spec.profile.expert_load = Some(alloc::vec![2.0, 1.0, 0.5, 0.5]);
        assert_eq!(workload_shape(&spec).tokens_per_expert_gpu_per_microbatch, 1500);
    }

    fn table_spec(attn: i64, exp: i64, single: i64) -> SimSpec {
        let mut spec = minimal();
        spec.profile.coefficients.clear();
        spec.profile.durations.insert(
            String::from("fast"),
            ClassDurations {
                attn_fwd: Some(attn),
                single_expert_fwd: Some(single),
                expert_layer_fwd: None,
            },
        );
        spec.profile.durations.insert(
            String::from("slow"),
            ClassDurations {
                expert_layer_fwd: Some(exp),
                ..ClassDurations::default()
            },
        );
        spec.profile.comm = Some(CommTable {
            dispatch: 0,
            combine: 0,
        });
        spec
    }

    #[test]
    fn table_overrides_coefficients() {
        let spec = table_spec(3, 4, 3);
        assert!(spec.validate().is_empty(), "{:?}", spec.validate());
        let d = derive_task_durations(&spec).unwrap();
        assert_eq!(d, TaskDurations::new(3, 4, 3, 0, 0));
        let spec = table_spec(11, 12, 13);
        let mut spec = spec;
        spec.profile.comm = Some(CommTable {
            dispatch: 14,
            combine: 15,
        });
        assert_eq!(
            derive_task_durations(&spec).unwrap(),
            TaskDurations::new(11, 12, 13, 14, 15)
        );
    }

    #[test]
    fn coefficient_path() {
        let mut spec = minimal();
        spec.model.seq_len = 1000;
        spec.model.top_k = 2;
        spec.model.experts_per_layer = 4;
        spec.cluster.expert.count = 2;
        let d = derive_task_durations(&spec).unwrap();
        // fast: attention 1 ns/token, expert 1 ns/token; slow expert 1.2
        assert_eq!(d.attn_fwd, 1000);
        assert_eq!(d.single_expert_fwd, 1000);
        assert_eq!(d.expert_layer_fwd, 1200);
        // 1000 tokens * k=2 * 4096 B at 100 GB/s
        assert_eq!(d.dispatch, 81920);
        assert_eq!(d.combine, 81920);
    }

    fn memory_spec() -> SimSpec {
        let mut spec = minimal();
        spec.model.layers = 4;
        spec.model.experts_per_layer = 24;
        spec.cluster.expert.count = 6;
        spec.cluster.attention.count = 6;
        spec.model.expert_mem = Some(1 << 30);
        spec.profile.gpus.get_mut("slow").unwrap().memory_capacity = 12 << 30;
        spec.profile.gpus.get_mut("fast").unwrap().memory_capacity = 48 << 30;
        spec
    }

    #[test]
    fn n_min_from_expert_capacity() {
        let b = memory_bounds(&memory_spec()).unwrap();
        assert_eq!(b.n_min, 4);
        assert_eq!(b.n_max, Some(48));

        let mut spec = memory_spec();
        spec.profile.gpus.get_mut("slow").unwrap().memory_capacity = 64 << 30;
        assert_eq!(memory_bounds(&spec).unwrap().n_min, 0);
    }

    #[test]
    fn attention_memory_converts_by_ratio() {
        let mut spec = memory_spec();
        spec.profile.gpus.get_mut("slow").unwrap().memory_capacity = 64 << 30;
        spec.cluster.attention.count = 3;
        spec.profile.gpus.get_mut("fast").unwrap().memory_capacity = (10 << 30) + 5;
        // 10 experts per attention GPU, M/N = 1/2
        assert_eq!(memory_bounds(&spec).unwrap().n_max, Some(5));
        spec.profile.gpus.get_mut("fast").unwrap().non_expert_memory = 4 << 30;
        assert_eq!(memory_bounds(&spec).unwrap().n_max, Some(3));
    }

    #[test]
    fn infeasible_memory() {
        let mut spec = memory_spec();
        spec.profile.gpus.get_mut("fast").unwrap().non_expert_memory = 48 << 30;
        assert_eq!(
            memory_bounds(&spec),
            Err(CostError::MemoryInfeasible { n_min: 4, n_max: 0 })
        );
    }

    #[test]
    fn ep_ideal_matches_closed_form() {
        // fast: attn t, exp t; slow: attn 3t, exp t; t = 1, L = 8
        let classes = [
            ClassRate {
                gpus: 1,
                attn_per_sample: 1.0,
                expert_per_sample: 1.0,
            },
            ClassRate {
                gpus: 1,
                attn_per_sample: 3.0,
                expert_per_sample: 1.0,
            },
        ];
        let p = ep_ideal_throughput(&classes, 8, 1.0);
        assert!((p - 3.0 / 32.0).abs() < 1e-15);
        assert!((ep_ideal_throughput(&classes, 16, 1.0) - p / 2.0).abs() < 1e-15);

        let dead = ClassRate {
            gpus: 1,
            attn_per_sample: f64::INFINITY,
            expert_per_sample: 1.0,
        };
        let single = ep_ideal_throughput(&classes[..1], 8, 1.0);
        assert_eq!(ep_ideal_throughput(&[classes[0], dead], 8, 1.0), single);
    }

    #[test]
    fn speedup_values() {
        assert_eq!(theoretical_speedup(16, 8), frac(1024, 771));
        assert_eq!(theoretical_speedup(1, 1), frac(8, 9));
        let far = crate::time::frac_to_f64(&theoretical_speedup(1 << 40, 8));
        assert!((far - 4.0 / 3.0).abs() < 1e-9);
    }
}
