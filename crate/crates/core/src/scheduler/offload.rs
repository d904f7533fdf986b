//! Asymmetric expert offloading (bubble gather and squeeze) and `L_busy`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SchedError;
use crate::config::{ExpertAssignment, SqueezeMode};
use crate::costmodel::MemoryBounds;
use crate::time::{frac_int, Frac, Nanos};

/// `(n_1, n_2)`: experts each attention GPU acquires per chunk, and experts
/// each expert GPU gives up per chunk.
pub fn chunk_sizes(m: u32, n: u32) -> Result<(u32, u32), SchedError> {
    if m == 0 || n == 0 || (!m.is_multiple_of(n) && !n.is_multiple_of(m)) {
        return Err(SchedError::Divisibility { m, n });
    }
    let n1 = (n / m).max(1);
    let n2 = n1 * m / n;
    Ok((n1, n2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadPlanInputs {
    /// `n`: experts per layer.
    pub experts_per_layer: u32,
    pub layers: u32,
    pub attention_gpus: u32,
    pub expert_gpus: u32,
    /// `T^Attn_A`.
    pub attn_fwd: Nanos,
    /// `T^Attn_E`.
    pub single_expert_fwd: Nanos,
    /// `T^Exp_E`.
    pub expert_layer_fwd: Nanos,
    pub bounds: MemoryBounds,
    pub squeeze_mode: SqueezeMode,
}

/// One layer of the gather/squeeze loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStep {
    pub layer: u32,
    /// Accumulated bubble after gathering this layer.
    pub gathered: Frac,
    pub chunks: u64,
    /// Residual bubble after squeezing.
    pub residual: Frac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadPlan {
    pub assignment: ExpertAssignment,
    pub n1: u32,
    pub n2: u32,
    pub t_gather: Frac,
    pub t_squeeze: Frac,
    pub alpha: Frac,
    pub beta: Frac,
    pub steps: Vec<LayerStep>,
    /// Layers whose emitted count was cut to the per-layer expert capacity.
    pub clamped: Vec<u32>,
}

impl OffloadPlan {
    pub fn total_chunks(&self) -> u64 {
        self.steps.iter().map(|s| s.chunks).sum()
    }
}

/// Floor of a non-negative fraction.
fn floor_frac(x: &Frac) -> u64 {
    u64::try_from(x.floor().to_integer()).unwrap_or(0)
}

/// Plans per-layer offload counts from the attention-side bubbles.
///
/// Each layer gathers `T_gather = T^Exp_E - T^Attn_A` of bubble per
/// microbatch; once the pile reaches `T_squeeze`, whole chunks are offloaded
/// to soak it up. Memory bounds rescale the gather rate: `alpha < 1` keeps
/// the total under `n_max`, `beta > 1` forces at least `n_min`.
pub fn asym_ea_offload(inputs: &OffloadPlanInputs) -> Result<OffloadPlan, SchedError> {
    let (n1, n2) = chunk_sizes(inputs.attention_gpus, inputs.expert_gpus)?;
    let n = inputs.experts_per_layer;
    let big_n = inputs.expert_gpus;
    if inputs.layers == 0 {
        return Err(SchedError::Inputs("no layers"));
    }
    if n == 0 || !n.is_multiple_of(big_n) {
        return Err(SchedError::Inputs("expert GPUs must evenly divide the experts"));
    }
    let layers = inputs.layers;
    let t_e = frac_int(inputs.expert_layer_fwd);
    let t_ae = frac_int(inputs.single_expert_fwd);
    let t_gather = t_e - frac_int(inputs.attn_fwd);
    let per_expert = Frac::new(i128::from(big_n), i128::from(n));
    let (w_exp, w_attn) = match inputs.squeeze_mode {
        SqueezeMode::Verbatim => (n1, n2),
        SqueezeMode::Rederived => (n2, n1),
    };
    let t_squeeze = (t_e * per_expert) * frac_int(u64::from(w_exp)) + (t_ae * per_expert) * frac_int(u64::from(w_attn));

    let n2_64 = u64::from(n2);
    let min_chunks = inputs.bounds.n_min.div_ceil(n2_64);
    let max_chunks = inputs.bounds.n_max.map(|m| m / n2_64);
    if let Some(max) = max_chunks {
        if min_chunks > max {
            return Err(SchedError::NoFeasibleChunks {
                min_chunks,
                max_chunks: max,
            });
        }
    }

    let one = Frac::from_integer(1);
    let zero_plan = |alpha: Frac, beta: Frac| OffloadPlan {
        assignment: ExpertAssignment::zeros(layers),
        n1,
        n2,
        t_gather,
        t_squeeze,
        alpha,
        beta,
        steps: (1..=layers)
            .map(|layer| LayerStep {
                layer,
                gathered: Frac::from_integer(0),
                chunks: 0,
                residual: Frac::from_integer(0),
            })
            .collect(),
        clamped: Vec::new(),
    };
    if t_gather <= Frac::from_integer(0) {
        if min_chunks > 0 {
            return Err(SchedError::CannotGather {
                n_min: inputs.bounds.n_min,
            });
        }
        return Ok(zero_plan(one, one));
    }
    if t_squeeze <= Frac::from_integer(0) {
        return Err(SchedError::Inputs("squeeze time must be positive"));
    }

    let l_gather = frac_int(u64::from(layers)) * t_gather;
    let alpha = match max_chunks {
        Some(max) => (frac_int(max) * t_squeeze / l_gather).min(one),
        None => one,
    };
    let beta = (frac_int(min_chunks) * t_squeeze / l_gather).max(one);

    let capacity_chunks = u64::from(n / big_n) / n2_64;
    let mut offload = Vec::with_capacity(layers as usize);
    let mut steps = Vec::with_capacity(layers as usize);
    let mut clamped = Vec::new();
    let mut t = Frac::from_integer(0);
    for layer in 1..=layers {
        t += alpha * beta * t_gather;
        let gathered = t;
        let mut chunks = 0;
        if t >= t_squeeze {
            chunks = floor_frac(&(t / t_squeeze));
            t -= frac_int(chunks) * t_squeeze;
        }
        let emitted = if chunks > capacity_chunks {
            clamped.push(layer);
            capacity_chunks
        } else {
            chunks
        };
        offload.push((emitted * n2_64) as u32);
        steps.push(LayerStep {
            layer,
            gathered,
            chunks: emitted,
            residual: t,
        });
    }
    Ok(OffloadPlan {
        assignment: ExpertAssignment::from_vec(offload),
        n1,
        n2,
        t_gather,
        t_squeeze,
        alpha,
        beta,
        steps,
        clamped,
    })
}

/// Layers the expert GPU can fall behind before attention stalls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LBusy {
    Layers(Frac),
    Unbounded,
}

/// `T^Exp_E / (T^Exp_E - T^Attn_A)`, unbounded when experts are not slower.
pub fn compute_l_busy(expert_layer_fwd: Nanos, attn_fwd: Nanos) -> LBusy {
    if expert_layer_fwd <= attn_fwd {
        return LBusy::Unbounded;
    }
    LBusy::Layers(Frac::new(
        i128::from(expert_layer_fwd),
        i128::from(expert_layer_fwd - attn_fwd),
    ))
}
