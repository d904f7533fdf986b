//! Parallel ZP-ratio sweeps. Cells run independently and are merged by
//! sorting on their key, so the output does not depend on thread timing.

use rayon::prelude::*;
use zebrasim_core::planner::{sort_records, sweep_cell};
use zebrasim_core::{SimSpec, SweepRecord};

pub fn parallel_sweep(base: &SimSpec, expert_gpus: &[u32], seq_lens: &[u64]) -> Vec<SweepRecord> {
    let cells: Vec<(u32, u64)> = seq_lens
        .iter()
        .flat_map(|&s| expert_gpus.iter().map(move |&n| (n, s)))
        .collect();
    let mut out: Vec<SweepRecord> = cells
        .par_iter()
        .flat_map_iter(|&(n, s)| sweep_cell(base, n, s))
        .collect();
    sort_records(&mut out);
    out
}
