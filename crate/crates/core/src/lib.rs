//! Core model for zebra-parallel MoE training on heterogeneous GPU groups.
//!
//! A ZP group splits every transformer layer: attention runs on `M` newer
//! "attention" GPUs, experts run on `N` older "expert" GPUs, and microbatches
//! zigzag between the two so both sides compute at the same time. This crate
//! builds the task graphs for that execution model and its baselines, orders
//! them per stream, plans asymmetric expert offloading, and simulates the
//! result with a deterministic list-scheduling engine.
//!
//! The crate is `no_std` (with `alloc`); file formats, trace export and the
//! command line live in the `zebrasim` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod costmodel;
pub mod planner;
pub mod scheduler;
pub mod simulator;
pub mod taskgraph;
pub mod time;

pub use config::{
    ClusterSpec, ExpertAssignment, GpuClass, ModelSpec, Role, RunConfig, SimSpec, SqueezeMode, Violation,
    ZpMode,
};
pub use costmodel::{MemoryBounds, TaskDurations, WorkloadShape};
pub use planner::{Strategy, StrategyResult, SweepRecord};
pub use scheduler::{OffloadPlan, OffloadPlanInputs, StreamOrder};
pub use simulator::{Metrics, Timeline};
pub use taskgraph::{Device, GraphMode, Lane, LaneId, Task, TaskGraph, TaskId, TaskKind};
pub use time::Nanos;
