//! File formats, trace export, reports and parallel sweeps on top of
//! `zebrasim-core`.

pub mod configfile;
pub mod report;
pub mod sweep;
pub mod trace;

pub use configfile::{load_config, parse_config, save_config, LoadError};
pub use trace::{export_trace, parse_trace, read_trace, timeline_from_trace, write_trace, TraceEvent};
