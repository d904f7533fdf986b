use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zebrasim::{export_trace, load_config, parse_config, parse_trace, save_config, timeline_from_trace};
use zebrasim_core::scheduler::zp_stream_order;
use zebrasim_core::simulator::simulate;
use zebrasim_core::taskgraph::{build_zp_graph, GraphShape, TaskGraph};
use zebrasim_core::{ExpertAssignment, TaskDurations, Timeline, ZpMode};

fn random_graph(rng: &mut ChaCha8Rng) -> TaskGraph {
    let l = rng.gen_range(1..5);
    let r = rng.gen_range(1..4);
    let mode = if rng.gen_bool(0.5) { ZpMode::ZpTheorem } else { ZpMode::ZpFull };
    let mut plan: Vec<u32> = (0..l).map(|_| rng.gen_range(0..=3)).collect();
    if mode == ZpMode::ZpTheorem {
        *plan.last_mut().unwrap() = 0;
    }
    let d = TaskDurations::new(
        rng.gen_range(1..20_000),
        rng.gen_range(1..20_000),
        rng.gen_range(0..20_000),
        rng.gen_range(0..3_000),
        rng.gen_range(0..3_000),
    );
    build_zp_graph(&GraphShape::simple(l, r, 6), &d, &ExpertAssignment::from_vec(plan), mode, rng.gen_bool(0.3)).unwrap()
}

#[test]
fn trace_round_trips_timelines() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let g = random_graph(&mut rng);
        let t = simulate(&g, &zp_stream_order(&g)).unwrap();
        let text = serde_json::to_string(&export_trace(&g, &t)).unwrap();
        let back = timeline_from_trace(&parse_trace(&text).unwrap(), g.len()).unwrap();
        assert_eq!(back, t);
    }
}

#[test]
fn empty_trace_round_trips() {
    let empty = Timeline {
        start: vec![],
        end: vec![],
        makespan: 0,
        lanes: vec![Vec::new(); 6],
    };
    let back = timeline_from_trace(&parse_trace("[]").unwrap(), 0).unwrap();
    assert_eq!(back, empty);
}

#[test]
fn incomplete_trace_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_graph(&mut rng);
    let t = simulate(&g, &zp_stream_order(&g)).unwrap();
    let mut events = export_trace(&g, &t);
    events.pop();
    assert!(timeline_from_trace(&events, g.len()).is_err());
}

#[test]
fn configs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["offload_demo.json", "hetero_cluster.json"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
        let spec = load_config(&path).unwrap();
        let out = dir.path().join(name);
        save_config(&spec, &out).unwrap();
        assert_eq!(load_config(&out).unwrap(), spec);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(parse_config(&text).unwrap(), spec);
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/offload_demo.json");
    let text = std::fs::read_to_string(path).unwrap().replacen("\"layers\"", "\"layerz\": 1, \"layers\"", 1);
    assert!(parse_config(&text).is_err());
}
