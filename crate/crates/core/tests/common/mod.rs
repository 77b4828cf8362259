#![allow(dead_code)]

use evacsim_core::demand::DemandPlan;
use evacsim_core::engine::Trace;
use evacsim_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn grid(rows: usize, cols: usize, starts: usize, stops: usize, exits: usize, seed: u64) -> RoadNetwork {
    generate_grid(&GridSpec {
        rows,
        cols,
        edge_length: 250.0,
        speed_limit: 13.89,
        lanes: 1,
        n_start_edges: starts,
        n_bus_stops: stops,
        n_exits: exits,
        seed,
    })
    .unwrap()
}

/// Origin edge `o`, two parallel links `l1`/`l2` with the given free-flow
/// times, destination edge `d`.
pub fn two_link(t1: f64, t2: f64, capacity: f64) -> RoadNetwork {
    let v = 10.0;
    let doc = json!({
        "nodes": [
            {"id": "a", "x": 0.0, "y": 0.0},
            {"id": "b", "x": 100.0, "y": 0.0},
            {"id": "c", "x": 200.0, "y": 0.0},
            {"id": "d", "x": 300.0, "y": 0.0}
        ],
        "edges": [
            {"id": "o", "from": "a", "to": "b", "length": 100.0, "lanes": 1, "speed_limit": v, "capacity": capacity},
            {"id": "l1", "from": "b", "to": "c", "length": t1 * v, "lanes": 1, "speed_limit": v, "capacity": capacity},
            {"id": "l2", "from": "b", "to": "c", "length": t2 * v, "lanes": 1, "speed_limit": v, "capacity": capacity},
            {"id": "x", "from": "c", "to": "d", "length": 100.0, "lanes": 1, "speed_limit": v, "capacity": capacity}
        ],
        "start_edges": ["o"],
        "exit_points": ["x"]
    });
    load_network(&doc.to_string()).unwrap()
}

pub fn scenario(k: u32, window: f64, phase: Phase, mode: Mode) -> ScenarioSpec {
    let mut sc = ScenarioSpec::standard(k).unwrap();
    sc.window = window;
    sc.phase = phase;
    sc.mode = mode;
    sc.min_sav_per_category = 1;
    sc
}

pub fn plan(net: &RoadNetwork, persons: u64, sc: &ScenarioSpec, seed: u64) -> DemandPlan {
    let pop = PopulationTable::sumter_county().scaled(persons);
    let curve = SCurveParams { mu: sc.window / 4.0, sigma: sc.window / 12.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_demand_plan(&pop, sc, net, &curve, &mut rng).unwrap()
}

pub fn simulate(net: &RoadNetwork, plan: &DemandPlan, seed: u64, max_time: f64) -> Trace {
    new_world(net, plan, &ClassRegistry::default(), &EngineParams::default(), seed)
        .unwrap()
        .run_to_completion(max_time)
        .unwrap()
}
