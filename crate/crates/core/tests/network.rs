mod common;

use evacsim_core::net::validate_reachability;
use evacsim_core::path::shortest_path;
use evacsim_core::*;
use proptest::prelude::*;
use serde_json::json;

#[test]
fn grid_round_trips_through_json() {
    let mut net = common::grid(5, 6, 6, 4, 5, 9);
    net = net
        .with_closures([Closure { edge_id: net.edges()[3].id.clone(), start_time: 10.0, end_time: Some(50.0) }])
        .unwrap();
    let back = load_network(&net.to_json()).unwrap();
    assert_eq!(back, net);
    assert_eq!(back.to_json(), net.to_json());
}

#[test]
fn rejects_dangling_and_duplicate_ids() {
    let doc = |edges: serde_json::Value| {
        json!({
            "nodes": [{"id": "a", "x": 0.0, "y": 0.0}, {"id": "b", "x": 1.0, "y": 0.0}],
            "edges": edges,
        })
        .to_string()
    };
    let e = |id: &str, to: &str| json!({"id": id, "from": "a", "to": to, "length": 10.0, "lanes": 1, "speed_limit": 5.0});
    assert!(matches!(load_network(&doc(json!([e("e0", "zz")]))), Err(NetworkError::DanglingReference { .. })));
    assert!(matches!(load_network(&doc(json!([e("e0", "b"), e("e0", "b")]))), Err(NetworkError::DuplicateId { .. })));
    assert!(matches!(load_network("{ not json"), Err(NetworkError::Parse { .. })));
}

#[test]
fn generated_grids_are_routable() {
    for seed in 0..10 {
        let net = common::grid(6, 6, 8, 6, 6, seed);
        assert!(validate_reachability(&net, false).is_routable(), "seed {seed}");
        assert!(validate_reachability(&net, false).spacing_warnings.is_empty());
    }
}

/// Random directed graph: a ring for connectivity plus extra chords.
fn random_net(n: usize, chords: &[(usize, usize, f64)]) -> RoadNetwork {
    let nodes: Vec<_> = (0..n).map(|i| json!({"id": format!("n{i}"), "x": i as f64, "y": 0.0})).collect();
    let mut edges = Vec::new();
    let mut push = |a: usize, b: usize, len: f64| {
        let id = format!("e{}", edges.len());
        edges.push(json!({"id": id, "from": format!("n{a}"), "to": format!("n{b}"), "length": len, "lanes": 1, "speed_limit": 10.0}));
    };
    for i in 0..n {
        push(i, (i + 1) % n, 100.0);
    }
    for &(a, b, len) in chords {
        if a % n != b % n {
            push(a % n, b % n, len);
        }
    }
    load_network(&json!({"nodes": nodes, "edges": edges}).to_string()).unwrap()
}

/// Exhaustive search over simple node paths.
fn brute_force(net: &RoadNetwork, w: &[f64], origin: EdgeId, dest: EdgeId) -> f64 {
    fn dfs(net: &RoadNetwork, w: &[f64], at: NodeId, goal: NodeId, seen: &mut Vec<bool>, cost: f64, best: &mut f64) {
        if at == goal {
            *best = best.min(cost);
            return;
        }
        for &e in net.out_edges(at) {
            let to = net.edge(e).to;
            if !seen[to.0] {
                seen[to.0] = true;
                dfs(net, w, to, goal, seen, cost + w[e.0], best);
                seen[to.0] = false;
            }
        }
    }
    if origin == dest {
        return 0.0;
    }
    let start = net.edge(origin).to;
    let mut seen = vec![false; net.nodes().len()];
    seen[start.0] = true;
    let mut best = f64::INFINITY;
    dfs(net, w, start, net.edge(dest).from, &mut seen, 0.0, &mut best);
    best + w[dest.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn dijkstra_matches_brute_force(
        n in 3usize..=12,
        chords in prop::collection::vec((0usize..12, 0usize..12, 10.0f64..500.0), 0..20),
        weights in prop::collection::vec(0.5f64..100.0, 40),
        pick in (0usize..1000, 0usize..1000),
    ) {
        let net = random_net(n, &chords);
        let m = net.edges().len();
        let w: Vec<f64> = (0..m).map(|i| weights[i % weights.len()]).collect();
        let (o, d) = (EdgeId(pick.0 % m), EdgeId(pick.1 % m));
        let expected = brute_force(&net, &w, o, d);
        let got = shortest_path(&net, &w, None, o, d).expect("ring keeps every edge reachable");
        prop_assert!((got.cost - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {}", got.cost, expected);
        let walked: f64 = got.edges.iter().map(|e| w[e.0]).sum();
        prop_assert!((walked - got.cost).abs() <= 1e-9 * expected.max(1.0));
        if o != d {
            prop_assert_eq!(got.edges.last().copied(), Some(d));
            prop_assert_eq!(net.edge(got.edges[0]).from, net.edge(o).to);
            for pair in got.edges.windows(2) {
                prop_assert_eq!(net.edge(pair[0]).to, net.edge(pair[1]).from);
            }
        }
    }

    #[test]
    fn adding_closures_never_activates_edges(
        seed in 0u64..50,
        first in prop::collection::vec((0usize..1000, 0.0f64..500.0), 0..6),
        extra in prop::collection::vec((0usize..1000, 0.0f64..500.0), 1..6),
        t in 0.0f64..600.0,
    ) {
        let net = common::grid(4, 4, 3, 2, 3, seed);
        let m = net.edges().len();
        let to_closure = |&(e, s): &(usize, f64)| Closure { edge_id: net.edges()[e % m].id.clone(), start_time: s, end_time: None };
        let a = net.with_closures(first.iter().map(to_closure)).unwrap();
        let b = a.with_closures(extra.iter().map(to_closure)).unwrap();
        let (ea, eb) = (a.apply_closures(t), b.apply_closures(t));
        for e in net.edge_ids() {
            prop_assert!(!eb.is_active(e) || ea.is_active(e));
        }
        prop_assert!(eb.count() <= ea.count());
    }
}
