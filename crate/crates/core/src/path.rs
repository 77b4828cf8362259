//! Dijkstra shortest paths over edge weights.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::net::{ActiveEdges, EdgeId, NodeId, RoadNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    /// Edges traversed after leaving the origin edge, ending with the
    /// destination edge.
    pub edges: Vec<EdgeId>,
    pub cost: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    cost: f64,
    node: NodeId,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest-path tree rooted at a node.
#[derive(Clone, Debug)]
pub struct PathTree {
    dist: Vec<f64>,
    pred: Vec<Option<EdgeId>>,
}

impl PathTree {
    /// Runs Dijkstra from `source`. Inactive edges are skipped. Ties at equal
    /// cost keep the predecessor with the smaller edge id.
    pub fn build(net: &RoadNetwork, weights: &[f64], active: Option<&ActiveEdges>, source: NodeId) -> Self {
        let n = net.nodes().len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<EdgeId>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source.0] = 0.0;
        heap.push(HeapItem { cost: 0.0, node: source });
        while let Some(HeapItem { cost, node }) = heap.pop() {
            if done[node.0] {
                continue;
            }
            done[node.0] = true;
            for &e in net.out_edges(node) {
                if active.is_some_and(|a| !a.is_active(e)) {
                    continue;
                }
                let to = net.edge(e).to;
                if done[to.0] {
                    continue;
                }
                let next = cost + weights[e.0];
                let better = next < dist[to.0] || (next == dist[to.0] && pred[to.0].is_some_and(|p| e < p));
                if better {
                    let improved = next < dist[to.0];
                    dist[to.0] = next;
                    pred[to.0] = Some(e);
                    if improved {
                        heap.push(HeapItem { cost: next, node: to });
                    }
                }
            }
        }
        PathTree { dist, pred }
    }

    pub fn dist(&self, node: NodeId) -> f64 {
        self.dist[node.0]
    }

    /// Edge sequence from the root to `node`.
    pub fn edges_to(&self, net: &RoadNetwork, node: NodeId) -> Option<Vec<EdgeId>> {
        if !self.dist[node.0].is_finite() {
            return None;
        }
        let mut out = Vec::new();
        let mut cur = node;
        while let Some(e) = self.pred[cur.0] {
            out.push(e);
            cur = net.edge(e).from;
        }
        out.reverse();
        Some(out)
    }

    /// Path that ends by traversing `dest`.
    pub fn path_to_edge(
        &self,
        net: &RoadNetwork,
        weights: &[f64],
        active: Option<&ActiveEdges>,
        dest: EdgeId,
    ) -> Option<Path> {
        if active.is_some_and(|a| !a.is_active(dest)) {
            return None;
        }
        let mut edges = self.edges_to(net, net.edge(dest).from)?;
        let cost = self.dist(net.edge(dest).from) + weights[dest.0];
        edges.push(dest);
        Some(Path { edges, cost })
    }
}

/// Cheapest continuation from the end of `origin` through to the end of
/// `dest`. Returns `None` when `dest` cannot be reached.
pub fn shortest_path(
    net: &RoadNetwork,
    weights: &[f64],
    active: Option<&ActiveEdges>,
    origin: EdgeId,
    dest: EdgeId,
) -> Option<Path> {
    if origin == dest {
        return Some(Path { edges: Vec::new(), cost: 0.0 });
    }
    PathTree::build(net, weights, active, net.edge(origin).to).path_to_edge(net, weights, active, dest)
}

pub fn route_cost(route: &[EdgeId], weights: &[f64], active: Option<&ActiveEdges>) -> f64 {
    route
        .iter()
        .map(|e| {
            if active.is_some_and(|a| !a.is_active(*e)) {
                f64::INFINITY
            } else {
                weights[e.0]
            }
        })
        .sum()
}
