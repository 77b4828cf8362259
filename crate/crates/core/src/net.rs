//! Road network model: nodes, directed edges, evacuation origins and exits,
//! timed closures, a synthetic grid generator and reachability checks.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;

/// Per-lane saturation flow used when an edge does not declare a capacity.
pub const LANE_SATURATION_FLOW: f64 = 1800.0;

/// Minimum recommended spacing between adjacent bus stops (800 ft).
pub const MIN_STOP_SPACING: f64 = 243.84;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Index of an edge in file order. Routing tie-breaks compare these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: NodeId,
    pub to: NodeId,
    /// meters
    pub length: f64,
    pub lanes: u32,
    /// m/s
    pub speed_limit: f64,
    /// veh/h
    pub capacity: f64,
    pub priority: i32,
}

impl Edge {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.speed_limit
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BusStop {
    pub id: String,
    pub edge: EdgeId,
    /// Distance from the edge start, meters.
    pub position: f64,
}

/// Timed closure over the half-open interval `[start_time, end_time)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Closure {
    pub edge_id: String,
    pub start_time: f64,
    /// `None` means the edge stays closed for the rest of the run.
    #[serde(default)]
    pub end_time: Option<f64>,
}

impl Closure {
    pub fn is_active(&self, t: f64) -> bool {
        self.start_time <= t && self.end_time.is_none_or(|end| t < end)
    }
}

/// Where an evacuating vehicle enters the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    StartEdge(usize),
    BusStop(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::StartEdge(i) => write!(f, "start_edge[{i}]"),
            Origin::BusStop(i) => write!(f, "bus_stop[{i}]"),
        }
    }
}

// On-disk representation.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    id: String,
    from: String,
    to: String,
    length: f64,
    lanes: u32,
    speed_limit: f64,
    #[serde(default)]
    capacity: Option<f64>,
    #[serde(default)]
    priority: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusStopDoc {
    edge_id: String,
    position: f64,
    id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    nodes: Vec<Node>,
    edges: Vec<EdgeDoc>,
    #[serde(default)]
    start_edges: Vec<String>,
    #[serde(default)]
    bus_stops: Vec<BusStopDoc>,
    #[serde(default)]
    exit_points: Vec<String>,
    #[serde(default)]
    closures: Vec<Closure>,
}

/// Validated, immutable road network.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    start_edges: Vec<EdgeId>,
    bus_stops: Vec<BusStop>,
    exit_points: Vec<EdgeId>,
    closures: Vec<Closure>,
    closure_edges: Vec<EdgeId>,
    out_edges: Vec<Vec<EdgeId>>,
    node_index: HashMap<String, NodeId>,
    edge_index: HashMap<String, EdgeId>,
}

/// Parses and validates a network document.
pub fn load_network(document: &str) -> Result<RoadNetwork, NetworkError> {
    let doc: NetworkDoc = serde_json::from_str(document).map_err(|e| NetworkError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    RoadNetwork::from_doc(doc)
}

fn check_positive(kind: &'static str, id: &str, field: &'static str, v: f64) -> Result<(), NetworkError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(NetworkError::Invariant {
            kind,
            id: id.to_string(),
            field,
            reason: format!("must be a finite positive number, got {v}"),
        })
    }
}

impl RoadNetwork {
    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NetworkError::Parse {
            line: 0,
            column: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        load_network(&text)
    }

    fn from_doc(doc: NetworkDoc) -> Result<Self, NetworkError> {
        let mut node_index = HashMap::with_capacity(doc.nodes.len());
        for (i, n) in doc.nodes.iter().enumerate() {
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(NetworkError::Invariant {
                    kind: "node",
                    id: n.id.clone(),
                    field: "x/y",
                    reason: "coordinates must be finite".into(),
                });
            }
            if node_index.insert(n.id.clone(), NodeId(i)).is_some() {
                return Err(NetworkError::DuplicateId { kind: "node", id: n.id.clone() });
            }
        }

        let mut edges = Vec::with_capacity(doc.edges.len());
        let mut edge_index = HashMap::with_capacity(doc.edges.len());
        for (i, e) in doc.edges.iter().enumerate() {
            let lookup = |name: &str| {
                node_index.get(name).copied().ok_or_else(|| NetworkError::DanglingReference {
                    context: format!("edge `{}`", e.id),
                    kind: "node",
                    id: name.to_string(),
                })
            };
            let from = lookup(&e.from)?;
            let to = lookup(&e.to)?;
            check_positive("edge", &e.id, "length", e.length)?;
            check_positive("edge", &e.id, "speed_limit", e.speed_limit)?;
            if e.lanes < 1 {
                return Err(NetworkError::Invariant {
                    kind: "edge",
                    id: e.id.clone(),
                    field: "lanes",
                    reason: "must be at least 1".into(),
                });
            }
            let capacity = e.capacity.unwrap_or(e.lanes as f64 * LANE_SATURATION_FLOW);
            check_positive("edge", &e.id, "capacity", capacity)?;
            if edge_index.insert(e.id.clone(), EdgeId(i)).is_some() {
                return Err(NetworkError::DuplicateId { kind: "edge", id: e.id.clone() });
            }
            edges.push(Edge {
                id: e.id.clone(),
                from,
                to,
                length: e.length,
                lanes: e.lanes,
                speed_limit: e.speed_limit,
                capacity,
                priority: e.priority,
            });
        }

        let edge_ref = |context: &str, name: &str| {
            edge_index.get(name).copied().ok_or_else(|| NetworkError::DanglingReference {
                context: context.to_string(),
                kind: "edge",
                id: name.to_string(),
            })
        };

        let start_edges = doc
            .start_edges
            .iter()
            .map(|s| edge_ref("start_edges", s))
            .collect::<Result<Vec<_>, _>>()?;
        let exit_points = doc
            .exit_points
            .iter()
            .map(|s| edge_ref("exit_points", s))
            .collect::<Result<Vec<_>, _>>()?;

        let mut stop_ids = HashSet::new();
        let mut bus_stops = Vec::with_capacity(doc.bus_stops.len());
        for s in &doc.bus_stops {
            let edge = edge_ref(&format!("bus stop `{}`", s.id), &s.edge_id)?;
            let len = edges[edge.0].length;
            if !(s.position.is_finite() && (0.0..=len).contains(&s.position)) {
                return Err(NetworkError::Invariant {
                    kind: "bus stop",
                    id: s.id.clone(),
                    field: "position",
                    reason: format!("{} outside [0, {len}]", s.position),
                });
            }
            if !stop_ids.insert(s.id.clone()) {
                return Err(NetworkError::DuplicateId { kind: "bus stop", id: s.id.clone() });
            }
            bus_stops.push(BusStop { id: s.id.clone(), edge, position: s.position });
        }

        let mut out_edges = vec![Vec::new(); doc.nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            out_edges[e.from.0].push(EdgeId(i));
        }

        let mut net = RoadNetwork {
            nodes: doc.nodes,
            edges,
            start_edges,
            bus_stops,
            exit_points,
            closures: Vec::new(),
            closure_edges: Vec::new(),
            out_edges,
            node_index,
            edge_index,
        };
        net.set_closures(doc.closures)?;
        Ok(net)
    }

    fn set_closures(&mut self, closures: Vec<Closure>) -> Result<(), NetworkError> {
        let mut resolved = Vec::with_capacity(closures.len());
        for c in &closures {
            let edge = self.edge_by_name(&c.edge_id).ok_or_else(|| NetworkError::DanglingReference {
                context: "closure".into(),
                kind: "edge",
                id: c.edge_id.clone(),
            })?;
            let end_ok = c.end_time.is_none_or(|end| end >= c.start_time && !end.is_nan());
            if !(c.start_time.is_finite() && c.start_time >= 0.0 && end_ok) {
                return Err(NetworkError::Invariant {
                    kind: "closure",
                    id: c.edge_id.clone(),
                    field: "start_time/end_time",
                    reason: format!("need 0 <= start <= end, got [{}, {:?})", c.start_time, c.end_time),
                });
            }
            resolved.push(edge);
        }
        self.closures = closures;
        self.closure_edges = resolved;
        Ok(())
    }

    /// Returns a copy of this network with `extra` closures appended.
    pub fn with_closures(&self, extra: impl IntoIterator<Item = Closure>) -> Result<Self, NetworkError> {
        let mut net = self.clone();
        let mut all = self.closures.clone();
        all.extend(extra);
        net.set_closures(all)?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDoc {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    id: e.id.clone(),
                    from: self.nodes[e.from.0].id.clone(),
                    to: self.nodes[e.to.0].id.clone(),
                    length: e.length,
                    lanes: e.lanes,
                    speed_limit: e.speed_limit,
                    capacity: Some(e.capacity),
                    priority: e.priority,
                })
                .collect(),
            start_edges: self.start_edges.iter().map(|e| self.edges[e.0].id.clone()).collect(),
            bus_stops: self
                .bus_stops
                .iter()
                .map(|s| BusStopDoc {
                    edge_id: self.edges[s.edge.0].id.clone(),
                    position: s.position,
                    id: s.id.clone(),
                })
                .collect(),
            exit_points: self.exit_points.iter().map(|e| self.edges[e.0].id.clone()).collect(),
            closures: self.closures.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("network document serializes")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn edge_by_name(&self, name: &str) -> Option<EdgeId> {
        self.edge_index.get(name).copied()
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.node_index.get(name).copied()
    }

    /// Outgoing edges of `node`, in ascending edge-id order.
    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out_edges[node.0]
    }

    pub fn start_edges(&self) -> &[EdgeId] {
        &self.start_edges
    }

    pub fn bus_stops(&self) -> &[BusStop] {
        &self.bus_stops
    }

    pub fn exit_points(&self) -> &[EdgeId] {
        &self.exit_points
    }

    pub fn closures(&self) -> &[Closure] {
        &self.closures
    }

    pub fn origin_edge(&self, origin: Origin) -> EdgeId {
        match origin {
            Origin::StartEdge(i) => self.start_edges[i],
            Origin::BusStop(i) => self.bus_stops[i].edge,
        }
    }

    pub fn free_flow_times(&self) -> Vec<f64> {
        self.edges.iter().map(Edge::free_flow_time).collect()
    }

    /// Sum of length × lanes over all edges, meters.
    pub fn total_lane_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length * e.lanes as f64).sum()
    }

    pub fn stop_position_xy(&self, stop: &BusStop) -> (f64, f64) {
        let e = &self.edges[stop.edge.0];
        let a = &self.nodes[e.from.0];
        let b = &self.nodes[e.to.0];
        let f = stop.position / e.length;
        (a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
    }

    pub fn is_active(&self, edge: EdgeId, t: f64) -> bool {
        !self
            .closure_edges
            .iter()
            .zip(&self.closures)
            .any(|(e, c)| *e == edge && c.is_active(t))
    }

    /// Traversable edges at time `t`.
    pub fn apply_closures(&self, t: f64) -> ActiveEdges {
        let mut mask = vec![true; self.edges.len()];
        for (e, c) in self.closure_edges.iter().zip(&self.closures) {
            if c.is_active(t) {
                mask[e.0] = false;
            }
        }
        ActiveEdges(mask)
    }

    /// Edges with no closure at any time.
    pub fn never_closed(&self) -> ActiveEdges {
        let mut mask = vec![true; self.edges.len()];
        for e in &self.closure_edges {
            mask[e.0] = false;
        }
        ActiveEdges(mask)
    }

    pub fn all_active(&self) -> ActiveEdges {
        ActiveEdges(vec![true; self.edges.len()])
    }

    /// Fails unless the network has at least one exit and one origin.
    pub fn ensure_runnable(&self) -> Result<(), NetworkError> {
        if self.exit_points.is_empty() {
            return Err(NetworkError::NotRunnable("no exit_points".into()));
        }
        if self.start_edges.is_empty() && self.bus_stops.is_empty() {
            return Err(NetworkError::NotRunnable("no start_edges or bus_stops".into()));
        }
        Ok(())
    }

    pub fn origins(&self) -> impl Iterator<Item = Origin> + '_ {
        (0..self.start_edges.len())
            .map(Origin::StartEdge)
            .chain((0..self.bus_stops.len()).map(Origin::BusStop))
    }
}

/// Mask of traversable edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveEdges(Vec<bool>);

impl ActiveEdges {
    pub fn is_active(&self, edge: EdgeId) -> bool {
        self.0[edge.0]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|a| **a).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.0.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| EdgeId(i))
    }

    pub fn deactivate(&mut self, edge: EdgeId) {
        self.0[edge.0] = false;
    }
}

/// Parameters of the synthetic grid generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub edge_length: f64,
    pub speed_limit: f64,
    pub lanes: u32,
    pub n_start_edges: usize,
    pub n_bus_stops: usize,
    pub n_exits: usize,
    pub seed: u64,
}

/// Builds a bidirectional `rows × cols` grid with seeded origins and exits.
///
/// Exits are drawn from edges running along the grid boundary. Start edges
/// and bus stops are drawn from the remaining edges; stops sit at edge
/// midpoints and respect [`MIN_STOP_SPACING`].
pub fn generate_grid(spec: &GridSpec) -> Result<RoadNetwork, NetworkError> {
    let GridSpec { rows, cols, .. } = *spec;
    if rows < 2 || cols < 2 {
        return Err(NetworkError::InfeasibleGrid(format!("need rows, cols >= 2, got {rows}x{cols}")));
    }
    if spec.lanes < 1 {
        return Err(NetworkError::InfeasibleGrid("lanes must be >= 1".into()));
    }
    check_positive("grid", "grid", "edge_length", spec.edge_length)?;
    check_positive("grid", "grid", "speed_limit", spec.speed_limit)?;

    let node_name = |r: usize, c: usize| format!("n{r}_{c}");
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Node {
                id: node_name(r, c),
                x: c as f64 * spec.edge_length,
                y: r as f64 * spec.edge_length,
            });
        }
    }

    let mut edges = Vec::new();
    let mut boundary = Vec::new();
    let mut push = |a: (usize, usize), b: (usize, usize), edges: &mut Vec<EdgeDoc>| {
        let on_boundary = (a.0 == b.0 && (a.0 == 0 || a.0 == rows - 1))
            || (a.1 == b.1 && (a.1 == 0 || a.1 == cols - 1));
        if on_boundary {
            boundary.push(edges.len());
        }
        edges.push(EdgeDoc {
            id: format!("e{}", edges.len()),
            from: node_name(a.0, a.1),
            to: node_name(b.0, b.1),
            length: spec.edge_length,
            lanes: spec.lanes,
            speed_limit: spec.speed_limit,
            capacity: Some(spec.lanes as f64 * LANE_SATURATION_FLOW),
            priority: 0,
        });
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                push((r, c), (r, c + 1), &mut edges);
                push((r, c + 1), (r, c), &mut edges);
            }
            if r + 1 < rows {
                push((r, c), (r + 1, c), &mut edges);
                push((r + 1, c), (r, c), &mut edges);
            }
        }
    }

    if spec.n_exits > boundary.len() {
        return Err(NetworkError::InfeasibleGrid(format!(
            "{} exits requested but only {} boundary edges",
            spec.n_exits,
            boundary.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    boundary.shuffle(&mut rng);
    let exits: Vec<usize> = boundary[..spec.n_exits].to_vec();
    let exit_set: HashSet<usize> = exits.iter().copied().collect();

    let mut candidates: Vec<usize> = (0..edges.len()).filter(|i| !exit_set.contains(i)).collect();
    if spec.n_start_edges > candidates.len() {
        return Err(NetworkError::InfeasibleGrid(format!(
            "{} start edges requested but only {} non-exit edges",
            spec.n_start_edges,
            candidates.len()
        )));
    }
    candidates.shuffle(&mut rng);
    let starts: Vec<usize> = candidates[..spec.n_start_edges].to_vec();

    candidates.shuffle(&mut rng);
    let mut stops: Vec<(usize, (f64, f64))> = Vec::new();
    for &e in &candidates {
        if stops.len() == spec.n_bus_stops {
            break;
        }
        let ed = &edges[e];
        let a = &nodes[nodes.iter().position(|n| n.id == ed.from).unwrap()];
        let b = &nodes[nodes.iter().position(|n| n.id == ed.to).unwrap()];
        let p = ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
        let far_enough = stops
            .iter()
            .all(|(_, q)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() >= MIN_STOP_SPACING);
        if far_enough {
            stops.push((e, p));
        }
    }
    if stops.len() < spec.n_bus_stops {
        return Err(NetworkError::InfeasibleGrid(format!(
            "could only place {} of {} bus stops with {MIN_STOP_SPACING} m spacing",
            stops.len(),
            spec.n_bus_stops
        )));
    }

    let doc = NetworkDoc {
        start_edges: starts.iter().map(|&i| edges[i].id.clone()).collect(),
        bus_stops: stops
            .iter()
            .enumerate()
            .map(|(k, &(e, _))| BusStopDoc {
                edge_id: edges[e].id.clone(),
                position: spec.edge_length / 2.0,
                id: format!("bs{k}"),
            })
            .collect(),
        exit_points: exits.iter().map(|&i| edges[i].id.clone()).collect(),
        closures: Vec::new(),
        nodes,
        edges,
    };
    RoadNetwork::from_doc(doc)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnreachablePair {
    pub origin: Origin,
    pub exit: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpacingWarning {
    pub stop_a: String,
    pub stop_b: String,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReachabilityReport {
    /// Origin/exit pairs with no path over the considered edges.
    pub unreachable: Vec<UnreachablePair>,
    /// Origins from which no exit at all can be reached.
    pub stranded_origins: Vec<Origin>,
    pub spacing_warnings: Vec<SpacingWarning>,
}

impl ReachabilityReport {
    pub fn is_routable(&self) -> bool {
        self.unreachable.is_empty()
    }
}

/// Checks origin→exit reachability. With `closures_active`, every edge that
/// has any closure is treated as removed.
pub fn validate_reachability(net: &RoadNetwork, closures_active: bool) -> ReachabilityReport {
    let active = if closures_active { net.never_closed() } else { net.all_active() };
    let mut report = ReachabilityReport::default();

    for origin in net.origins() {
        let start = net.origin_edge(origin);
        let reached = reachable_nodes(net, &active, net.edge(start).to);
        let mut any = false;
        for (x, &exit) in net.exit_points().iter().enumerate() {
            let ok = exit == start
                || (active.is_active(start) && active.is_active(exit) && reached[net.edge(exit).from.0]);
            if ok {
                any = true;
            } else {
                report.unreachable.push(UnreachablePair { origin, exit: x });
            }
        }
        if !any {
            report.stranded_origins.push(origin);
        }
    }

    let stops = net.bus_stops();
    for i in 0..stops.len() {
        for j in i + 1..stops.len() {
            let a = net.stop_position_xy(&stops[i]);
            let b = net.stop_position_xy(&stops[j]);
            let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            if d < MIN_STOP_SPACING {
                report.spacing_warnings.push(SpacingWarning {
                    stop_a: stops[i].id.clone(),
                    stop_b: stops[j].id.clone(),
                    distance: d,
                });
            }
        }
    }
    report
}

fn reachable_nodes(net: &RoadNetwork, active: &ActiveEdges, from: NodeId) -> Vec<bool> {
    let mut seen = vec![false; net.nodes().len()];
    let mut queue = VecDeque::from([from]);
    seen[from.0] = true;
    while let Some(n) = queue.pop_front() {
        for &e in net.out_edges(n) {
            if !active.is_active(e) {
                continue;
            }
            let to = net.edge(e).to;
            if !seen[to.0] {
                seen[to.0] = true;
                queue.push_back(to);
            }
        }
    }
    seen
}
