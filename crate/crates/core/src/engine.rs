//! Deterministic time-stepped microsimulation.
//!
//! Each step: teleport re-entry, insertion, overtaking, edge-entry grants,
//! synchronous Krauss speed updates from the previous state, movement with a
//! position backstop, edge transitions and arrivals, waiting/teleport checks,
//! then SAV rerouting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assign::{sample_routes, solve_ue, LinkCostParams, OdDemand, UeOptions};
use crate::demand::DemandPlan;
use crate::error::EngineError;
use crate::net::{ActiveEdges, EdgeId, Origin, RoadNetwork};
use crate::path::shortest_path;
use crate::router::{flow_update_diag, maybe_reroute, EdgeTravelStats, FlowUpdateDiag, RerouteDecision, RerouteParams};
use crate::vehicle::{
    krauss_safe_speed, krauss_step, overtake_decision, speed_factor_from_normal, ClassRegistry, VehicleClassSpec,
    VehicleState, WAITING_SPEED,
};

const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineParams {
    pub dt: f64,
    /// Contiguous waiting time after which a blocked vehicle is teleported.
    pub teleport_threshold: f64,
    /// Length of one travel-time aggregation period, seconds.
    pub stats_period: f64,
    /// Number of periods in the travel-time moving window.
    pub stats_window: usize,
    pub kappa: f64,
    pub link_cost: LinkCostParams,
    pub ue: UeOptions,
    pub flow_diagnostics: bool,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            dt: 1.0,
            teleport_threshold: 300.0,
            stats_period: 60.0,
            stats_window: 5,
            kappa: 0.5,
            link_cost: LinkCostParams::default(),
            ue: UeOptions { max_iter: 200, gap_tol: 1e-3 },
            flow_diagnostics: false,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(EngineError::Params(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("teleport_threshold", self.teleport_threshold)?;
        positive("stats_period", self.stats_period)?;
        if self.stats_window == 0 || self.kappa < 0.0 {
            return Err(EngineError::Params("stats_window must be >= 1 and kappa >= 0".into()));
        }
        self.link_cost.validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Insert,
    EdgeEnter,
    EdgeLeave,
    Reroute,
    Teleport,
    Arrive,
    StrandedWarning,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Insert => "insert",
            EventKind::EdgeEnter => "edge_enter",
            EventKind::EdgeLeave => "edge_leave",
            EventKind::Reroute => "reroute",
            EventKind::Teleport => "teleport",
            EventKind::Arrive => "arrive",
            EventKind::StrandedWarning => "stranded_warning",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub vehicle: usize,
    pub edge: String,
    pub payload: String,
}

/// Network-wide aggregates recorded at the end of every step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    pub time: f64,
    /// Vehicles on the network.
    pub present: usize,
    pub sum_speed: f64,
    /// Σ (now − scheduled depart) over vehicles on the network.
    pub sum_travel_time: f64,
    pub sum_distance: f64,
    /// Not yet inserted, including vehicles due but held at their origin.
    pub pending: usize,
    pub teleporting: usize,
    pub arrived: usize,
}

impl StepSample {
    pub fn census(&self) -> usize {
        self.present + self.pending + self.teleporting + self.arrived
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: usize,
    pub class: String,
    pub origin: String,
    pub exit: String,
    pub depart: f64,
    pub insert: Option<f64>,
    pub arrival: Option<f64>,
    /// Arrival minus scheduled departure.
    pub travel_time: Option<f64>,
    pub distance: f64,
    pub reroutes: u32,
    pub teleports: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trace {
    pub dt: f64,
    /// Departure window of the simulated plan, seconds.
    pub window: f64,
    pub end_time: f64,
    pub total_lane_length: f64,
    pub events: Vec<EventRecord>,
    pub samples: Vec<StepSample>,
    pub vehicles: Vec<VehicleRecord>,
    /// Edge entries per class, indexed by edge.
    pub edge_entries: BTreeMap<String, Vec<u64>>,
    pub flow_diag: Vec<FlowUpdateDiag>,
    /// Steps in which a vehicle had to brake harder than its comfortable
    /// deceleration to keep a nonnegative gap.
    pub hard_brakes: u64,
    pub incomplete: bool,
}

impl Trace {
    pub fn makespan(&self) -> f64 {
        self.vehicles.iter().filter_map(|v| v.arrival).fold(0.0, f64::max)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Pending,
    Queued,
    Active,
    Teleporting,
    Arrived,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Cross {
    Exit,
    Into(EdgeId, usize),
}

#[derive(Clone, Debug)]
struct Slot {
    class: usize,
    origin: Origin,
    exit: EdgeId,
    status: Status,
    lane: usize,
    edge_enter: f64,
    teleport_ready: f64,
    teleport_target: usize,
    reroutes: u32,
    warned: bool,
}

#[derive(Clone, Debug, Default)]
struct PeriodCounters {
    traversals: Vec<u32>,
    switch_edges: Vec<u32>,
    evaluations: u32,
    switches: u32,
}

pub struct World<'a> {
    net: &'a RoadNetwork,
    params: EngineParams,
    classes: Vec<VehicleClassSpec>,
    reroute: Vec<Option<RerouteParams>>,
    vehicles: Vec<VehicleState>,
    slots: Vec<Slot>,
    /// Per edge, per lane: vehicle ids ordered front first.
    lanes: Vec<Vec<Vec<usize>>>,
    pending: Vec<usize>,
    next_pending: usize,
    queued: Vec<usize>,
    teleporting: Vec<usize>,
    stats: EdgeTravelStats,
    counters: PeriodCounters,
    counter_period: u64,
    /// Per-vehicle streams for the speed factor and dawdling noise, so one
    /// vehicle's draws never depend on another's class.
    noise: Vec<ChaCha8Rng>,
    clock: f64,
    arrived: usize,
    trace: Trace,
}

/// Builds a world with every planned departure queued.
///
/// Passenger flows from start edges get routes sampled from a user
/// equilibrium over the edges open at time zero. Rerouting classes are
/// routed on insertion. Remaining flows use the free-flow shortest path.
pub fn new_world<'a>(
    net: &'a RoadNetwork,
    plan: &DemandPlan,
    classes: &ClassRegistry,
    params: &EngineParams,
    seed: u64,
) -> Result<World<'a>, EngineError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut class_names: Vec<String> = Vec::new();
    let mut class_specs: Vec<VehicleClassSpec> = Vec::new();
    let mut class_of_flow = Vec::with_capacity(plan.flows.len());
    for flow in &plan.flows {
        let idx = match class_names.iter().position(|n| *n == flow.class) {
            Some(i) => i,
            None => {
                let spec = classes.get(&flow.class).ok_or_else(|| EngineError::UnknownClass(flow.class.clone()))?;
                class_names.push(flow.class.clone());
                class_specs.push(spec.clone());
                class_names.len() - 1
            }
        };
        class_of_flow.push(idx);
        let origin_ok = match flow.origin {
            Origin::StartEdge(i) => i < net.start_edges().len(),
            Origin::BusStop(i) => i < net.bus_stops().len(),
        };
        if !origin_ok || flow.exit >= net.exit_points().len() {
            return Err(EngineError::PlanMismatch(format!(
                "flow {} references {} / exit {} not present in the network",
                flow.id, flow.origin, flow.exit
            )));
        }
        if flow.departures.len() as u64 != flow.count {
            return Err(EngineError::PlanMismatch(format!(
                "flow {} has {} departures for count {}",
                flow.id,
                flow.departures.len(),
                flow.count
            )));
        }
    }
    let reroute: Vec<Option<RerouteParams>> = class_specs
        .iter()
        .map(|s| RerouteParams::from_class(s, params.kappa, params.stats_window))
        .collect();
    for r in reroute.iter().flatten() {
        r.validate().map_err(|e| EngineError::Params(e.to_string()))?;
    }

    // Equilibrium routes for passenger flows.
    let t0_active = net.apply_closures(0.0);
    let hours = (plan.scenario.window / 3600.0).max(f64::MIN_POSITIVE);
    let mut od_index: BTreeMap<(EdgeId, EdgeId), usize> = BTreeMap::new();
    let mut demand: Vec<OdDemand> = Vec::new();
    for (flow, &c) in plan.flows.iter().zip(&class_of_flow) {
        if reroute[c].is_none() && matches!(flow.origin, Origin::StartEdge(_)) {
            let key = (net.origin_edge(flow.origin), net.exit_points()[flow.exit]);
            let i = *od_index.entry(key).or_insert_with(|| {
                demand.push(OdDemand { origin: key.0, dest: key.1, demand: 0.0 });
                demand.len() - 1
            });
            demand[i].demand += flow.count as f64 / hours;
        }
    }
    let ue = if demand.is_empty() {
        None
    } else {
        Some(solve_ue(net, &demand, &params.link_cost, &params.ue, Some(&t0_active))?)
    };
    let free = net.free_flow_times();

    let mut vehicles = Vec::new();
    let mut slots = Vec::new();
    let mut noise = Vec::new();
    for (flow, &c) in plan.flows.iter().zip(&class_of_flow) {
        let origin_edge = net.origin_edge(flow.origin);
        let exit = net.exit_points()[flow.exit];
        let routes: Vec<Vec<EdgeId>> = if reroute[c].is_some() {
            vec![Vec::new(); flow.departures.len()]
        } else if matches!(flow.origin, Origin::StartEdge(_)) {
            let sol = ue.as_ref().expect("solved when passenger flows exist");
            sample_routes(sol, od_index[&(origin_edge, exit)], flow.departures.len(), &mut rng)?
        } else {
            let p = shortest_path(net, &free, Some(&t0_active), origin_edge, exit).ok_or_else(|| {
                EngineError::PlanMismatch(format!("exit {} unreachable from {}", exit.0, flow.origin))
            })?;
            let mut r = vec![origin_edge];
            r.extend(p.edges);
            vec![r; flow.departures.len()]
        };
        for (&t, route) in flow.departures.iter().zip(routes) {
            let id = vehicles.len();
            let mut own = ChaCha8Rng::seed_from_u64(seed);
            own.set_stream(id as u64 + 1);
            let z: f64 = StandardNormal.sample(&mut own);
            let sf = speed_factor_from_normal(&class_specs[c], z);
            noise.push(own);
            vehicles.push(VehicleState::new(id, &flow.class, route, t, sf));
            slots.push(Slot {
                class: c,
                origin: flow.origin,
                exit,
                status: Status::Pending,
                lane: 0,
                edge_enter: 0.0,
                teleport_ready: 0.0,
                teleport_target: 0,
                reroutes: 0,
                warned: false,
            });
        }
    }
    let mut pending: Vec<usize> = (0..vehicles.len()).collect();
    pending.sort_by(|&a, &b| vehicles[a].depart_time.total_cmp(&vehicles[b].depart_time).then(a.cmp(&b)));

    let n_edges = net.edges().len();
    let edge_entries = class_names.iter().map(|n| (n.clone(), vec![0; n_edges])).collect();
    Ok(World {
        net,
        params: params.clone(),
        classes: class_specs,
        reroute,
        vehicles,
        slots,
        lanes: net.edges().iter().map(|e| vec![Vec::new(); e.lanes as usize]).collect(),
        pending,
        next_pending: 0,
        queued: Vec::new(),
        teleporting: Vec::new(),
        stats: EdgeTravelStats::for_network(net, params.stats_window),
        counters: PeriodCounters {
            traversals: vec![0; n_edges],
            switch_edges: vec![0; n_edges],
            ..Default::default()
        },
        counter_period: 0,
        noise,
        clock: 0.0,
        arrived: 0,
        trace: Trace {
            dt: params.dt,
            window: plan.scenario.window,
            end_time: 0.0,
            total_lane_length: net.total_lane_length(),
            events: Vec::new(),
            samples: Vec::new(),
            vehicles: Vec::new(),
            edge_entries,
            flow_diag: Vec::new(),
            hard_brakes: 0,
            incomplete: false,
        },
    })
}

impl<'a> World<'a> {
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn total_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len() - self.next_pending + self.queued.len()
    }

    pub fn active_count(&self) -> usize {
        self.lanes.iter().flatten().map(Vec::len).sum()
    }

    pub fn teleporting_count(&self) -> usize {
        self.teleporting.len()
    }

    pub fn arrived_count(&self) -> usize {
        self.arrived
    }

    pub fn finished(&self) -> bool {
        self.arrived == self.vehicles.len()
    }

    pub fn vehicle(&self, id: usize) -> &VehicleState {
        &self.vehicles[id]
    }

    /// Smallest bumper-to-bumper gap between consecutive vehicles in any lane.
    pub fn min_gap(&self) -> f64 {
        let mut best = f64::INFINITY;
        for lanes in &self.lanes {
            for ids in lanes {
                for w in ids.windows(2) {
                    let (l, f) = (&self.vehicles[w[0]], &self.vehicles[w[1]]);
                    best = best.min(l.position_on_edge - self.spec(w[0]).length - f.position_on_edge);
                }
            }
        }
        best
    }

    fn spec(&self, id: usize) -> &VehicleClassSpec {
        &self.classes[self.slots[id].class]
    }

    fn period_of(&self, t: f64) -> u64 {
        (t / self.params.stats_period + EPS).floor().max(0.0) as u64
    }

    fn edge_name(&self, e: EdgeId) -> String {
        self.net.edge(e).id.clone()
    }

    fn log(&mut self, time: f64, kind: EventKind, vehicle: usize, edge: EdgeId, payload: String) {
        let edge = self.edge_name(edge);
        self.trace.events.push(EventRecord { time, kind, vehicle, edge, payload });
    }

    /// Advances the clock by one step and returns the events it produced.
    pub fn step(&mut self) -> Result<Vec<EventRecord>, EngineError> {
        let first_event = self.trace.events.len();
        let t = self.clock;
        let dt = self.params.dt;
        let t1 = t + dt;
        let active = self.net.apply_closures(t);
        let period = self.period_of(t);
        self.close_periods(period);
        self.stats.roll_to(period);

        self.reenter_teleported(t, &active);
        self.insert_due(t, &active);
        self.change_lanes();
        self.check_gaps(t)?;
        let cross = self.grants(&active);
        let new_speed = self.compute_speeds(&cross)?;
        self.advance(t1, &cross, new_speed)?;
        self.update_waiting_and_teleport(t1);
        self.reroute_all(t1, &active);

        self.clock = t1;
        self.sample(t1);
        Ok(self.trace.events[first_event..].to_vec())
    }

    /// Steps until every vehicle has arrived or `max_sim_time` is reached.
    pub fn run_to_completion(mut self, max_sim_time: f64) -> Result<Trace, EngineError> {
        while !self.finished() && self.clock + EPS < max_sim_time {
            self.step()?;
        }
        self.close_periods(u64::MAX);
        self.trace.incomplete = !self.finished();
        self.trace.end_time = self.clock;
        self.trace.vehicles = self
            .vehicles
            .iter()
            .zip(&self.slots)
            .map(|(v, s)| VehicleRecord {
                id: v.id,
                class: v.class.clone(),
                origin: self.net.edge(self.net.origin_edge(s.origin)).id.clone(),
                exit: self.net.edge(s.exit).id.clone(),
                depart: v.depart_time,
                insert: v.insert_time,
                arrival: v.arrival_time,
                travel_time: v.arrival_time.map(|a| a - v.depart_time),
                distance: v.distance_traveled,
                reroutes: s.reroutes,
                teleports: v.teleport_count,
            })
            .collect();
        Ok(self.trace)
    }

    fn sample(&mut self, t: f64) {
        let mut s = StepSample {
            time: t,
            pending: self.pending_count(),
            teleporting: self.teleporting.len(),
            arrived: self.arrived,
            ..Default::default()
        };
        for ids in self.lanes.iter().flatten() {
            for &id in ids {
                let v = &self.vehicles[id];
                s.present += 1;
                s.sum_speed += v.speed;
                s.sum_travel_time += t - v.depart_time;
                s.sum_distance += v.distance_traveled;
            }
        }
        debug_assert_eq!(s.census(), self.vehicles.len());
        self.trace.samples.push(s);
    }

    /// Emits flow-update diagnostic rows for every period before `period`.
    fn close_periods(&mut self, period: u64) {
        if period <= self.counter_period {
            return;
        }
        if self.params.flow_diagnostics {
            let c = &self.counters;
            let r = if c.evaluations > 0 { 1.0 - c.switches as f64 / c.evaluations as f64 } else { 1.0 };
            for e in 0..c.traversals.len() {
                if c.traversals[e] == 0 && c.switch_edges[e] == 0 {
                    continue;
                }
                let p = if c.switches > 0 { (c.switch_edges[e] as f64 / c.switches as f64).min(1.0) } else { 0.0 };
                let x = c.traversals[e] as f64;
                self.trace.flow_diag.push(FlowUpdateDiag {
                    period: self.counter_period,
                    edge: self.net.edges()[e].id.clone(),
                    mean_tt: self.stats.mean_tt(e),
                    variance: self.stats.variance_tt(e),
                    penalized_weight: self.stats.penalized_weight(e, self.params.kappa),
                    r_t: r,
                    p_t: p,
                    x_t: x,
                    predicted: flow_update_diag(x, r, p).expect("fractions in range"),
                    reroutes: c.switch_edges[e],
                });
            }
        }
        let n = self.counters.traversals.len();
        self.counters = PeriodCounters { traversals: vec![0; n], switch_edges: vec![0; n], ..Default::default() };
        self.counter_period = period;
    }

    fn reenter_teleported(&mut self, t: f64, active: &ActiveEdges) {
        let mut still = Vec::new();
        for id in std::mem::take(&mut self.teleporting) {
            loop {
                if self.slots[id].teleport_ready > t + EPS {
                    still.push(id);
                    break;
                }
                let target = self.slots[id].teleport_target;
                if target >= self.vehicles[id].route.len() {
                    let last = *self.vehicles[id].route.last().expect("nonempty route");
                    self.finish(id, t, last);
                    break;
                }
                let e = self.vehicles[id].route[target];
                let spec = self.spec(id);
                let pos = spec.length.min(self.net.edge(e).length);
                let lane = if active.is_active(e) { self.insertion_lane(id, e, pos) } else { None };
                match lane {
                    Some(k) => {
                        let v = &mut self.vehicles[id];
                        v.route_cursor = target;
                        v.position_on_edge = pos;
                        v.speed = 0.0;
                        v.waiting_time = 0.0;
                        v.distance_traveled += pos;
                        self.place(id, e, k);
                        self.slots[id].status = Status::Active;
                        self.slots[id].edge_enter = t;
                        self.count_entry(id, e);
                        self.log(t, EventKind::EdgeEnter, id, e, "teleport".into());
                        break;
                    }
                    None => {
                        // Pass over this edge at free-flow pace.
                        let edge = self.net.edge(e);
                        self.vehicles[id].distance_traveled += edge.length;
                        self.slots[id].teleport_ready += edge.free_flow_time();
                        self.slots[id].teleport_target += 1;
                    }
                }
            }
        }
        self.teleporting = still;
    }

    fn finish(&mut self, id: usize, t: f64, edge: EdgeId) {
        let v = &mut self.vehicles[id];
        v.arrived = true;
        v.arrival_time = Some(t);
        v.speed = 0.0;
        self.slots[id].status = Status::Arrived;
        self.arrived += 1;
        self.log(t, EventKind::Arrive, id, edge, String::new());
    }

    fn count_entry(&mut self, id: usize, e: EdgeId) {
        let name = &self.vehicles[id].class;
        if let Some(v) = self.trace.edge_entries.get_mut(name) {
            v[e.0] += 1;
        }
        if self.reroute[self.slots[id].class].is_some() {
            self.counters.traversals[e.0] += 1;
        }
    }

    /// Inserts `id` into lane `k` of `e`, keeping the lane front-first.
    fn place(&mut self, id: usize, e: EdgeId, k: usize) {
        let pos = self.vehicles[id].position_on_edge;
        let lane = &self.lanes[e.0][k];
        let at = lane.iter().position(|&o| self.vehicles[o].position_on_edge < pos).unwrap_or(lane.len());
        self.lanes[e.0][k].insert(at, id);
        self.slots[id].lane = k;
    }

    /// Lane of `e` where `id` fits with its front bumper at `pos`, preferring
    /// the most free space ahead.
    fn insertion_lane(&self, id: usize, e: EdgeId, pos: f64) -> Option<usize> {
        let spec = self.spec(id);
        let length = self.net.edge(e).length;
        let mut best: Option<(usize, f64)> = None;
        for (k, ids) in self.lanes[e.0].iter().enumerate() {
            let mut ahead = length - pos;
            let mut ok = true;
            for &o in ids {
                let other = &self.vehicles[o];
                let os = self.spec(o);
                if other.position_on_edge > pos {
                    ahead = ahead.min(other.position_on_edge - os.length - pos);
                } else {
                    let behind = pos - spec.length - other.position_on_edge;
                    if behind < os.min_gap + other.speed * os.tau {
                        ok = false;
                    }
                    break;
                }
            }
            if ok && ahead >= spec.min_gap && best.is_none_or(|(_, a)| ahead > a) {
                best = Some((k, ahead));
            }
        }
        best.map(|(k, _)| k)
    }

    fn insert_due(&mut self, t: f64, active: &ActiveEdges) {
        while self.next_pending < self.pending.len() {
            let id = self.pending[self.next_pending];
            if self.vehicles[id].depart_time > t + EPS {
                break;
            }
            self.slots[id].status = Status::Queued;
            self.queued.push(id);
            self.next_pending += 1;
        }
        let mut blocked: Vec<Origin> = Vec::new();
        let mut weights: Option<Vec<f64>> = None;
        let mut waiting = Vec::new();
        for id in std::mem::take(&mut self.queued) {
            let origin = self.slots[id].origin;
            if blocked.contains(&origin) {
                waiting.push(id);
                continue;
            }
            let e = self.net.origin_edge(origin);
            if self.vehicles[id].route.is_empty() {
                let w = weights.get_or_insert_with(|| self.stats.penalized_weights(self.params.kappa));
                match shortest_path(self.net, w, Some(active), e, self.slots[id].exit) {
                    Some(p) => {
                        let mut r = vec![e];
                        r.extend(p.edges);
                        self.vehicles[id].route = r;
                    }
                    None => {
                        if !self.slots[id].warned {
                            self.slots[id].warned = true;
                            self.log(t, EventKind::StrandedWarning, id, e, "no route at insertion".into());
                        }
                        waiting.push(id);
                        continue;
                    }
                }
            }
            let spec = self.spec(id);
            let length = self.net.edge(e).length;
            let pos = match origin {
                Origin::StartEdge(_) => spec.length.min(length),
                Origin::BusStop(i) => self.net.bus_stops()[i].position.clamp(spec.length.min(length), length),
            };
            match self.insertion_lane(id, e, pos) {
                Some(k) => {
                    let v = &mut self.vehicles[id];
                    v.position_on_edge = pos;
                    v.speed = 0.0;
                    v.insert_time = Some(t);
                    self.place(id, e, k);
                    self.slots[id].status = Status::Active;
                    self.slots[id].edge_enter = t;
                    self.count_entry(id, e);
                    self.log(t, EventKind::Insert, id, e, format!("lane={k}"));
                }
                None => {
                    blocked.push(origin);
                    waiting.push(id);
                }
            }
        }
        self.queued = waiting;
    }

    /// Two-regime overtaking on multi-lane edges, vehicles in id order.
    fn change_lanes(&mut self) {
        let dt = self.params.dt;
        let mut movers: Vec<usize> = Vec::new();
        for lanes in &self.lanes {
            if lanes.len() < 2 {
                continue;
            }
            for ids in lanes {
                movers.extend(ids.iter().skip(1).copied());
            }
        }
        movers.sort_unstable();
        for id in movers {
            let e = self.vehicles[id].current_edge();
            let k = self.slots[id].lane;
            let lane = &self.lanes[e.0][k];
            let i = lane.iter().position(|&o| o == id).expect("vehicle in its lane");
            if i == 0 {
                continue;
            }
            let f = &self.vehicles[id];
            let spec = self.spec(id);
            let leader_speed = self.vehicles[lane[i - 1]].speed;
            let n_lanes = self.lanes[e.0].len();
            let candidates = [k + 1, k.wrapping_sub(1)];
            for target in candidates.into_iter().filter(|&c| c < n_lanes) {
                let other = &self.lanes[e.0][target];
                let mut ahead = (f64::INFINITY, f64::INFINITY);
                let mut behind: Option<usize> = None;
                for &o in other {
                    let ov = &self.vehicles[o];
                    if ov.position_on_edge > f.position_on_edge {
                        ahead = (ov.position_on_edge - self.spec(o).length - f.position_on_edge, ov.speed);
                    } else {
                        behind = Some(o);
                        break;
                    }
                }
                let (gap_ahead, v_ahead) = ahead;
                if gap_ahead < spec.min_gap || !overtake_decision(f.speed, leader_speed, gap_ahead, spec) {
                    continue;
                }
                if v_ahead.is_finite() {
                    let own = krauss_safe_speed(v_ahead, gap_ahead - spec.min_gap, spec.decel, spec.tau).unwrap_or(0.0);
                    if own < f.speed - spec.decel * dt {
                        continue;
                    }
                }
                if let Some(b) = behind {
                    let bv = &self.vehicles[b];
                    let bs = self.spec(b);
                    let gap = f.position_on_edge - spec.length - bv.position_on_edge;
                    if gap < bs.min_gap {
                        continue;
                    }
                    let safe = krauss_safe_speed(f.speed, gap - bs.min_gap, bs.decel, bs.tau).unwrap_or(0.0);
                    if safe < bv.speed - bs.decel * dt {
                        continue;
                    }
                }
                self.lanes[e.0][k].retain(|&o| o != id);
                self.place(id, e, target);
                break;
            }
        }
    }

    fn check_gaps(&self, t: f64) -> Result<(), EngineError> {
        for (e, lanes) in self.lanes.iter().enumerate() {
            for ids in lanes {
                for w in ids.windows(2) {
                    let gap = self.vehicles[w[0]].position_on_edge
                        - self.spec(w[0]).length
                        - self.vehicles[w[1]].position_on_edge;
                    if gap < -EPS {
                        return Err(EngineError::NegativeGap {
                            time: t,
                            edge: self.net.edges()[e].id.clone(),
                            follower: w[1],
                            leader: w[0],
                            gap,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Decides which vehicles may leave their edge this step. Each target
    /// lane admits one lane-front vehicle per step (closest to its edge end,
    /// then lowest id); same-lane followers bound for the same edge inherit
    /// the grant.
    fn grants(&self, active: &ActiveEdges) -> Vec<Option<Cross>> {
        let dt = self.params.dt;
        let mut cross: Vec<Option<Cross>> = vec![None; self.vehicles.len()];
        let mut cands: Vec<(EdgeId, f64, usize)> = Vec::new();
        for (e, lanes) in self.lanes.iter().enumerate() {
            let length = self.net.edges()[e].length;
            for ids in lanes {
                let Some(&f) = ids.first() else { continue };
                let v = &self.vehicles[f];
                let Some(next) = v.next_edge() else { continue };
                if !active.is_active(next) {
                    continue;
                }
                let dist = length - v.position_on_edge;
                if dist <= (v.speed + self.spec(f).accel * dt) * dt + EPS {
                    cands.push((next, dist, f));
                }
            }
        }
        cands.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut reserved: HashSet<(EdgeId, usize)> = HashSet::new();
        for (next, _, f) in cands {
            let n_len = self.net.edge(next).length;
            let mut best: Option<(usize, f64)> = None;
            for (k, ids) in self.lanes[next.0].iter().enumerate() {
                if reserved.contains(&(next, k)) {
                    continue;
                }
                let space = ids
                    .last()
                    .map(|&l| self.vehicles[l].position_on_edge - self.spec(l).length)
                    .unwrap_or(n_len);
                if best.is_none_or(|(_, s)| space > s) {
                    best = Some((k, space));
                }
            }
            if let Some((k, space)) = best {
                if space >= self.spec(f).min_gap {
                    reserved.insert((next, k));
                    cross[f] = Some(Cross::Into(next, k));
                }
            }
        }
        for lanes in &self.lanes {
            for ids in lanes {
                let mut chain: Option<Cross> = None;
                for (i, &id) in ids.iter().enumerate() {
                    let v = &self.vehicles[id];
                    if v.on_last_edge() {
                        cross[id] = Some(Cross::Exit);
                        continue;
                    }
                    if i == 0 {
                        chain = cross[id];
                        continue;
                    }
                    match chain {
                        Some(Cross::Into(n, k)) if v.next_edge() == Some(n) => cross[id] = Some(Cross::Into(n, k)),
                        _ => chain = None,
                    }
                }
            }
        }
        cross
    }

    /// New speeds for every vehicle on the network, computed from the state
    /// at the start of the step.
    fn compute_speeds(&mut self, cross: &[Option<Cross>]) -> Result<Vec<f64>, EngineError> {
        let dt = self.params.dt;
        let mut out = vec![0.0; self.vehicles.len()];
        for e in 0..self.lanes.len() {
            let edge = &self.net.edges()[e];
            for k in 0..self.lanes[e].len() {
                for i in 0..self.lanes[e][k].len() {
                    let id = self.lanes[e][k][i];
                    let v = &self.vehicles[id];
                    let spec = &self.classes[self.slots[id].class];
                    let mut leaders: Vec<Option<(f64, f64)>> = Vec::with_capacity(2);
                    if i > 0 {
                        let l = self.lanes[e][k][i - 1];
                        let lv = &self.vehicles[l];
                        let raw = lv.position_on_edge - self.spec(l).length - v.position_on_edge;
                        leaders.push(Some((lv.speed, (raw - spec.min_gap).max(0.0))));
                    }
                    match cross[id] {
                        Some(Cross::Exit) => {}
                        Some(Cross::Into(n, nk)) => {
                            if i == 0 {
                                if let Some(&l) = self.lanes[n.0][nk].last() {
                                    let lv = &self.vehicles[l];
                                    let raw = edge.length - v.position_on_edge + lv.position_on_edge - self.spec(l).length;
                                    leaders.push(Some((lv.speed, (raw - spec.min_gap).max(0.0))));
                                }
                            }
                        }
                        None => leaders.push(Some((0.0, (edge.length - v.position_on_edge).max(0.0)))),
                    }
                    if leaders.is_empty() {
                        leaders.push(None);
                    }
                    let noise: f64 = self.noise[id].random();
                    let mut best = f64::INFINITY;
                    for leader in leaders {
                        best = best.min(krauss_step(v, leader, spec, edge.speed_limit, dt, noise)?);
                    }
                    out[id] = best;
                }
            }
        }
        Ok(out)
    }

    /// Moves vehicles, enforces nonnegative gaps, then applies edge
    /// transitions and arrivals.
    fn advance(&mut self, t1: f64, cross: &[Option<Cross>], speed: Vec<f64>) -> Result<(), EngineError> {
        let dt = self.params.dt;
        let mut new_pos: Vec<f64> = vec![0.0; self.vehicles.len()];
        for ids in self.lanes.iter().flatten() {
            for &id in ids {
                new_pos[id] = self.vehicles[id].position_on_edge + speed[id] * dt;
            }
        }

        // Backstop: pull vehicles back behind their leader's new tail (or the
        // stop line) until nothing changes.
        let mut clamped = vec![false; self.vehicles.len()];
        for _ in 0..64 {
            let mut changed = false;
            for e in 0..self.lanes.len() {
                let length = self.net.edges()[e].length;
                for k in 0..self.lanes[e].len() {
                    for i in 0..self.lanes[e][k].len() {
                        let id = self.lanes[e][k][i];
                        let mut limit = f64::INFINITY;
                        if i > 0 {
                            let l = self.lanes[e][k][i - 1];
                            limit = new_pos[l] - self.spec(l).length;
                        } else if let Some(Cross::Into(n, nk)) = cross[id] {
                            if let Some(&l) = self.lanes[n.0][nk].last() {
                                limit = length + new_pos[l] - self.spec(l).length;
                            }
                        }
                        if cross[id].is_none() {
                            limit = limit.min(length);
                        }
                        if new_pos[id] > limit + EPS {
                            let old = self.vehicles[id].position_on_edge;
                            if limit < old - EPS {
                                let leader = if i > 0 { self.lanes[e][k][i - 1] } else { id };
                                return Err(EngineError::NegativeGap {
                                    time: t1,
                                    edge: self.net.edges()[e].id.clone(),
                                    follower: id,
                                    leader,
                                    gap: limit - old,
                                });
                            }
                            new_pos[id] = limit.max(old);
                            clamped[id] = true;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut moves: Vec<(usize, EdgeId, EdgeId, usize, f64)> = Vec::new();
        let mut arrivals: Vec<(usize, EdgeId)> = Vec::new();
        for e in 0..self.lanes.len() {
            let length = self.net.edges()[e].length;
            for k in 0..self.lanes[e].len() {
                let ids = self.lanes[e][k].clone();
                let mut drained = 0;
                for (i, &id) in ids.iter().enumerate() {
                    let old = self.vehicles[id].position_on_edge;
                    let v_new = (new_pos[id] - old) / dt;
                    let decel = self.spec(id).decel;
                    let v = &mut self.vehicles[id];
                    if clamped[id] && v.speed - v_new > decel * dt + EPS {
                        self.trace.hard_brakes += 1;
                    }
                    v.speed = v_new.max(0.0);
                    v.distance_traveled += new_pos[id] - old;
                    let crossing = i == drained && new_pos[id] >= length - EPS;
                    match cross[id] {
                        Some(Cross::Exit) if crossing => {
                            v.position_on_edge = length;
                            arrivals.push((id, EdgeId(e)));
                            drained += 1;
                        }
                        Some(Cross::Into(n, nk)) if crossing => {
                            moves.push((id, EdgeId(e), n, nk, new_pos[id] - length));
                            drained += 1;
                        }
                        _ => v.position_on_edge = new_pos[id].min(length),
                    }
                }
                self.lanes[e][k].drain(..drained);
            }
        }

        for (id, e) in arrivals {
            self.record_traversal(id, e, t1);
            self.log(t1, EventKind::EdgeLeave, id, e, String::new());
            self.finish(id, t1, e);
        }
        for (id, from, to, k, over) in moves {
            self.record_traversal(id, from, t1);
            self.log(t1, EventKind::EdgeLeave, id, from, String::new());
            let v = &mut self.vehicles[id];
            v.route_cursor += 1;
            v.position_on_edge = over.clamp(0.0, self.net.edge(to).length);
            self.lanes[to.0][k].push(id);
            self.slots[id].lane = k;
            self.slots[id].edge_enter = t1;
            self.count_entry(id, to);
            self.log(t1, EventKind::EdgeEnter, id, to, format!("lane={k}"));
        }
        Ok(())
    }

    fn record_traversal(&mut self, id: usize, e: EdgeId, t1: f64) {
        // The origin edge is only partly traversed.
        if self.vehicles[id].route_cursor == 0 {
            return;
        }
        let tt = t1 - self.slots[id].edge_enter;
        let period = self.stats.current_period();
        self.stats
            .record_edge_traversal(e.0, tt, period)
            .expect("traversal times are at least one step");
    }

    fn update_waiting_and_teleport(&mut self, t1: f64) {
        let dt = self.params.dt;
        for ids in self.lanes.iter().flatten() {
            for &id in ids {
                let v = &mut self.vehicles[id];
                if v.speed < WAITING_SPEED {
                    v.waiting_time += dt;
                } else {
                    v.waiting_time = 0.0;
                }
            }
        }
        let mut out = Vec::new();
        for lanes in &self.lanes {
            for ids in lanes {
                if let Some(&f) = ids.first() {
                    let v = &self.vehicles[f];
                    if !v.on_last_edge() && v.waiting_time > self.params.teleport_threshold + EPS {
                        out.push(f);
                    }
                }
            }
        }
        out.sort_unstable();
        for id in out {
            let e = self.vehicles[id].current_edge();
            let k = self.slots[id].lane;
            self.lanes[e.0][k].retain(|&o| o != id);
            let blocked = self.vehicles[id].next_edge().expect("not on last edge");
            let edge = self.net.edge(e);
            let b = self.net.edge(blocked);
            let v = &mut self.vehicles[id];
            let waited = v.waiting_time;
            v.distance_traveled += edge.length - v.position_on_edge + b.length;
            v.teleport_count += 1;
            v.speed = 0.0;
            v.waiting_time = 0.0;
            v.route_cursor += 1;
            let slot = &mut self.slots[id];
            slot.status = Status::Teleporting;
            slot.teleport_ready = t1 + b.free_flow_time();
            slot.teleport_target = self.vehicles[id].route_cursor + 1;
            self.teleporting.push(id);
            self.log(t1, EventKind::Teleport, id, e, format!("waiting={waited};skipped={}", b.id));
        }
    }

    fn reroute_all(&mut self, t1: f64, active: &ActiveEdges) {
        let mut ids: Vec<usize> = self
            .lanes
            .iter()
            .flatten()
            .flatten()
            .copied()
            .filter(|&id| self.reroute[self.slots[id].class].is_some())
            .collect();
        if ids.is_empty() {
            return;
        }
        ids.sort_unstable();
        let weights = self.stats.penalized_weights(self.params.kappa);
        for id in ids {
            let params = self.reroute[self.slots[id].class].expect("filtered");
            let decision = maybe_reroute(&self.vehicles[id], self.net, &weights, active, &params, t1);
            if decision.evaluated() {
                self.vehicles[id].last_reroute_time = Some(t1);
                self.counters.evaluations += 1;
            }
            let e = self.vehicles[id].current_edge();
            match decision {
                RerouteDecision::Switch { tail, new_cost, old_cost } => {
                    for edge in &tail {
                        self.counters.switch_edges[edge.0] += 1;
                    }
                    self.counters.switches += 1;
                    let v = &mut self.vehicles[id];
                    v.route.truncate(v.route_cursor + 1);
                    v.route.extend(tail);
                    self.slots[id].reroutes += 1;
                    self.log(t1, EventKind::Reroute, id, e, format!("old_cost={old_cost:.3};new_cost={new_cost:.3}"));
                }
                RerouteDecision::Stranded => {
                    self.log(t1, EventKind::StrandedWarning, id, e, "destination unreachable".into());
                }
                RerouteDecision::Keep(_) => {}
            }
        }
    }
}

/// Writes events as CSV rows `time,kind,vehicle,edge,payload`.
pub fn events_csv(events: &[EventRecord]) -> String {
    let mut out = String::from("time,kind,vehicle,edge,payload\n");
    for e in events {
        out.push_str(&format!("{},{},{},{},{}\n", e.time, e.kind, e.vehicle, e.edge, csv_field(&e.payload)));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
