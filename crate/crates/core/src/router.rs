//! Online rerouting for shared autonomous vehicles.
//!
//! Edge weights come from a moving window of per-period mean travel times,
//! penalized by their standard deviation. Each rerouting vehicle re-plans on
//! its own cadence after a warm-up and only switches when the alternative is
//! better by the configured fraction.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::RouterError;
use crate::net::{ActiveEdges, RoadNetwork};
use crate::path::{route_cost, shortest_path};
use crate::vehicle::{VehicleClassSpec, VehicleState};

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeTravelStats {
    window: usize,
    free_flow: Vec<f64>,
    buffers: Vec<VecDeque<f64>>,
    period_sum: Vec<f64>,
    period_count: Vec<u32>,
    current_period: u64,
}

impl EdgeTravelStats {
    pub fn new(free_flow: Vec<f64>, window: usize) -> Self {
        let n = free_flow.len();
        EdgeTravelStats {
            window: window.max(1),
            free_flow,
            buffers: vec![VecDeque::new(); n],
            period_sum: vec![0.0; n],
            period_count: vec![0; n],
            current_period: 0,
        }
    }

    pub fn for_network(net: &RoadNetwork, window: usize) -> Self {
        Self::new(net.free_flow_times(), window)
    }

    pub fn current_period(&self) -> u64 {
        self.current_period
    }

    /// Closes every period before `period`, pushing each edge's period mean.
    pub fn roll_to(&mut self, period: u64) {
        if period <= self.current_period {
            return;
        }
        for e in 0..self.buffers.len() {
            if self.period_count[e] > 0 {
                let mean = self.period_sum[e] / self.period_count[e] as f64;
                let buf = &mut self.buffers[e];
                buf.push_back(mean);
                while buf.len() > self.window {
                    buf.pop_front();
                }
                self.period_sum[e] = 0.0;
                self.period_count[e] = 0;
            }
        }
        self.current_period = period;
    }

    pub fn record_edge_traversal(&mut self, edge: usize, travel_time: f64, period: u64) -> Result<(), RouterError> {
        if !(travel_time > 0.0 && travel_time.is_finite()) {
            return Err(RouterError::NonPositiveTime(travel_time));
        }
        self.roll_to(period);
        self.period_sum[edge] += travel_time;
        self.period_count[edge] += 1;
        Ok(())
    }

    /// Completed-period means currently in the window, oldest first.
    pub fn history(&self, edge: usize) -> impl Iterator<Item = f64> + '_ {
        self.buffers[edge].iter().copied()
    }

    pub fn mean_tt(&self, edge: usize) -> f64 {
        let buf = &self.buffers[edge];
        if buf.is_empty() {
            return self.free_flow[edge];
        }
        buf.iter().sum::<f64>() / buf.len() as f64
    }

    /// Population variance of the window; zero when fewer than two entries.
    pub fn variance_tt(&self, edge: usize) -> f64 {
        let buf = &self.buffers[edge];
        if buf.is_empty() {
            return 0.0;
        }
        let mean = self.mean_tt(edge);
        buf.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / buf.len() as f64
    }

    pub fn penalized_weight(&self, edge: usize, kappa: f64) -> f64 {
        self.mean_tt(edge) + kappa * self.variance_tt(edge).sqrt()
    }

    pub fn penalized_weights(&self, kappa: f64) -> Vec<f64> {
        (0..self.buffers.len()).map(|e| self.penalized_weight(e, kappa)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerouteParams {
    pub period: f64,
    pub pre_period: f64,
    pub threshold: f64,
    pub kappa: f64,
    pub window: usize,
}

impl RerouteParams {
    pub fn from_class(spec: &VehicleClassSpec, kappa: f64, window: usize) -> Option<Self> {
        spec.reroute_period.map(|period| RerouteParams {
            period,
            pre_period: spec.reroute_pre_period,
            threshold: spec.reroute_threshold,
            kappa,
            window,
        })
    }

    pub fn validate(&self) -> Result<(), RouterError> {
        if self.period.is_nan() || self.period <= 0.0 {
            return Err(RouterError::Params("period must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(RouterError::Params("threshold must lie in [0, 1)".into()));
        }
        if self.kappa < 0.0 || self.pre_period < 0.0 || self.window == 0 {
            return Err(RouterError::Params("kappa, pre_period must be >= 0 and window >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeepReason {
    NotInserted,
    PrePeriod,
    Period,
    AtDestination,
    BelowThreshold,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RerouteDecision {
    Keep(KeepReason),
    /// Replace everything after the current edge with `tail`.
    Switch { tail: Vec<crate::net::EdgeId>, new_cost: f64, old_cost: f64 },
    /// Destination unreachable over active edges; route unchanged.
    Stranded,
}

impl RerouteDecision {
    /// Whether a shortest-path computation was performed.
    pub fn evaluated(&self) -> bool {
        matches!(
            self,
            RerouteDecision::Switch { .. } | RerouteDecision::Stranded | RerouteDecision::Keep(KeepReason::BelowThreshold)
        )
    }
}

/// Decides whether `vehicle` should switch routes at time `now`.
///
/// `weights` is a frozen snapshot of penalized edge weights; candidate and
/// current routes are priced with the same weights.
pub fn maybe_reroute(
    vehicle: &VehicleState,
    net: &RoadNetwork,
    weights: &[f64],
    active: &ActiveEdges,
    params: &RerouteParams,
    now: f64,
) -> RerouteDecision {
    let Some(inserted) = vehicle.insert_time else {
        return RerouteDecision::Keep(KeepReason::NotInserted);
    };
    if now - inserted < params.pre_period {
        return RerouteDecision::Keep(KeepReason::PrePeriod);
    }
    if vehicle.last_reroute_time.is_some_and(|last| now - last < params.period) {
        return RerouteDecision::Keep(KeepReason::Period);
    }
    if vehicle.on_last_edge() {
        return RerouteDecision::Keep(KeepReason::AtDestination);
    }
    let current = vehicle.current_edge();
    let remaining = &vehicle.route[vehicle.route_cursor + 1..];
    let old_cost = route_cost(remaining, weights, Some(active));
    match shortest_path(net, weights, Some(active), current, vehicle.destination()) {
        None => RerouteDecision::Stranded,
        Some(p) if p.cost < (1.0 - params.threshold) * old_cost => {
            RerouteDecision::Switch { tail: p.edges, new_cost: p.cost, old_cost }
        }
        Some(_) => RerouteDecision::Keep(KeepReason::BelowThreshold),
    }
}

/// Literal flow-update expression `r·x + (1 − r)·p`, logged as a
/// diagnostic only.
pub fn flow_update_diag(x_t: f64, r_t: f64, p_t: f64) -> Result<f64, RouterError> {
    for (name, value) in [("r_t", r_t), ("p_t", p_t)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(RouterError::Fraction { name, value });
        }
    }
    Ok(r_t * x_t + (1.0 - r_t) * p_t)
}

/// One row of the router diagnostics log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowUpdateDiag {
    pub period: u64,
    pub edge: String,
    pub mean_tt: f64,
    pub variance: f64,
    pub penalized_weight: f64,
    pub r_t: f64,
    pub p_t: f64,
    pub x_t: f64,
    pub predicted: f64,
    pub reroutes: u32,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{load_network, EdgeId};

    #[test]
    fn period_mean_of_traversals() {
        let mut s = EdgeTravelStats::new(vec![50.0], 3);
        s.record_edge_traversal(0, 80.0, 0).unwrap();
        s.record_edge_traversal(0, 120.0, 0).unwrap();
        assert_eq!(s.mean_tt(0), 50.0);
        s.roll_to(1);
        assert_eq!(s.history(0).collect::<Vec<_>>(), vec![100.0]);
        assert_eq!(s.mean_tt(0), 100.0);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut s = EdgeTravelStats::new(vec![1.0], 3);
        for (k, t) in [10.0, 20.0, 30.0, 40.0].into_iter().enumerate() {
            s.record_edge_traversal(0, t, k as u64).unwrap();
        }
        s.roll_to(4);
        assert_eq!(s.history(0).collect::<Vec<_>>(), vec![20.0, 30.0, 40.0]);
    }

    #[test]
    fn empty_history_falls_back_to_free_flow() {
        let s = EdgeTravelStats::new(vec![7.5], 5);
        assert_eq!(s.mean_tt(0), 7.5);
        assert_eq!(s.variance_tt(0), 0.0);
    }

    #[test]
    fn rejects_nonpositive_times() {
        let mut s = EdgeTravelStats::new(vec![1.0], 3);
        assert!(s.record_edge_traversal(0, 0.0, 0).is_err());
        assert!(s.record_edge_traversal(0, -1.0, 0).is_err());
    }

    fn with_history(values: &[f64]) -> EdgeTravelStats {
        let mut s = EdgeTravelStats::new(vec![1.0], 5);
        for (k, &t) in values.iter().enumerate() {
            s.record_edge_traversal(0, t, k as u64).unwrap();
        }
        s.roll_to(values.len() as u64);
        s
    }

    #[test]
    fn mean_variance_and_penalty() {
        let s = with_history(&[100.0, 120.0, 110.0]);
        assert!((s.mean_tt(0) - 110.0).abs() < 1e-12);
        assert!((s.variance_tt(0) - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(s.penalized_weight(0, 0.0), s.mean_tt(0));
        assert!((s.penalized_weight(0, 0.5) - 114.0825).abs() < 1e-4);
        let single = with_history(&[90.0]);
        assert_eq!((single.mean_tt(0), single.variance_tt(0)), (90.0, 0.0));
        assert_eq!(single.penalized_weight(0, 3.0), 90.0);
    }

    #[test]
    fn flow_update_examples() {
        assert_eq!(flow_update_diag(10.0, 1.0, 0.3).unwrap(), 10.0);
        assert_eq!(flow_update_diag(10.0, 0.0, 0.3).unwrap(), 0.3);
        assert!((flow_update_diag(10.0, 0.6, 0.3).unwrap() - 6.12).abs() < 1e-12);
        assert!(flow_update_diag(1.0, 1.2, 0.0).is_err());
        assert!(flow_update_diag(1.0, 0.5, -0.1).is_err());
    }

    /// o -> {cur: 1000 s | alt: configurable} -> x
    fn two_routes() -> RoadNetwork {
        load_network(
            r#"{
            "nodes": [{"id":"s","x":0,"y":0},{"id":"a","x":1,"y":0},{"id":"m1","x":2,"y":1},
                      {"id":"m2","x":2,"y":-1},{"id":"b","x":3,"y":0},{"id":"t","x":4,"y":0}],
            "edges": [
              {"id":"o","from":"s","to":"a","length":10,"lanes":1,"speed_limit":1},
              {"id":"c1","from":"a","to":"m1","length":500,"lanes":1,"speed_limit":1},
              {"id":"c2","from":"m1","to":"b","length":490,"lanes":1,"speed_limit":1},
              {"id":"a1","from":"a","to":"m2","length":400,"lanes":1,"speed_limit":1},
              {"id":"a2","from":"m2","to":"b","length":400,"lanes":1,"speed_limit":1},
              {"id":"x","from":"b","to":"t","length":10,"lanes":1,"speed_limit":1}
            ]}"#,
        )
        .unwrap()
    }

    fn vehicle_on_current_route(insert: f64) -> VehicleState {
        let mut v = VehicleState::new(0, "sav_post", vec![EdgeId(0), EdgeId(1), EdgeId(2), EdgeId(5)], 0.0, 1.0);
        v.insert_time = Some(insert);
        v
    }

    fn params(threshold: f64) -> RerouteParams {
        RerouteParams { period: 180.0, pre_period: 300.0, threshold, kappa: 0.0, window: 5 }
    }

    #[test]
    fn threshold_keeps_small_gains() {
        let net = two_routes();
        let mut w = net.free_flow_times();
        // current remaining = 500 + 490 + 10 = 1000; alternative = a1 + a2 + 10
        w[3] = 455.0;
        w[4] = 455.0; // 920
        let v = vehicle_on_current_route(0.0);
        let active = net.all_active();
        assert_eq!(
            maybe_reroute(&v, &net, &w, &active, &params(0.1), 400.0),
            RerouteDecision::Keep(KeepReason::BelowThreshold)
        );
        w[3] = 435.0;
        w[4] = 435.0; // 880
        match maybe_reroute(&v, &net, &w, &active, &params(0.1), 400.0) {
            RerouteDecision::Switch { tail, new_cost, old_cost } => {
                assert_eq!(tail, vec![EdgeId(3), EdgeId(4), EdgeId(5)]);
                assert_eq!((new_cost, old_cost), (880.0, 1000.0));
            }
            other => panic!("expected switch, got {other:?}"),
        }
    }

    #[test]
    fn pre_period_and_period_gates() {
        let net = two_routes();
        let w = net.free_flow_times();
        let active = net.all_active();
        let mut v = vehicle_on_current_route(0.0);
        assert_eq!(
            maybe_reroute(&v, &net, &w, &active, &params(0.1), 200.0),
            RerouteDecision::Keep(KeepReason::PrePeriod)
        );
        v.last_reroute_time = Some(300.0);
        assert_eq!(
            maybe_reroute(&v, &net, &w, &active, &params(0.1), 479.0),
            RerouteDecision::Keep(KeepReason::Period)
        );
        assert!(maybe_reroute(&v, &net, &w, &active, &params(0.1), 480.0).evaluated());
    }

    #[test]
    fn closed_route_switches_or_strands() {
        let net = two_routes();
        let w = net.free_flow_times();
        let v = vehicle_on_current_route(0.0);
        let mut active = net.all_active();
        active.deactivate(EdgeId(2));
        assert!(matches!(
            maybe_reroute(&v, &net, &w, &active, &params(0.1), 300.0),
            RerouteDecision::Switch { .. }
        ));
        active.deactivate(EdgeId(4));
        assert_eq!(maybe_reroute(&v, &net, &w, &active, &params(0.1), 300.0), RerouteDecision::Stranded);
    }
}
