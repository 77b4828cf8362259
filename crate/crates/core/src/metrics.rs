//! Evacuation metrics: per-interval series, run summaries and
//! baseline-relative percentage changes.

use serde::{Deserialize, Serialize};

use crate::assign::{beckmann_objective, LinkCostParams};
use crate::engine::{EventKind, Trace};
use crate::net::RoadNetwork;

pub const DEFAULT_INTERVAL: f64 = 60.0;

pub const INTERVAL_CSV_HEADER: &str = "t,volume,speed,mean_tt,distance,density,congestion_index,efficiency";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    /// Interval start, seconds.
    pub t: f64,
    /// Mean number of vehicles on the network.
    pub volume: f64,
    /// Mean speed over vehicles on the network, m/s.
    pub speed: f64,
    /// Mean time since scheduled departure over vehicles on the network.
    pub mean_tt: f64,
    /// Mean distance travelled so far, m.
    pub distance: f64,
    /// Vehicles per meter of lane.
    pub density: f64,
    pub congestion_index: f64,
    pub efficiency: f64,
}

impl IntervalMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            self.volume,
            self.speed,
            self.mean_tt,
            self.distance,
            self.density,
            self.congestion_index,
            self.efficiency
        )
    }
}

/// Aggregates step samples into consecutive intervals of `interval_length`
/// seconds covering the whole trace.
pub fn interval_metrics(trace: &Trace, interval_length: f64) -> Vec<IntervalMetrics> {
    assert!(interval_length > 0.0, "interval length must be positive");
    if trace.samples.is_empty() {
        return Vec::new();
    }
    let n = (trace.end_time / interval_length).ceil().max(1.0) as usize;
    // Samples are stamped at step ends; a sample at time s describes the
    // step (s - dt, s].
    let mut acc = vec![(0usize, 0usize, 0.0, 0.0, 0.0); n];
    for s in &trace.samples {
        let k = (((s.time - trace.dt) / interval_length).floor().max(0.0) as usize).min(n - 1);
        let a = &mut acc[k];
        a.0 += 1;
        a.1 += s.present;
        a.2 += s.sum_speed;
        a.3 += s.sum_travel_time;
        a.4 += s.sum_distance;
    }
    acc.iter()
        .enumerate()
        .map(|(k, &(steps, present, speed, tt, dist))| {
            let mut m = IntervalMetrics { t: k as f64 * interval_length, ..Default::default() };
            if steps == 0 || present == 0 {
                return m;
            }
            let p = present as f64;
            m.volume = p / steps as f64;
            m.speed = speed / p;
            m.mean_tt = tt / p;
            m.distance = dist / p;
            m.density = if trace.total_lane_length > 0.0 { m.volume / trace.total_lane_length } else { 0.0 };
            m.congestion_index = congestion_index(m.mean_tt, m.speed);
            m.efficiency = if m.distance > 0.0 { m.speed / m.distance } else { 0.0 };
            m
        })
        .collect()
}

/// Mean travel time over mean speed; zero when nothing moves.
pub fn congestion_index(mean_tt: f64, speed: f64) -> f64 {
    if speed > 0.0 {
        mean_tt / speed
    } else {
        0.0
    }
}

pub fn travel_efficiency(speed: f64, distance: f64) -> f64 {
    if distance > 0.0 {
        speed / distance
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total_vehicles: usize,
    pub arrived: usize,
    /// Σ (arrival − scheduled depart) over arrived vehicles.
    pub total_travel_time: f64,
    pub mean_travel_time: f64,
    /// Emitted equal to the mean travel time.
    pub normalized_travel_time: f64,
    /// Mean per-vehicle trip distance of arrived vehicles.
    pub average_distance: f64,
    pub average_speed: f64,
    pub mean_density: f64,
    pub mean_congestion_index: f64,
    pub mean_efficiency: f64,
    /// Vehicle-seconds on the network divided by the departure window.
    pub traffic_volume: f64,
    pub makespan: f64,
    pub teleports: usize,
    pub reroutes: usize,
    pub hard_brakes: u64,
    /// Beckmann integral of BPR costs over time-averaged link flows.
    pub beckmann: f64,
    pub incomplete: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub series: Vec<IntervalMetrics>,
    pub summary: Summary,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }

    pub fn intervals_csv(&self) -> String {
        let mut out = String::from(INTERVAL_CSV_HEADER);
        out.push('\n');
        for m in &self.series {
            out.push_str(&m.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Builds the run summary. Interval quantities are time-averaged over
/// intervals with at least one vehicle on the network.
pub fn summarize(series: &[IntervalMetrics], trace: &Trace, net: &RoadNetwork, link: &LinkCostParams) -> MetricsReport {
    let busy: Vec<&IntervalMetrics> = series.iter().filter(|m| m.volume > 0.0).collect();
    let avg = |f: fn(&IntervalMetrics) -> f64| {
        if busy.is_empty() {
            0.0
        } else {
            busy.iter().map(|m| f(m)).sum::<f64>() / busy.len() as f64
        }
    };
    let arrived: Vec<_> = trace.vehicles.iter().filter(|v| v.arrival.is_some()).collect();
    let total_travel_time: f64 = arrived.iter().filter_map(|v| v.travel_time).sum();
    let mean_travel_time = if arrived.is_empty() { 0.0 } else { total_travel_time / arrived.len() as f64 };
    let average_distance = if arrived.is_empty() {
        0.0
    } else {
        arrived.iter().map(|v| v.distance).sum::<f64>() / arrived.len() as f64
    };

    let hours = trace.end_time / 3600.0;
    let mut flows = vec![0.0; net.edges().len()];
    if hours > 0.0 {
        for counts in trace.edge_entries.values() {
            for (x, &c) in flows.iter_mut().zip(counts) {
                *x += c as f64 / hours;
            }
        }
    }

    MetricsReport {
        series: series.to_vec(),
        summary: Summary {
            total_vehicles: trace.vehicles.len(),
            arrived: arrived.len(),
            total_travel_time,
            mean_travel_time,
            normalized_travel_time: mean_travel_time,
            average_distance,
            average_speed: avg(|m| m.speed),
            mean_density: avg(|m| m.density),
            mean_congestion_index: avg(|m| m.congestion_index),
            mean_efficiency: avg(|m| m.efficiency),
            traffic_volume: traffic_volume(trace),
            makespan: trace.makespan(),
            teleports: trace.count(EventKind::Teleport),
            reroutes: trace.count(EventKind::Reroute),
            hard_brakes: trace.hard_brakes,
            beckmann: beckmann_objective(net, &flows, link),
            incomplete: trace.incomplete,
        },
    }
}

/// Mean number of vehicles on the network over a horizon equal to the
/// departure window. Unlike an average over busy intervals it does not
/// depend on how long the run's tail lasts.
pub fn traffic_volume(trace: &Trace) -> f64 {
    if trace.window <= 0.0 {
        return 0.0;
    }
    trace.samples.iter().map(|s| s.present as f64).sum::<f64>() * trace.dt / trace.window
}

/// Summary metrics in comparison-table row order.
pub const COMPARISON_METRICS: [&str; 9] = [
    "total_travel_time",
    "average_distance",
    "mean_travel_time",
    "density",
    "congestion_index",
    "normalized_travel_time",
    "average_speed",
    "traffic_volume",
    "travel_efficiency",
];

impl Summary {
    pub fn comparison_values(&self) -> [f64; 9] {
        [
            self.total_travel_time,
            self.average_distance,
            self.mean_travel_time,
            self.mean_density,
            self.mean_congestion_index,
            self.normalized_travel_time,
            self.average_speed,
            self.traffic_volume,
            self.mean_efficiency,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub value: f64,
    pub baseline: f64,
    /// `None` when the baseline is zero.
    pub delta_pct: Option<f64>,
}

pub fn percent_change(value: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        None
    } else {
        Some(100.0 * (value - baseline) / baseline)
    }
}

pub fn compare(report: &MetricsReport, baseline: &MetricsReport) -> Vec<DeltaRow> {
    COMPARISON_METRICS
        .iter()
        .zip(report.summary.comparison_values())
        .zip(baseline.summary.comparison_values())
        .map(|((name, value), base)| DeltaRow {
            metric: name.to_string(),
            value,
            baseline: base,
            delta_pct: percent_change(value, base),
        })
        .collect()
}
