//! Evacuation demand: vehicle counts from population tables, allocation to
//! origins, OD matrices and departure schedules.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::DemandError;
use crate::metrics::MetricsReport;
use crate::net::{Origin, RoadNetwork};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationCategory {
    pub name: String,
    pub persons: u64,
}

/// Population split into vulnerable categories plus everyone else.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationTable {
    pub total: u64,
    pub vulnerable: Vec<PopulationCategory>,
    pub remaining: u64,
}

impl PopulationTable {
    /// Sumter County, FL census figures used by the reference experiments.
    pub fn sumter_county() -> Self {
        let cat = |name: &str, persons| PopulationCategory { name: name.to_string(), persons };
        PopulationTable {
            total: 137_265,
            vulnerable: vec![cat("elderly_85_plus", 6_836), cat("disability", 27_938), cat("lep", 2_000)],
            remaining: 100_491,
        }
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        let sum: u64 = self.vulnerable.iter().map(|c| c.persons).sum::<u64>() + self.remaining;
        if sum != self.total {
            return Err(DemandError::Population(format!(
                "categories sum to {sum} but total is {}",
                self.total
            )));
        }
        Ok(())
    }

    /// Proportionally rescales to `target` persons (largest-remainder
    /// rounding, so the parts still sum to the new total).
    pub fn scaled(&self, target: u64) -> Self {
        let parts: Vec<u64> = self
            .vulnerable
            .iter()
            .map(|c| c.persons)
            .chain(std::iter::once(self.remaining))
            .collect();
        let total = self.total.max(1) as f64;
        let exact: Vec<f64> = parts.iter().map(|&p| p as f64 * target as f64 / total).collect();
        let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
        let mut short = target - out.iter().sum::<u64>();
        let mut order: Vec<usize> = (0..parts.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for i in order {
            if short == 0 {
                break;
            }
            out[i] += 1;
            short -= 1;
        }
        let remaining = out.pop().unwrap_or(0);
        PopulationTable {
            total: target,
            vulnerable: self
                .vulnerable
                .iter()
                .zip(out)
                .map(|(c, persons)| PopulationCategory { name: c.name.clone(), persons })
                .collect(),
            remaining,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sav,
    Bus,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Pre,
    Post,
}

/// Served persons per vulnerable category published for the reference
/// county, scenarios 2 through 6.
const PUBLISHED_SERVED: [[u64; 3]; 5] = [
    [1_367, 5_588, 400],
    [2_734, 11_175, 800],
    [4_102, 16_763, 1_200],
    [5_469, 22_351, 1_600],
    [6_836, 27_938, 2_000],
];

fn default_sav_capacity() -> u32 {
    25
}
fn default_pv_capacity() -> u32 {
    5
}
fn default_min_sav() -> u64 {
    100
}
fn default_window() -> f64 {
    21_600.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    /// Share of every vulnerable category evacuated by SAV.
    #[serde(default)]
    pub fraction: f64,
    /// Everyone rides an SAV, counted on the aggregate population.
    #[serde(default)]
    pub all_sav: bool,
    /// Explicit served persons per vulnerable category; overrides
    /// `fraction` rounding when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub served: Option<Vec<u64>>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default = "default_sav_capacity")]
    pub sav_capacity: u32,
    #[serde(default = "default_pv_capacity")]
    pub pv_capacity: u32,
    #[serde(default = "default_min_sav")]
    pub min_sav_per_category: u64,
    /// Departure window, seconds.
    #[serde(default = "default_window")]
    pub window: f64,
}

impl ScenarioSpec {
    /// Scenario 1..=7: baseline, 20..100 % of vulnerable persons by SAV,
    /// then everyone by SAV.
    pub fn standard(number: u32) -> Result<Self, DemandError> {
        let (fraction, all_sav) = match number {
            1 => (0.0, false),
            2..=6 => ((number - 1) as f64 * 0.2, false),
            7 => (1.0, true),
            _ => return Err(DemandError::Scenario(format!("no standard scenario {number}"))),
        };
        Ok(ScenarioSpec {
            id: number.to_string(),
            fraction,
            all_sav,
            served: None,
            mode: Mode::Sav,
            phase: Phase::Pre,
            sav_capacity: default_sav_capacity(),
            pv_capacity: default_pv_capacity(),
            min_sav_per_category: default_min_sav(),
            window: default_window(),
        })
    }

    /// Standard scenario with the served counts published for
    /// [`PopulationTable::sumter_county`].
    pub fn published(number: u32) -> Result<Self, DemandError> {
        let mut sc = Self::standard(number)?;
        if (2..=6).contains(&number) {
            sc.served = Some(PUBLISHED_SERVED[number as usize - 2].to_vec());
        }
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(DemandError::Fraction(self.fraction));
        }
        if self.sav_capacity < 1 || self.pv_capacity < 1 {
            return Err(DemandError::Scenario("capacities must be >= 1".into()));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(DemandError::Scenario(format!("window must be positive, got {}", self.window)));
        }
        Ok(())
    }

    pub fn sav_class(&self) -> &'static str {
        match (self.mode, self.phase) {
            (Mode::Bus, _) => "bus",
            (Mode::Sav, Phase::Pre) => "sav_pre",
            (Mode::Sav, Phase::Post) => "sav_post",
        }
    }

    pub fn pv_class(&self) -> &'static str {
        match self.phase {
            Phase::Pre => "hdv_pre",
            Phase::Post => "hdv_post",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleCounts {
    pub sav_per_category: Vec<u64>,
    pub n_sav: u64,
    pub n_pv: u64,
    pub sav_persons: u64,
    pub pv_persons: u64,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Vehicle counts for one scenario.
///
/// Per vulnerable category: served persons → ceil(served / SAV capacity),
/// raised to `min_sav_per_category` when positive but below it. Everyone
/// else rides passenger vehicles at ceil(persons / PV capacity). The all-SAV
/// scenario counts SAVs on the aggregate population instead.
pub fn vehicle_counts(pop: &PopulationTable, sc: &ScenarioSpec) -> Result<VehicleCounts, DemandError> {
    pop.validate()?;
    sc.validate()?;
    let cap_sav = sc.sav_capacity as u64;
    let cap_pv = sc.pv_capacity as u64;
    let floor_up = |n: u64| if n > 0 && n < sc.min_sav_per_category { sc.min_sav_per_category } else { n };

    if sc.all_sav {
        let per_cat = pop.vulnerable.iter().map(|c| floor_up(ceil_div(c.persons, cap_sav))).collect();
        return Ok(VehicleCounts {
            sav_per_category: per_cat,
            n_sav: ceil_div(pop.total, cap_sav),
            n_pv: 0,
            sav_persons: pop.total,
            pv_persons: 0,
        });
    }

    let served: Vec<u64> = match &sc.served {
        Some(s) => {
            if s.len() != pop.vulnerable.len() {
                return Err(DemandError::Scenario(format!(
                    "{} served counts for {} categories",
                    s.len(),
                    pop.vulnerable.len()
                )));
            }
            for (c, &n) in pop.vulnerable.iter().zip(s) {
                if n > c.persons {
                    return Err(DemandError::Scenario(format!(
                        "served {n} exceeds {} persons in `{}`",
                        c.persons, c.name
                    )));
                }
            }
            s.clone()
        }
        None => pop
            .vulnerable
            .iter()
            .map(|c| (sc.fraction * c.persons as f64).round() as u64)
            .collect(),
    };
    let sav_per_category: Vec<u64> = served.iter().map(|&s| floor_up(ceil_div(s, cap_sav))).collect();
    let sav_persons: u64 = served.iter().sum();
    let pv_persons = pop.total - sav_persons;
    Ok(VehicleCounts {
        n_sav: sav_per_category.iter().sum(),
        sav_per_category,
        n_pv: ceil_div(pv_persons, cap_pv),
        sav_persons,
        pv_persons,
    })
}

/// Even split of `count` over `n_sources`; the first `count mod n` sources
/// get one extra.
pub fn allocate_to_sources(count: u64, n_sources: usize) -> Vec<u64> {
    assert!(n_sources >= 1, "need at least one source");
    let n = n_sources as u64;
    let base = count / n;
    let rem = (count % n) as usize;
    (0..n_sources).map(|i| base + u64::from(i < rem)).collect()
}

/// Splits each source's allocation evenly over `n_exits`. Row `i` hands its
/// remainder out round-robin starting at exit `i mod n_exits`.
pub fn build_od(allocation: &[u64], n_exits: usize) -> Vec<Vec<u64>> {
    assert!(n_exits >= 1, "need at least one exit");
    let x = n_exits as u64;
    allocation
        .iter()
        .enumerate()
        .map(|(i, &total)| {
            let mut row = vec![total / x; n_exits];
            for k in 0..(total % x) as usize {
                row[(i + k) % n_exits] += 1;
            }
            row
        })
        .collect()
}

/// Consecutive equal-length `[begin, end)` slots covering `[t0, t0 + window)`.
pub fn schedule_uniform(n_flows: usize, t0: f64, window: f64) -> Result<Vec<(f64, f64)>, DemandError> {
    if n_flows == 0 {
        return Err(DemandError::NoFlows);
    }
    if window.is_nan() || window <= 0.0 {
        return Err(DemandError::Schedule(format!("window must be positive, got {window}")));
    }
    let span = window / n_flows as f64;
    Ok((0..n_flows)
        .map(|i| {
            let begin = t0 + i as f64 * span;
            let end = if i + 1 == n_flows { t0 + window } else { t0 + (i + 1) as f64 * span };
            (begin, end)
        })
        .collect())
}

/// `count` departures spaced evenly from the start of `[begin, end)`.
pub fn spread_departures(count: u64, begin: f64, end: f64) -> Vec<f64> {
    let step = (end - begin) / count.max(1) as f64;
    (0..count).map(|j| begin + j as f64 * step).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SCurveParams {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for SCurveParams {
    fn default() -> Self {
        SCurveParams { mu: 5_400.0, sigma: 1_800.0 }
    }
}

/// Sorted departure times drawn from a normal distribution truncated to
/// `[0, window]`.
pub fn schedule_scurve<R: Rng + ?Sized>(
    n: usize,
    mu: f64,
    sigma: f64,
    window: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DemandError> {
    if n == 0 {
        return Err(DemandError::Schedule("need at least one departure".into()));
    }
    if !(mu > 0.0 && mu < window && sigma > 0.0) {
        return Err(DemandError::Schedule(format!(
            "need 0 < mu < window and sigma > 0, got mu={mu} sigma={sigma} window={window}"
        )));
    }
    let normal = Normal::new(mu, sigma).map_err(|e| DemandError::Schedule(e.to_string()))?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let t = normal.sample(rng);
        if (0.0..=window).contains(&t) {
            out.push(t);
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchFlow {
    pub id: usize,
    pub origin: Origin,
    pub exit: usize,
    pub class: String,
    pub count: u64,
    pub departures: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandPlan {
    pub scenario: ScenarioSpec,
    pub counts: VehicleCounts,
    pub alloc_sav: Vec<u64>,
    pub alloc_pv: Vec<u64>,
    pub od_sav: Vec<Vec<u64>>,
    pub od_pv: Vec<Vec<u64>>,
    pub flows: Vec<DispatchFlow>,
}

impl DemandPlan {
    pub fn empty(scenario: ScenarioSpec) -> Self {
        DemandPlan {
            scenario,
            counts: VehicleCounts { sav_per_category: vec![], n_sav: 0, n_pv: 0, sav_persons: 0, pv_persons: 0 },
            alloc_sav: vec![],
            alloc_pv: vec![],
            od_sav: vec![],
            od_pv: vec![],
            flows: vec![],
        }
    }

    pub fn total_vehicles(&self) -> u64 {
        self.flows.iter().map(|f| f.count).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Counts → allocations → OD matrices → timed flows.
///
/// Pre-disaster flows of each vehicle group get consecutive slots of the
/// window; post-disaster flows each draw their departures from the S-curve.
pub fn build_demand_plan<R: Rng + ?Sized>(
    pop: &PopulationTable,
    sc: &ScenarioSpec,
    net: &RoadNetwork,
    scurve: &SCurveParams,
    rng: &mut R,
) -> Result<DemandPlan, DemandError> {
    let counts = vehicle_counts(pop, sc)?;
    let n_exits = net.exit_points().len();
    if n_exits == 0 {
        return Err(DemandError::NetworkMismatch("network has no exit points".into()));
    }
    if counts.n_pv > 0 && net.start_edges().is_empty() {
        return Err(DemandError::NetworkMismatch("passenger vehicles need start edges".into()));
    }
    if counts.n_sav > 0 && net.bus_stops().is_empty() {
        return Err(DemandError::NetworkMismatch("SAVs need bus stops".into()));
    }

    let (alloc_pv, od_pv) = if net.start_edges().is_empty() {
        (vec![], vec![])
    } else {
        let a = allocate_to_sources(counts.n_pv, net.start_edges().len());
        let m = build_od(&a, n_exits);
        (a, m)
    };
    let (alloc_sav, od_sav) = if net.bus_stops().is_empty() {
        (vec![], vec![])
    } else {
        let a = allocate_to_sources(counts.n_sav, net.bus_stops().len());
        let m = build_od(&a, n_exits);
        (a, m)
    };

    let mut flows = Vec::new();
    let mut group = |od: &[Vec<u64>], origin: fn(usize) -> Origin, class: &str| {
        let start = flows.len();
        for (i, row) in od.iter().enumerate() {
            for (x, &count) in row.iter().enumerate() {
                if count > 0 {
                    flows.push(DispatchFlow {
                        id: flows.len(),
                        origin: origin(i),
                        exit: x,
                        class: class.to_string(),
                        count,
                        departures: Vec::new(),
                    });
                }
            }
        }
        start..flows.len()
    };
    let pv_range = group(&od_pv, Origin::StartEdge, sc.pv_class());
    let sav_range = group(&od_sav, Origin::BusStop, sc.sav_class());

    for range in [pv_range, sav_range] {
        if range.is_empty() {
            continue;
        }
        match sc.phase {
            Phase::Pre => {
                let slots = schedule_uniform(range.len(), 0.0, sc.window)?;
                for (flow, (b, e)) in flows[range].iter_mut().zip(slots) {
                    flow.departures = spread_departures(flow.count, b, e);
                }
            }
            Phase::Post => {
                for flow in &mut flows[range] {
                    flow.departures = schedule_scurve(flow.count as usize, scurve.mu, scurve.sigma, sc.window, rng)?;
                }
            }
        }
    }

    let dispatched: u64 = flows.iter().map(|f| f.departures.len() as u64).sum();
    debug_assert_eq!(dispatched, counts.n_sav + counts.n_pv);
    if dispatched != counts.n_sav + counts.n_pv {
        return Err(DemandError::Scenario(format!(
            "dispatched {dispatched} vehicles but counts require {}",
            counts.n_sav + counts.n_pv
        )));
    }

    Ok(DemandPlan { scenario: sc.clone(), counts, alloc_sav, alloc_pv, od_sav, od_pv, flows })
}

/// Window-selection loss: `alpha · mean congestion index + beta · window / t_ref`.
pub fn window_loss(
    report: &MetricsReport,
    window: f64,
    alpha: f64,
    beta: f64,
    t_ref: f64,
) -> Result<f64, DemandError> {
    if report.summary.incomplete {
        return Err(DemandError::IncompleteReport);
    }
    Ok(alpha * report.summary.mean_congestion_index + beta * window / t_ref)
}
