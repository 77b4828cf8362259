//! Static user-equilibrium assignment (method of successive averages over
//! BPR link costs) and per-vehicle route sampling.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::AssignError;
use crate::net::{ActiveEdges, EdgeId, RoadNetwork};
use crate::path::PathTree;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkCostParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LinkCostParams {
    fn default() -> Self {
        LinkCostParams { alpha: 0.15, beta: 4.0 }
    }
}

impl LinkCostParams {
    pub fn validate(&self) -> Result<(), AssignError> {
        if self.alpha < 0.0 || self.beta < 1.0 || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(AssignError::Params(format!(
                "need alpha >= 0 and beta >= 1, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UeOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
}

impl Default for UeOptions {
    fn default() -> Self {
        UeOptions { max_iter: 500, gap_tol: 1e-3 }
    }
}

/// BPR volume-delay function.
pub fn bpr_time(free_flow: f64, flow: f64, capacity: f64, alpha: f64, beta: f64) -> f64 {
    free_flow * (1.0 + alpha * (flow / capacity).powf(beta))
}

/// ∫₀^flow of [`bpr_time`].
pub fn bpr_integral(free_flow: f64, flow: f64, capacity: f64, alpha: f64, beta: f64) -> f64 {
    free_flow * (flow + alpha * capacity * (flow / capacity).powf(beta + 1.0) / (beta + 1.0))
}

/// Sum over edges of the integrated link cost at the given flows.
pub fn beckmann_objective(net: &RoadNetwork, flows: &[f64], params: &LinkCostParams) -> f64 {
    net.edges()
        .iter()
        .zip(flows)
        .map(|(e, &x)| bpr_integral(e.free_flow_time(), x, e.capacity, params.alpha, params.beta))
        .sum()
}

pub fn link_times(net: &RoadNetwork, flows: &[f64], params: &LinkCostParams) -> Vec<f64> {
    net.edges()
        .iter()
        .zip(flows)
        .map(|(e, &x)| bpr_time(e.free_flow_time(), x, e.capacity, params.alpha, params.beta))
        .collect()
}

/// Demand for one origin/destination edge pair, veh/h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdDemand {
    pub origin: EdgeId,
    pub dest: EdgeId,
    pub demand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathFlow {
    /// Full route, starting with the origin edge and ending with the
    /// destination edge.
    pub edges: Vec<EdgeId>,
    pub flow: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdPaths {
    pub origin: EdgeId,
    pub dest: EdgeId,
    pub demand: f64,
    pub paths: Vec<PathFlow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeSolution {
    pub link_flows: Vec<f64>,
    pub od: Vec<OdPaths>,
    pub relative_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Beckmann objective after each iteration.
    pub objective: Vec<f64>,
}

impl UeSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    /// Cost of every stored path under the equilibrium link times.
    pub fn path_costs(&self, net: &RoadNetwork, params: &LinkCostParams) -> Vec<Vec<f64>> {
        let t = link_times(net, &self.link_flows, params);
        self.od
            .iter()
            .map(|od| od.paths.iter().map(|p| p.edges.iter().map(|e| t[e.0]).sum()).collect())
            .collect()
    }
}

/// Paths carrying more than this share of their OD demand count as used.
const USED_PATH_SHARE: f64 = 0.01;
/// Used paths may cost at most `1 + WARDROP_SLACK · gap_tol` times the
/// shortest path.
const WARDROP_SLACK: f64 = 5.0;

fn path_cost(edges: &[EdgeId], times: &[f64]) -> f64 {
    edges.iter().map(|e| times[e.0]).sum()
}

struct OdState {
    paths: Vec<PathFlow>,
    index: HashMap<Vec<EdgeId>, usize>,
}

/// Solves the static user equilibrium with MSA (step 1/k).
///
/// Link flows are recomputed from path flows each iteration, so link/path
/// consistency and per-OD demand totals hold exactly. Zero-demand pairs are
/// kept with an empty path set.
pub fn solve_ue(
    net: &RoadNetwork,
    demand: &[OdDemand],
    params: &LinkCostParams,
    options: &UeOptions,
    active: Option<&ActiveEdges>,
) -> Result<UeSolution, AssignError> {
    params.validate()?;
    if options.max_iter == 0 {
        return Err(AssignError::Params("max_iter must be >= 1".into()));
    }
    for d in demand {
        if !(d.demand.is_finite() && d.demand >= 0.0) {
            return Err(AssignError::Params(format!("invalid demand {}", d.demand)));
        }
    }

    let n_edges = net.edges().len();
    let mut state: Vec<OdState> = demand
        .iter()
        .map(|_| OdState { paths: Vec::new(), index: HashMap::new() })
        .collect();

    // Group OD pairs by origin node so each iteration runs one tree per origin.
    let mut by_origin: Vec<(EdgeId, Vec<usize>)> = Vec::new();
    for (i, d) in demand.iter().enumerate() {
        if d.demand == 0.0 {
            continue;
        }
        match by_origin.iter_mut().find(|(o, _)| *o == d.origin) {
            Some((_, v)) => v.push(i),
            None => by_origin.push((d.origin, vec![i])),
        }
    }

    let all_or_nothing = |times: &[f64]| -> Result<Vec<(usize, Vec<EdgeId>, f64)>, AssignError> {
        let mut out = Vec::new();
        for (origin, ods) in &by_origin {
            let tree = PathTree::build(net, times, active, net.edge(*origin).to);
            for &i in ods {
                let d = &demand[i];
                let route = if d.origin == d.dest {
                    vec![d.origin]
                } else {
                    let p = tree.path_to_edge(net, times, active, d.dest).ok_or_else(|| {
                        AssignError::Disconnected {
                            origin: net.edge(d.origin).id.clone(),
                            dest: net.edge(d.dest).id.clone(),
                        }
                    })?;
                    let mut r = Vec::with_capacity(p.edges.len() + 1);
                    r.push(d.origin);
                    r.extend(p.edges);
                    r
                };
                let cost = path_cost(&route, times);
                out.push((i, route, cost));
            }
        }
        Ok(out)
    };

    let link_flows_of = |state: &[OdState]| {
        let mut x = vec![0.0; n_edges];
        for od in state {
            for p in &od.paths {
                for e in &p.edges {
                    x[e.0] += p.flow;
                }
            }
        }
        x
    };

    // Initial all-or-nothing load at free-flow times.
    let free = link_times(net, &vec![0.0; n_edges], params);
    for (i, route, _) in all_or_nothing(&free)? {
        let st = &mut state[i];
        st.index.insert(route.clone(), 0);
        st.paths.push(PathFlow { edges: route, flow: demand[i].demand });
    }

    let mut x = link_flows_of(&state);
    let mut objective = Vec::new();
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=options.max_iter {
        iterations = k;
        objective.push(beckmann_objective(net, &x, params));
        let times = link_times(net, &x, params);
        let aon = all_or_nothing(&times)?;
        let total: f64 = x.iter().zip(&times).map(|(a, b)| a * b).sum();
        let shortest: f64 = aon.iter().map(|(i, _, c)| demand[*i].demand * c).sum();
        gap = if total > 0.0 { ((total - shortest) / total).max(0.0) } else { 0.0 };
        // A small aggregate gap can hide one stale path that kept the equal
        // share of an early iterate, so every path above 1 % of its OD
        // demand must also be near the current shortest cost.
        let slack = 1.0 + WARDROP_SLACK * options.gap_tol;
        let paths_ok = aon.iter().all(|(i, _, best)| {
            state[*i]
                .paths
                .iter()
                .all(|p| p.flow <= USED_PATH_SHARE * demand[*i].demand || path_cost(&p.edges, &times) <= slack * best)
        });
        converged = gap <= options.gap_tol && paths_ok;
        if converged || k == options.max_iter {
            break;
        }
        let step = 1.0 / (k as f64 + 1.0);
        for st in state.iter_mut() {
            for p in st.paths.iter_mut() {
                p.flow *= 1.0 - step;
            }
        }
        for (i, route, _) in aon {
            let st = &mut state[i];
            let add = step * demand[i].demand;
            match st.index.get(&route) {
                Some(&j) => st.paths[j].flow += add,
                None => {
                    st.index.insert(route.clone(), st.paths.len());
                    st.paths.push(PathFlow { edges: route, flow: add });
                }
            }
        }
        // Renormalize so Σ path flows equals demand exactly despite rounding.
        for (st, d) in state.iter_mut().zip(demand) {
            let sum: f64 = st.paths.iter().map(|p| p.flow).sum();
            if sum > 0.0 {
                let scale = d.demand / sum;
                for p in st.paths.iter_mut() {
                    p.flow *= scale;
                }
            }
        }
        x = link_flows_of(&state);
    }

    let od = state
        .into_iter()
        .zip(demand)
        .map(|(st, d)| OdPaths { origin: d.origin, dest: d.dest, demand: d.demand, paths: st.paths })
        .collect();
    Ok(UeSolution {
        link_flows: x,
        od,
        relative_gap: gap,
        iterations,
        converged,
        objective,
    })
}

/// Draws `n` routes for one OD pair with probability proportional to path
/// flow.
pub fn sample_routes<R: Rng + ?Sized>(
    sol: &UeSolution,
    od_index: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<EdgeId>>, AssignError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let od = sol.od.get(od_index).ok_or(AssignError::EmptyPathSet(od_index))?;
    if od.paths.is_empty() {
        return Err(AssignError::EmptyPathSet(od_index));
    }
    if od.paths.len() == 1 {
        return Ok(vec![od.paths[0].edges.clone(); n]);
    }
    let dist = WeightedIndex::new(od.paths.iter().map(|p| p.flow.max(0.0)))
        .map_err(|_| AssignError::EmptyPathSet(od_index))?;
    Ok((0..n).map(|_| od.paths[dist.sample(rng)].edges.clone()).collect())
}
