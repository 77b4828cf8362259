//! Deterministic evacuation traffic simulation.
//!
//! Networks and closures ([`net`]), vehicle classes and car following
//! ([`vehicle`]), demand synthesis ([`demand`]), equilibrium assignment
//! ([`assign`]), online rerouting ([`router`]), the microsimulation
//! ([`engine`]) and evacuation metrics ([`metrics`]).

pub mod assign;
pub mod demand;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod net;
pub mod path;
pub mod router;
pub mod vehicle;

pub use assign::{solve_ue, LinkCostParams, OdDemand, UeOptions, UeSolution};
pub use demand::{build_demand_plan, DemandPlan, Mode, Phase, PopulationTable, SCurveParams, ScenarioSpec};
pub use engine::{new_world, EngineParams, EventKind, EventRecord, Trace, World};
pub use error::{AssignError, DemandError, EngineError, ModelError, NetworkError, RouterError};
pub use metrics::{compare, interval_metrics, summarize, IntervalMetrics, MetricsReport};
pub use net::{generate_grid, load_network, Closure, EdgeId, GridSpec, NodeId, Origin, RoadNetwork};
pub use vehicle::{builtin_class, ClassRegistry, VehicleClassSpec, VehicleState};
