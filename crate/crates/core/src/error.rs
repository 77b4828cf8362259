use thiserror::Error;

/// Errors raised while loading or validating a road network.
#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{context} references unknown {kind} `{id}`")]
    DanglingReference {
        context: String,
        kind: &'static str,
        id: String,
    },
    #[error("invalid {field} on {kind} `{id}`: {reason}")]
    Invariant {
        kind: &'static str,
        id: String,
        field: &'static str,
        reason: String,
    },
    #[error("infeasible grid request: {0}")]
    InfeasibleGrid(String),
    #[error("network is not runnable: {0}")]
    NotRunnable(String),
}

/// Errors from the vehicle dynamics layer.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown vehicle class `{0}`")]
    UnknownClass(String),
    #[error("negative gap {0} m passed to the safe-speed rule")]
    NegativeGap(f64),
    #[error("invalid vehicle class `{name}`: {reason}")]
    InvalidClass { name: String, reason: String },
}

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("invalid population table: {0}")]
    Population(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("No HDV flows found in the dataset.")]
    NoFlows,
    #[error("invalid schedule parameters: {0}")]
    Schedule(String),
    #[error("plan does not match network: {0}")]
    NetworkMismatch(String),
    #[error("report is incomplete; window loss is undefined")]
    IncompleteReport,
}

#[derive(Debug, Error)]
pub enum AssignError {
    #[error("origin edge {origin} cannot reach destination edge {dest}")]
    Disconnected { origin: String, dest: String },
    #[error("no paths available for OD pair {0}")]
    EmptyPathSet(usize),
    #[error("invalid cost parameters: {0}")]
    Params(String),
}

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("nonpositive travel time {0} s")]
    NonPositiveTime(f64),
    #[error("fraction {name}={value} outside [0, 1]")]
    Fraction { name: &'static str, value: f64 },
    #[error("invalid reroute parameters: {0}")]
    Params(String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("plan does not match network: {0}")]
    PlanMismatch(String),
    #[error("unknown vehicle class `{0}` in plan")]
    UnknownClass(String),
    #[error("negative gap {gap:.4} m between vehicle {follower} and leader {leader} on edge {edge} at t={time}")]
    NegativeGap {
        time: f64,
        edge: String,
        follower: usize,
        leader: usize,
        gap: f64,
    },
    #[error("route assignment failed: {0}")]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid engine parameters: {0}")]
    Params(String),
}
