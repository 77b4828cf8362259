use std::fs;
use std::path::Path;

use anyhow::Context;
use evacsim_core::engine::events_csv;
use evacsim_core::{
    build_demand_plan, interval_metrics, new_world, summarize, DemandPlan, EventKind, MetricsReport, ScenarioSpec,
    Trace,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Experiment;
use crate::error::{CliError, ErrorKind};

/// Everything one (scenario, seed) simulation produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scenario: String,
    pub seed: u64,
    pub plan: DemandPlan,
    pub trace: Trace,
    pub report: MetricsReport,
}

/// What a batch keeps after a run's files are written.
#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub scenario: String,
    pub seed: u64,
    #[serde(skip)]
    pub plan: DemandPlan,
    pub report: MetricsReport,
    pub reroute_events: usize,
    pub incomplete: bool,
}

/// Plan, route and simulate one scenario under one seed.
///
/// The plan and the engine draw from independent streams derived from the
/// seed, so two scenarios with the same seed differ only where their plans
/// differ.
pub fn simulate(exp: &Experiment, sc: &ScenarioSpec, seed: u64) -> Result<RunOutput, CliError> {
    let at = |e: CliError| e.at(&sc.id, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = build_demand_plan(&exp.population, sc, &exp.network, &exp.scurve_for(sc), &mut rng)
        .map_err(|e| at(CliError::runtime("demand", e)))?;
    let world = new_world(&exp.network, &plan, &exp.classes, &exp.engine, seed)
        .map_err(|e| at(CliError::runtime("assign", e)))?;
    let trace = world.run_to_completion(exp.max_sim_time).map_err(|e| at(CliError::runtime("simulate", e)))?;
    let series = interval_metrics(&trace, exp.interval);
    let report = summarize(&series, &trace, &exp.network, &exp.engine.link_cost);
    log::info!(
        "scenario {} seed {seed}: {} vehicles, makespan {:.0} s{}",
        sc.id,
        report.summary.total_vehicles,
        report.summary.makespan,
        if trace.incomplete { " (incomplete)" } else { "" }
    );
    Ok(RunOutput { scenario: sc.id.clone(), seed, plan, trace, report })
}

fn vehicles_csv(trace: &Trace) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for v in &trace.vehicles {
        w.serialize(v)?;
    }
    Ok(w.into_inner()?)
}

/// Writes `events.csv`, `vehicles.csv`, `intervals.csv` and `summary.json`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    let write = || -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("events.csv"), events_csv(&out.trace.events))?;
        fs::write(dir.join("vehicles.csv"), vehicles_csv(&out.trace)?)?;
        fs::write(dir.join("intervals.csv"), out.report.intervals_csv())?;
        fs::write(dir.join("summary.json"), out.report.to_json() + "\n")?;
        Ok(())
    };
    write().map_err(|e| CliError::runtime("write", e).at(&out.scenario, out.seed))
}

/// Worker cap from `EVACSIM_WORKERS`; unset or 0 means one per core.
pub fn worker_limit() -> usize {
    std::env::var("EVACSIM_WORKERS").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0)
}

/// Runs every job concurrently, writing each run under `dir_of(job)`.
/// Results come back in job order.
pub fn run_jobs(
    exp: &Experiment,
    jobs: &[(ScenarioSpec, u64)],
    dir_of: impl Fn(&ScenarioSpec, u64) -> std::path::PathBuf + Sync,
) -> Vec<Result<RunResult, CliError>> {
    let work = || {
        jobs.par_iter()
            .map(|(sc, seed)| {
                let out = simulate(exp, sc, *seed)?;
                write_run(&dir_of(sc, *seed), &out)?;
                Ok(RunResult {
                    scenario: out.scenario,
                    seed: out.seed,
                    reroute_events: out.trace.count(EventKind::Reroute),
                    incomplete: out.trace.incomplete,
                    plan: out.plan,
                    report: out.report,
                })
            })
            .collect::<Vec<_>>()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(worker_limit()).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

/// Splits batch results into successes and failures, both in job order.
pub fn partition(results: Vec<Result<RunResult, CliError>>) -> (Vec<RunResult>, Vec<CliError>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => failed.push(e),
        }
    }
    (ok, failed)
}

/// Error for the first run that hit the simulation time limit.
pub fn incomplete_error(runs: &[RunResult]) -> Option<CliError> {
    runs.iter().find(|r| r.incomplete).map(|r| {
        CliError::new(ErrorKind::Incomplete, "simulate", anyhow::anyhow!("vehicles still on the network at max_sim_time"))
            .at(&r.scenario, r.seed)
    })
}
