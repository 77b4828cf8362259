use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use evacsim_core::demand::DemandPlan;
use evacsim_core::metrics::{percent_change, Summary, COMPARISON_METRICS};
use evacsim_core::{Mode, ScenarioSpec};
use serde::Serialize;

use crate::config::Experiment;
use crate::error::{CliError, ErrorKind};
use crate::runner::{incomplete_error, partition, run_jobs, RunResult};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub metric: String,
    pub seeds: usize,
    pub mean: f64,
    pub sd: f64,
    pub baseline: f64,
    /// Empty when the baseline mean is zero.
    pub delta_pct: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub runs: Vec<RunResult>,
    pub comparison: Vec<ComparisonRow>,
    pub out_dir: PathBuf,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn metric_samples(runs: &[RunResult], scenario: &str, metric: usize) -> Vec<f64> {
    runs.iter()
        .filter(|r| r.scenario == scenario)
        .map(|r| r.report.summary.comparison_values()[metric])
        .collect()
}

/// Δ% of each scenario's seed-mean against the first scenario's seed-mean.
pub fn comparison_table(runs: &[RunResult], scenarios: &[ScenarioSpec]) -> Vec<ComparisonRow> {
    let Some(base) = scenarios.first() else { return vec![] };
    let mut rows = Vec::new();
    for sc in scenarios {
        for (m, name) in COMPARISON_METRICS.iter().enumerate() {
            let xs = metric_samples(runs, &sc.id, m);
            if xs.is_empty() {
                continue;
            }
            let (mean, sd) = mean_sd(&xs);
            let (baseline, _) = mean_sd(&metric_samples(runs, &base.id, m));
            let delta_pct = if sc.id == base.id { Some(0.0) } else { percent_change(mean, baseline) };
            rows.push(ComparisonRow {
                scenario: sc.id.clone(),
                metric: name.to_string(),
                seeds: xs.len(),
                mean,
                sd,
                baseline,
                delta_pct,
            });
        }
    }
    rows
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let write = || -> anyhow::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| CliError::runtime("write", e.context(path.display().to_string())))
}

fn jobs(exp: &Experiment) -> Vec<(ScenarioSpec, u64)> {
    exp.scenarios.iter().flat_map(|sc| exp.seeds.iter().map(move |&s| (sc.clone(), s))).collect()
}

/// Simulates every (scenario, seed) pair and writes per-run artifacts plus
/// `comparison.csv`. Outputs of successful runs are kept when others fail.
pub fn cmd_run(exp: &Experiment) -> Result<RunReport, CliError> {
    let out = exp.out_dir.clone();
    let results = run_jobs(exp, &jobs(exp), |sc, seed| out.join(&sc.id).join(seed.to_string()));
    let (runs, failed) = partition(results);
    let comparison = comparison_table(&runs, &exp.scenarios);
    write_csv(&out.join("comparison.csv"), &comparison)?;
    if let Some(e) = failed.into_iter().next() {
        return Err(e);
    }
    if let Some(e) = incomplete_error(&runs) {
        return Err(e);
    }
    Ok(RunReport { runs, comparison, out_dir: out })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub window: f64,
    /// Mean loss over the candidate's runs; infinite if any run failed.
    pub loss: f64,
    pub mean_congestion_index: f64,
    pub runs: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub selected: f64,
    pub rows: Vec<SweepRow>,
}

/// Argmin over finite losses; ties go to the smaller window.
pub fn select_window(rows: &[SweepRow]) -> Option<f64> {
    rows.iter()
        .filter(|r| r.loss.is_finite())
        .min_by(|a, b| a.loss.total_cmp(&b.loss).then(a.window.total_cmp(&b.window)))
        .map(|r| r.window)
}

pub fn validate_candidates(candidates: &[f64]) -> Result<(), CliError> {
    if candidates.len() < 2 {
        return Err(CliError::config(anyhow!("window sweep needs at least 2 candidates, got {}", candidates.len())));
    }
    if let Some(w) = candidates.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(CliError::config(anyhow!("candidate window {w} must be positive")));
    }
    Ok(())
}

/// Runs the configured scenarios once per candidate window and picks the
/// window with the smallest loss. Failed candidates score infinity.
pub fn cmd_sweep_window(exp: &Experiment, candidates: &[f64]) -> Result<SweepReport, CliError> {
    validate_candidates(candidates)?;
    let mut all = Vec::new();
    for &w in candidates {
        for (mut sc, seed) in jobs(exp) {
            sc.window = w;
            all.push((sc, seed));
        }
    }
    let out = exp.out_dir.clone();
    let results = run_jobs(exp, &all, |sc, seed| {
        out.join("sweep").join(format!("{}", sc.window)).join(&sc.id).join(seed.to_string())
    });

    let per = exp.scenarios.len() * exp.seeds.len();
    let mut rows = Vec::with_capacity(candidates.len());
    for (chunk, &w) in results.chunks(per).zip(candidates) {
        let mut losses = Vec::new();
        let mut xi = Vec::new();
        let mut failed = 0;
        for r in chunk {
            match r.as_ref().ok().and_then(|r| exp.loss.loss(&r.report, w).map(|l| (l, r))) {
                Some((l, r)) => {
                    losses.push(l);
                    xi.push(r.report.summary.mean_congestion_index);
                }
                None => {
                    if let Err(e) = r {
                        log::warn!("sweep candidate {w}: {e}");
                    }
                    failed += 1;
                }
            }
        }
        rows.push(SweepRow {
            window: w,
            loss: if failed > 0 { f64::INFINITY } else { mean_sd(&losses).0 },
            mean_congestion_index: mean_sd(&xi).0,
            runs: chunk.len(),
            failed,
        });
    }
    write_csv(&out.join("sweep.csv"), &rows)?;
    let selected = select_window(&rows)
        .ok_or_else(|| CliError::runtime("sweep", anyhow!("every candidate window failed")))?;
    fs::write(
        out.join("sweep.json"),
        serde_json::to_string_pretty(&SweepReport { selected, rows: rows.clone() }).expect("serializes") + "\n",
    )
    .map_err(|e| CliError::runtime("write", e))?;
    Ok(SweepReport { selected, rows })
}

/// Metrics shown side by side in the SAV/bus table.
pub const MODE_METRICS: [&str; 6] = [
    "mean_travel_time",
    "total_travel_time",
    "average_distance",
    "traffic_volume",
    "average_speed",
    "congestion_index",
];

fn mode_metric(s: &Summary, name: &str) -> f64 {
    match name {
        "mean_travel_time" => s.mean_travel_time,
        "total_travel_time" => s.total_travel_time,
        "average_distance" => s.average_distance,
        "traffic_volume" => s.traffic_volume,
        "average_speed" => s.average_speed,
        "congestion_index" => s.mean_congestion_index,
        _ => unreachable!("unknown mode metric {name}"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeRow {
    pub scenario: String,
    pub metric: String,
    pub sav: f64,
    pub bus: f64,
    /// Bus relative to SAV.
    pub delta_pct: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ModeComparison {
    pub sav: Vec<RunResult>,
    pub bus: Vec<RunResult>,
    pub rows: Vec<ModeRow>,
}

/// True when the plans match after erasing mode and vehicle class.
pub fn plans_match_except_class(a: &DemandPlan, b: &DemandPlan) -> bool {
    let erase = |p: &DemandPlan| {
        let mut p = p.clone();
        p.scenario.mode = Mode::Sav;
        for f in &mut p.flows {
            f.class.clear();
        }
        p.to_json()
    };
    erase(a) == erase(b)
}

/// Runs every scenario with SAVs and again with buses under the same seeds
/// and network, then tabulates both sides.
pub fn cmd_compare_modes(exp: &Experiment) -> Result<ModeComparison, CliError> {
    let out = exp.out_dir.clone();
    let sav_exp = exp.with_mode(Mode::Sav);
    let bus_exp = exp.with_mode(Mode::Bus);
    let sav = run_jobs(&sav_exp, &jobs(&sav_exp), |sc, seed| out.join("sav").join(&sc.id).join(seed.to_string()));
    let bus = run_jobs(&bus_exp, &jobs(&bus_exp), |sc, seed| out.join("bus").join(&sc.id).join(seed.to_string()));
    let (sav, mut failed) = partition(sav);
    let (bus, bus_failed) = partition(bus);
    failed.extend(bus_failed);

    for b in &bus {
        if let Some(s) = sav.iter().find(|s| s.scenario == b.scenario && s.seed == b.seed) {
            if !plans_match_except_class(&s.plan, &b.plan) {
                return Err(CliError::new(
                    ErrorKind::Runtime,
                    "demand",
                    anyhow!("SAV and bus plans differ beyond vehicle class"),
                )
                .at(&b.scenario, b.seed));
            }
        }
    }

    let mut rows = Vec::new();
    for sc in &exp.scenarios {
        for name in MODE_METRICS {
            let side = |runs: &[RunResult]| {
                let xs: Vec<f64> =
                    runs.iter().filter(|r| r.scenario == sc.id).map(|r| mode_metric(&r.report.summary, name)).collect();
                (!xs.is_empty()).then(|| mean_sd(&xs).0)
            };
            if let (Some(s), Some(b)) = (side(&sav), side(&bus)) {
                rows.push(ModeRow {
                    scenario: sc.id.clone(),
                    metric: name.to_string(),
                    sav: s,
                    bus: b,
                    delta_pct: percent_change(b, s),
                });
            }
        }
    }
    write_csv(&out.join("modes.csv"), &rows)?;
    if let Some(e) = failed.into_iter().next() {
        return Err(e);
    }
    let all: Vec<RunResult> = sav.iter().chain(&bus).cloned().collect();
    if let Some(e) = incomplete_error(&all) {
        return Err(e);
    }
    Ok(ModeComparison { sav, bus, rows })
}
