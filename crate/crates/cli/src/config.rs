use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use evacsim_core::demand::window_loss;
use evacsim_core::{
    generate_grid, ClassRegistry, Closure, EngineParams, GridSpec, Mode, Phase, PopulationTable, RoadNetwork,
    SCurveParams, ScenarioSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Network source: a JSON file or an inline grid request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSource {
    File(PathBuf),
    Grid { grid: GridSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationSource {
    /// `"sumter"` is the built-in reference county.
    Named(String),
    Table(PopulationTable),
}

impl Default for PopulationSource {
    fn default() -> Self {
        PopulationSource::Named("sumter".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioEntry {
    Number(u32),
    Custom(ScenarioSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClosureSource {
    File(PathBuf),
    Inline(Vec<Closure>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub t_ref: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0, t_ref: 21_600.0 }
    }
}

impl LossWeights {
    pub fn loss(&self, report: &evacsim_core::MetricsReport, window: f64) -> Option<f64> {
        window_loss(report, window, self.alpha, self.beta, self.t_ref).ok()
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_interval() -> f64 {
    60.0
}
fn default_max_sim_time() -> f64 {
    172_800.0
}

/// One experiment, read from a single JSON file.
///
/// Numbered scenarios pick up `phase`, `mode`, `window` and
/// `min_sav_per_category` from here; custom scenario specs are used as
/// written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSource,
    #[serde(default)]
    pub population: PopulationSource,
    /// Rescale the population table to this many persons.
    #[serde(default)]
    pub population_scale: Option<u64>,
    pub scenarios: Vec<ScenarioEntry>,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub window: Option<f64>,
    /// Candidate windows for the sweep command.
    #[serde(default)]
    pub windows: Vec<f64>,
    #[serde(default)]
    pub closures: Option<ClosureSource>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_interval")]
    pub interval: f64,
    #[serde(default = "default_max_sim_time")]
    pub max_sim_time: f64,
    #[serde(default)]
    pub min_sav_per_category: Option<u64>,
    #[serde(default)]
    pub engine: EngineParams,
    /// Post-disaster departure curve; omitted means it scales with each
    /// scenario's window.
    #[serde(default)]
    pub scurve: Option<SCurveParams>,
    /// Field overrides per vehicle class name.
    #[serde(default)]
    pub classes: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub loss: LossWeights,
}

impl ExperimentConfig {
    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(CliError::config)?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(CliError::config)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let NetworkSource::File(p) = &mut self.network {
            fix(p);
        }
        if let Some(ClosureSource::File(p)) = &mut self.closures {
            fix(p);
        }
        fix(&mut self.out_dir);
    }

    /// Checks invariants and loads every referenced input.
    pub fn resolve(&self) -> Result<Experiment, CliError> {
        self.resolve_inner().map_err(CliError::config)
    }

    fn resolve_inner(&self) -> Result<Experiment> {
        ensure!(!self.scenarios.is_empty(), "config needs at least one scenario");
        ensure!(!self.seeds.is_empty(), "config needs at least one seed");
        ensure!(self.interval > 0.0 && self.interval.is_finite(), "interval must be positive");
        ensure!(self.max_sim_time > 0.0, "max_sim_time must be positive");
        self.engine.validate()?;

        let mut network = match &self.network {
            NetworkSource::File(p) => {
                ensure!(p.exists(), "network file {} does not exist", p.display());
                RoadNetwork::load_file(p)?
            }
            NetworkSource::Grid { grid } => generate_grid(grid)?,
        };
        if let Some(src) = &self.closures {
            let closures = match src {
                ClosureSource::File(p) => {
                    ensure!(p.exists(), "closure file {} does not exist", p.display());
                    let text = std::fs::read_to_string(p)?;
                    serde_json::from_str::<Vec<Closure>>(&text)
                        .with_context(|| format!("parsing closures {}", p.display()))?
                }
                ClosureSource::Inline(v) => v.clone(),
            };
            network = network.with_closures(closures)?;
        }
        network.ensure_runnable()?;

        let base_pop = match &self.population {
            PopulationSource::Named(n) if n == "sumter" => PopulationTable::sumter_county(),
            PopulationSource::Named(n) => bail!("unknown population table `{n}`"),
            PopulationSource::Table(t) => t.clone(),
        };
        base_pop.validate()?;
        let reference = base_pop == PopulationTable::sumter_county() && self.population_scale.is_none();
        let population = match self.population_scale {
            Some(n) => base_pop.scaled(n),
            None => base_pop,
        };

        let mut scenarios = Vec::with_capacity(self.scenarios.len());
        for entry in &self.scenarios {
            let sc = match entry {
                ScenarioEntry::Number(k) => {
                    // Published served counts only make sense for the reference table.
                    let mut sc = if reference { ScenarioSpec::published(*k)? } else { ScenarioSpec::standard(*k)? };
                    sc.phase = self.phase;
                    sc.mode = self.mode;
                    if let Some(w) = self.window {
                        sc.window = w;
                    }
                    if let Some(m) = self.min_sav_per_category {
                        sc.min_sav_per_category = m;
                    }
                    sc
                }
                ScenarioEntry::Custom(sc) => sc.clone(),
            };
            sc.validate()?;
            if let (Phase::Post, Some(p)) = (sc.phase, self.scurve) {
                ensure!(
                    p.sigma > 0.0 && p.mu > 0.0 && p.mu < sc.window,
                    "departure curve mu={} sigma={} does not fit scenario `{}` window {}",
                    p.mu,
                    p.sigma,
                    sc.id,
                    sc.window
                );
            }
            ensure!(
                !scenarios.iter().any(|s: &ScenarioSpec| s.id == sc.id),
                "duplicate scenario id `{}`",
                sc.id
            );
            scenarios.push(sc);
        }

        let mut classes = ClassRegistry::default();
        for (name, patch) in &self.classes {
            classes.apply_override(name, patch)?;
        }

        Ok(Experiment {
            network,
            population,
            scenarios,
            seeds: self.seeds.clone(),
            classes,
            engine: self.engine.clone(),
            scurve: self.scurve,
            interval: self.interval,
            max_sim_time: self.max_sim_time,
            loss: self.loss,
            out_dir: self.out_dir.clone(),
        })
    }
}

/// A validated config with every input loaded.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub network: RoadNetwork,
    pub population: PopulationTable,
    pub scenarios: Vec<ScenarioSpec>,
    pub seeds: Vec<u64>,
    pub classes: ClassRegistry,
    pub engine: EngineParams,
    pub scurve: Option<SCurveParams>,
    pub interval: f64,
    pub max_sim_time: f64,
    pub loss: LossWeights,
    pub out_dir: PathBuf,
}

impl Experiment {
    /// Departure curve for `sc`: the configured one, else mean at a quarter
    /// of the window with sd a twelfth of it.
    pub fn scurve_for(&self, sc: &ScenarioSpec) -> SCurveParams {
        self.scurve.unwrap_or(SCurveParams { mu: sc.window / 4.0, sigma: sc.window / 12.0 })
    }

    pub fn with_mode(&self, mode: Mode) -> Experiment {
        let mut e = self.clone();
        for sc in &mut e.scenarios {
            sc.mode = mode;
        }
        e
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub scenarios: Option<Vec<u32>>,
    pub phase: Option<Phase>,
    pub mode: Option<Mode>,
    pub window: Option<f64>,
    pub windows: Option<Vec<f64>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.scenarios {
            cfg.scenarios = v.iter().copied().map(ScenarioEntry::Number).collect();
        }
        if let Some(v) = self.phase {
            cfg.phase = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.window {
            cfg.window = Some(v);
        }
        if let Some(v) = &self.windows {
            cfg.windows = v.clone();
        }
    }
}
