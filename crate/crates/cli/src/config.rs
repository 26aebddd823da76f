//! Experiment configuration: one JSON document drives every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skewld::diagnostics::DiagnosticsOptions;
use skewld::dynamics::ForceSpec;
use skewld::model::{self, Dataset, GenerationMode, LikelihoodScale, ModelSpec};
use skewld::sampler::{self, BatchPolicy, ReplicaConfig, RunConfig, StepSchedule};
use skewld::{Error, GridSpec, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default = "GridSpec::benchmark")]
    pub grid: GridSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Inline(Vec<f64>),
    File(PathBuf),
    Generate(GenerateRecipe),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRecipe {
    pub true_theta: Vec<f64>,
    pub count: usize,
    #[serde(default)]
    pub mode: GenerationMode,
    pub seed: u64,
}

/// Schedules as written in a config; `solved` is expanded against `run.steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSection {
    Constant {
        dt0: f64,
    },
    Polynomial {
        beta: f64,
        delta: f64,
        epsilon: f64,
    },
    Solved {
        dt_start: f64,
        dt_end: f64,
        epsilon: f64,
    },
}

fn default_temperature() -> f64 {
    1.0
}

fn default_thinning() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub force: ForceSpec,
    pub schedule: ScheduleSection,
    pub batch: BatchPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<ReplicaConfig>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default = "default_thinning")]
    pub thinning: u64,
    pub seed: u64,
    #[serde(default)]
    pub scale: LikelihoodScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub parallel: bool,
}

/// Diagnostics inputs and options; unset options take library defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Defaults to `<output_dir>/trace.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    /// Defaults to `<output_dir>/oracle.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub gammas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl DiagnosticsSection {
    pub fn options(&self) -> DiagnosticsOptions {
        let d = DiagnosticsOptions::default();
        DiagnosticsOptions {
            modes: self.modes.clone().unwrap_or(d.modes),
            radius: self.radius.unwrap_or(d.radius),
            smoothing: self.smoothing.unwrap_or(d.smoothing),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
        }
    }
}

impl ExperimentConfig {
    /// Reads and parses a config. Relative paths inside it are taken
    /// relative to the working directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "config file not found: {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    /// `--seed` for `generate-data`: the data generation seed.
    pub fn override_data_seed(&mut self, seed: u64) -> Result<()> {
        match &mut self.data {
            Some(DataSource::Generate(g)) => {
                g.seed = seed;
                Ok(())
            }
            _ => Err(Error::Config(
                "--seed needs a `data.generate` recipe".into(),
            )),
        }
    }

    /// `--seed` for sampling commands: the run seed.
    pub fn override_run_seed(&mut self, seed: u64) -> Result<()> {
        match &mut self.run {
            Some(run) => {
                run.seed = seed;
                Ok(())
            }
            None => Err(Error::Config("--seed needs a `run` section".into())),
        }
    }

    pub fn trace_path(&self) -> PathBuf {
        self.diagnostics
            .trace
            .clone()
            .unwrap_or_else(|| self.output_dir.join("trace.csv"))
    }

    pub fn oracle_path(&self) -> PathBuf {
        self.diagnostics
            .oracle
            .clone()
            .unwrap_or_else(|| self.output_dir.join("oracle.csv"))
    }

    pub fn validate_common(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.validate()?;
        let o = self.diagnostics.options();
        if !(o.radius.is_finite() && o.radius > 0.0) {
            return Err(Error::Config(format!(
                "diagnostics.radius must be > 0, got {}",
                o.radius
            )));
        }
        if !(o.smoothing.is_finite() && o.smoothing > 0.0) {
            return Err(Error::Config(format!(
                "diagnostics.smoothing must be > 0, got {}",
                o.smoothing
            )));
        }
        if o.modes.iter().any(|m| m.len() != model::BENCHMARK_DIM) {
            return Err(Error::Config("diagnostics.modes must be 2-D points".into()));
        }
        if let Some(DataSource::File(p)) = &self.data {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "dataset file not found: {}",
                    p.display()
                )));
            }
        }
        if let Some(DataSource::Generate(g)) = &self.data {
            if g.count == 0 {
                return Err(Error::Config("data.generate.count must be >= 1".into()));
            }
            if g.true_theta.len() != model::BENCHMARK_DIM
                || g.true_theta.iter().any(|t| !t.is_finite())
            {
                return Err(Error::Config(
                    "data.generate.true_theta must be 2 finite numbers".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn require_data(&self) -> Result<&DataSource> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::Config("config has no `data` section".into()))
    }

    pub fn require_run(&self) -> Result<&RunSection> {
        self.run
            .as_ref()
            .ok_or_else(|| Error::Config("config has no `run` section".into()))
    }

    /// Materializes the dataset; an empty inline list is the prior.
    pub fn dataset(&self) -> Result<Dataset> {
        match self.require_data()? {
            DataSource::Inline(points) if points.is_empty() => Ok(Dataset::empty()),
            DataSource::Inline(points) => Dataset::new(points.clone()),
            DataSource::File(p) => Dataset::load_csv(p),
            DataSource::Generate(g) => {
                model::generate_data(&g.true_theta, g.count, &self.model, g.mode, g.seed)
            }
        }
    }

    /// The run configuration with `gamma` and `seed` substituted when given.
    pub fn run_config(&self, gamma: Option<f64>, seed: Option<u64>) -> Result<RunConfig> {
        let run = self.require_run()?;
        let schedule = match run.schedule {
            ScheduleSection::Constant { dt0 } => StepSchedule::Constant { dt0 },
            ScheduleSection::Polynomial {
                beta,
                delta,
                epsilon,
            } => StepSchedule::Polynomial {
                beta,
                delta,
                epsilon,
            },
            ScheduleSection::Solved {
                dt_start,
                dt_end,
                epsilon,
            } => sampler::solve_schedule(dt_start, dt_end, run.steps, epsilon)?,
        };
        let mut force = run.force.clone();
        if let Some(g) = gamma {
            force.gamma = g;
        }
        let mut c = RunConfig::new(
            self.model,
            force,
            schedule,
            run.batch,
            run.steps,
            seed.unwrap_or(run.seed),
        );
        c.replicas = run.replicas.clone();
        c.temperature = run.temperature;
        c.burn_in = run.burn_in;
        c.thinning = run.thinning;
        c.scale = run.scale;
        if let Some(init) = &run.initial {
            c.initial = init.clone();
        }
        c.parallel = run.parallel;
        Ok(c)
    }

    /// Likelihood scaling used by the oracle; follows the run section.
    pub fn scale(&self) -> LikelihoodScale {
        self.run.as_ref().map(|r| r.scale).unwrap_or_default()
    }

    pub fn validate_compare(&self) -> Result<&CompareSection> {
        let cmp = self
            .compare
            .as_ref()
            .ok_or_else(|| Error::Config("config has no `compare` section".into()))?;
        if cmp.gammas.len() < 2 {
            return Err(Error::Config(
                "compare.gammas needs at least two values".into(),
            ));
        }
        if cmp.seeds.is_empty() {
            return Err(Error::Config("compare.seeds must not be empty".into()));
        }
        if let Some(g) = cmp.gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::Config(format!(
                "compare.gammas must be finite and >= 0, got {g}"
            )));
        }
        let run = self.require_run()?;
        let replicated = run.replicas.as_ref().is_some_and(|r| r.count() > 1);
        if !replicated && run.force.kind == skewld::ForceKind::Plain {
            return Err(Error::Config(
                "compare sweeps gamma, which a single chain with force.kind = plain ignores; choose a skew force kind"
                    .into(),
            ));
        }
        Ok(cmp)
    }
}
