use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use skewld::diagnostics::{self, DiagnosticsOptions, DiagnosticsReport, GridDensity};
use skewld::model::Dataset;
use skewld::sampler::{self, RunConfig, Trace, TraceMeta};
use skewld::{Error, Result};

use crate::config::{DataSource, ExperimentConfig};

/// How a successful command finished.
#[derive(Debug, PartialEq, Eq)]
pub enum Completion {
    Done,
    /// A run stopped at a non-finite state; its partial outputs were written.
    Diverged,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize to JSON");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

#[derive(Serialize)]
struct DataMeta<'a> {
    source: &'a DataSource,
    count: usize,
    config: &'a ExperimentConfig,
}

pub fn generate_data(cfg: &ExperimentConfig) -> Result<Completion> {
    cfg.validate_common()?;
    let DataSource::Generate(_) = cfg.require_data()? else {
        return Err(Error::Config(
            "generate-data needs a `data.generate` recipe".into(),
        ));
    };
    let data = cfg.dataset()?;
    create_dir(&cfg.output_dir)?;
    data.save_csv(&cfg.output_dir.join("data.csv"))?;
    write_json(
        &cfg.output_dir.join("data.json"),
        &DataMeta {
            source: cfg.require_data()?,
            count: data.len(),
            config: cfg,
        },
    )?;
    Ok(Completion::Done)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    #[serde(flatten)]
    trace: &'a TraceMeta,
    rows: usize,
    data_points: usize,
    experiment: &'a ExperimentConfig,
}

/// Runs `run` on `data` and writes `trace.csv` and `trace.json` into `dir`.
fn run_into(cfg: &ExperimentConfig, run: &RunConfig, data: &Dataset, dir: &Path) -> Result<Trace> {
    let trace = sampler::run(run, data)?;
    create_dir(dir)?;
    trace.save_csv(&dir.join("trace.csv"))?;
    let meta = trace.meta.as_ref().expect("runs attach metadata");
    write_json(
        &dir.join("trace.json"),
        &RunMeta {
            trace: meta,
            rows: trace.len(),
            data_points: data.len(),
            experiment: cfg,
        },
    )?;
    Ok(trace)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Completion> {
    cfg.validate_common()?;
    let data = cfg.dataset()?;
    let run = cfg.run_config(None, None)?;
    run.validate(&data)?;
    let trace = run_into(cfg, &run, &data, &cfg.output_dir)?;
    Ok(if trace.diverged() {
        Completion::Diverged
    } else {
        Completion::Done
    })
}

#[derive(Serialize)]
struct OracleMeta<'a> {
    scale: skewld::LikelihoodScale,
    data_points: usize,
    experiment: &'a ExperimentConfig,
}

fn compute_oracle(cfg: &ExperimentConfig, data: &Dataset, dir: &Path) -> Result<GridDensity> {
    let oracle = diagnostics::grid_posterior(&cfg.model, data, &cfg.grid, cfg.scale())?;
    create_dir(dir)?;
    oracle.save_csv(&dir.join("oracle.csv"))?;
    write_json(
        &dir.join("oracle.json"),
        &OracleMeta {
            scale: cfg.scale(),
            data_points: data.len(),
            experiment: cfg,
        },
    )?;
    Ok(oracle)
}

pub fn oracle(cfg: &ExperimentConfig) -> Result<Completion> {
    cfg.validate_common()?;
    let data = cfg.dataset()?;
    compute_oracle(cfg, &data, &cfg.output_dir)?;
    Ok(Completion::Done)
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a DiagnosticsReport,
    options: &'a DiagnosticsOptions,
    trace: &'a Path,
    oracle: &'a Path,
}

/// Loads a trace and, when present, the run metadata written beside it.
fn load_trace(path: &Path) -> Result<Trace> {
    let mut trace = Trace::load_csv(path)?;
    let sidecar = path.with_extension("json");
    if sidecar.is_file() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: TraceMeta =
            serde_json::from_str(&text).map_err(|e| Error::parse(&sidecar, e.to_string()))?;
        trace.meta = Some(meta);
    }
    Ok(trace)
}

pub fn diagnose(cfg: &ExperimentConfig) -> Result<Completion> {
    cfg.validate_common()?;
    let (trace_path, oracle_path) = (cfg.trace_path(), cfg.oracle_path());
    require_file(&trace_path, "trace file")?;
    require_file(&oracle_path, "oracle file")?;
    let trace = load_trace(&trace_path)?;
    let oracle = GridDensity::load_csv(&oracle_path)?;
    if !oracle.grid.matches(&cfg.grid) {
        return Err(Error::Usage(format!(
            "oracle {} was computed on a different grid from the configured one",
            oracle_path.display()
        )));
    }
    let options = cfg.diagnostics.options();
    let report = diagnostics::diagnose(&trace, &oracle, &options)?;
    create_dir(&cfg.output_dir)?;
    write_json(
        &cfg.output_dir.join("report.json"),
        &ReportFile {
            report: &report,
            options: &options,
            trace: &trace_path,
            oracle: &oracle_path,
        },
    )?;
    Ok(Completion::Done)
}

#[derive(Clone, Debug, Serialize)]
struct CompareRow {
    gamma: f64,
    seed: u64,
    status: &'static str,
    directory: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<DiagnosticsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct GammaSummary {
    gamma: f64,
    runs: usize,
    completed: usize,
    median_kl: Option<f64>,
    median_occupancies: Vec<Option<f64>>,
    median_iat: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct CompareFile<'a> {
    summaries: &'a [GammaSummary],
    rows: &'a [CompareRow],
    experiment: &'a ExperimentConfig,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn sub_run(
    cfg: &ExperimentConfig,
    data: &Dataset,
    oracle: &GridDensity,
    gamma: f64,
    seed: u64,
    dir: &Path,
) -> Result<(bool, DiagnosticsReport)> {
    let run = cfg.run_config(Some(gamma), Some(seed))?;
    let trace = run_into(cfg, &run, data, dir)?;
    let options = cfg.diagnostics.options();
    let report = diagnostics::diagnose(&trace, oracle, &options)?;
    write_json(
        &dir.join("report.json"),
        &ReportFile {
            report: &report,
            options: &options,
            trace: &dir.join("trace.csv"),
            oracle: &cfg.output_dir.join("oracle.csv"),
        },
    )?;
    Ok((trace.diverged(), report))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_csv(rows: &[CompareRow], modes: usize) -> String {
    let mut out = String::from("gamma,seed,status,kl");
    for k in 1..=modes {
        let _ = write!(out, ",occupancy{k}");
    }
    out.push_str(",iat1,iat2,ess1,ess2,error\n");
    for r in rows {
        let _ = write!(out, "{},{},{}", r.gamma, r.seed, r.status);
        let rep = r.report.as_ref();
        let _ = write!(out, ",{}", opt(rep.map(|x| x.kl)));
        for k in 0..modes {
            let _ = write!(out, ",{}", opt(rep.map(|x| x.occupancies[k])));
        }
        for c in 0..4 {
            let v = rep.and_then(|x| {
                if c < 2 {
                    x.iat.get(c)
                } else {
                    x.ess.get(c - 2)
                }
                .copied()
            });
            let _ = write!(out, ",{}", opt(v));
        }
        // errors are free text; keep the CSV rectangular
        let err = r
            .error
            .as_deref()
            .unwrap_or("")
            .replace([',', '\n', '"'], " ");
        let _ = writeln!(out, ",{err}");
    }
    out
}

pub fn compare(cfg: &ExperimentConfig) -> Result<Completion> {
    cfg.validate_common()?;
    let cmp = cfg.validate_compare()?;
    let data = cfg.dataset()?;
    for &g in &cmp.gammas {
        cfg.run_config(Some(g), None)?.validate(&data)?;
    }
    let modes = cfg.diagnostics.options().modes.len();
    let oracle = compute_oracle(cfg, &data, &cfg.output_dir)?;

    let mut rows = Vec::new();
    for &gamma in &cmp.gammas {
        for &seed in &cmp.seeds {
            let dir = cfg
                .output_dir
                .join("runs")
                .join(format!("gamma-{gamma}-seed-{seed}"));
            let row = match sub_run(cfg, &data, &oracle, gamma, seed, &dir) {
                Ok((diverged, report)) => CompareRow {
                    gamma,
                    seed,
                    status: if diverged { "diverged" } else { "ok" },
                    directory: dir,
                    report: Some(report),
                    error: None,
                },
                Err(e) => CompareRow {
                    gamma,
                    seed,
                    status: "failed",
                    directory: dir,
                    report: None,
                    error: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }

    let summaries: Vec<GammaSummary> = cmp
        .gammas
        .iter()
        .map(|&gamma| {
            let done: Vec<&DiagnosticsReport> = rows
                .iter()
                .filter(|r| r.gamma == gamma && r.status == "ok")
                .filter_map(|r| r.report.as_ref())
                .collect();
            GammaSummary {
                gamma,
                runs: cmp.seeds.len(),
                completed: done.len(),
                median_kl: median(done.iter().map(|r| r.kl).collect()),
                median_occupancies: (0..modes)
                    .map(|k| median(done.iter().map(|r| r.occupancies[k]).collect()))
                    .collect(),
                median_iat: (0..2)
                    .map(|c| median(done.iter().map(|r| r.iat[c]).collect()))
                    .collect(),
            }
        })
        .collect();

    let csv_path = cfg.output_dir.join("summary.csv");
    std::fs::write(&csv_path, summary_csv(&rows, modes)).map_err(|e| Error::io(&csv_path, e))?;
    write_json(
        &cfg.output_dir.join("summary.json"),
        &CompareFile {
            summaries: &summaries,
            rows: &rows,
            experiment: cfg,
        },
    )?;
    Ok(Completion::Done)
}
