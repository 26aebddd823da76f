//! Run quality against the exact posterior: grid oracle, histograms, KL
//! divergence, mode occupancy and autocorrelation.

mod autocorr;
mod grid;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use autocorr::{autocorrelation_function, integrated_autocorrelation, IatEstimate, MIN_SERIES};
pub use grid::{pairwise_sum, GridDensity, GridSpec};

use crate::error::{Error, Result};
use crate::model::{self, Dataset, LikelihoodScale, ModelSpec};
use crate::sampler::Trace;

/// Default KL smoothing, as a fraction of total mass added to every cell.
pub const DEFAULT_SMOOTHING: f64 = 1e-10;
/// Default radius for mode occupancy.
pub const DEFAULT_MODE_RADIUS: f64 = 0.75;

/// The two posterior modes of the benchmark data, `(0, 2)` and `(2, −2)`.
pub fn benchmark_modes() -> Vec<Vec<f64>> {
    vec![vec![0.0, 2.0], vec![2.0, -2.0]]
}

/// Exact posterior normalized over the cells of `grid`.
///
/// Log-densities are evaluated at cell centres and exponentiated relative to
/// their maximum. An empty dataset yields the prior.
pub fn grid_posterior(
    model: &ModelSpec,
    data: &Dataset,
    grid: &GridSpec,
    scale: LikelihoodScale,
) -> Result<GridDensity> {
    model.validate()?;
    grid.validate()?;
    if grid.dims() != 2 {
        return Err(Error::usage("grid_posterior needs a 2-D grid"));
    }
    let n2 = grid.bins[1];
    let logs: Vec<f64> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let theta = [grid.center(0, cell / n2), grid.center(1, cell % n2)];
            model::log_unnorm_posterior(&theta, data, model, scale).unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let (argmax, max) = logs
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::diagnostic("posterior has no finite mass on the grid"))?;
    let (i, j) = (argmax / n2, argmax % n2);
    if i == 0 || j == 0 || i + 1 == grid.bins[0] || j + 1 == n2 {
        let c = [grid.center(0, i), grid.center(1, j)];
        return Err(Error::diagnostic(format!(
            "posterior peak lies on the grid boundary at ({}, {}); the grid does not cover the posterior mass",
            c[0], c[1]
        )));
    }
    let weights: Vec<f64> = logs
        .iter()
        .map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 })
        .collect();
    let total = pairwise_sum(&weights);
    GridDensity::new(
        grid.clone(),
        weights.into_iter().map(|w| w / total).collect(),
    )
}

/// Empirical cell frequencies of a 2-D trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// Fraction of all counted samples in each cell.
    pub density: GridDensity,
    /// Fraction of counted samples outside the grid.
    pub overflow: f64,
    pub samples: usize,
}

/// Histogram of all replicas' rows with `step >= burn_in`.
pub fn histogram2d(trace: &Trace, grid: &GridSpec, burn_in: u64) -> Result<Histogram> {
    grid.validate()?;
    if grid.dims() != 2 || trace.dim() != 2 {
        return Err(Error::usage("histogram2d needs a 2-D trace and grid"));
    }
    let mut counts = vec![0u64; grid.n_cells()];
    let (mut inside, mut outside) = (0u64, 0u64);
    for row in trace.rows().filter(|r| r.step >= burn_in) {
        match grid.locate(row.theta) {
            Some(c) => {
                counts[c] += 1;
                inside += 1;
            }
            None => outside += 1,
        }
    }
    let total = inside + outside;
    if total == 0 {
        return Err(Error::usage("trace has no samples after burn-in"));
    }
    let masses = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(Histogram {
        density: GridDensity::new(grid.clone(), masses)?,
        overflow: outside as f64 / total as f64,
        samples: total as usize,
    })
}

/// `KL(p ‖ q)` after normalizing `p` and smoothing `q`.
///
/// `q` is normalized, `smoothing` is added to every cell and the result is
/// renormalized, so the divergence stays finite where `q` vanishes.
pub fn kl_divergence(p: &GridDensity, q: &GridDensity, smoothing: f64) -> Result<f64> {
    if !p.grid.matches(&q.grid) {
        return Err(Error::usage(
            "KL divergence needs densities on the same grid",
        ));
    }
    if !(smoothing.is_finite() && smoothing > 0.0) {
        return Err(Error::usage(format!(
            "smoothing must be > 0, got {smoothing}"
        )));
    }
    let p = p.normalized()?;
    let q = q.normalized()?;
    let norm = 1.0 + smoothing * q.masses.len() as f64;
    let terms: Vec<f64> = p
        .masses
        .iter()
        .zip(&q.masses)
        .map(|(&pi, &qi)| {
            if pi > 0.0 {
                pi * (pi * norm / (qi + smoothing)).ln()
            } else {
                0.0
            }
        })
        .collect();
    Ok(pairwise_sum(&terms).max(0.0))
}

/// Fraction of post-burn-in samples within `radius` of each mode.
pub fn mode_occupancy<M: AsRef<[f64]>>(
    trace: &Trace,
    modes: &[M],
    radius: f64,
    burn_in: u64,
) -> Result<Vec<f64>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::usage(format!(
            "mode radius must be > 0, got {radius}"
        )));
    }
    for (a, m) in modes.iter().enumerate() {
        if m.as_ref().len() != trace.dim() {
            return Err(Error::usage("mode dimension differs from trace dimension"));
        }
        if modes[..a].iter().any(|o| o.as_ref() == m.as_ref()) {
            return Err(Error::usage("modes must be distinct"));
        }
    }
    let r2 = radius * radius;
    let mut hits = vec![0u64; modes.len()];
    let mut n = 0u64;
    for row in trace.rows().filter(|r| r.step >= burn_in) {
        n += 1;
        for (h, m) in hits.iter_mut().zip(modes) {
            let d2: f64 = row
                .theta
                .iter()
                .zip(m.as_ref())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 <= r2 {
                *h += 1;
            }
        }
    }
    if n == 0 {
        return Ok(vec![0.0; modes.len()]);
    }
    Ok(hits.into_iter().map(|h| h as f64 / n as f64).collect())
}

/// Per-replica autocorrelation estimates and their averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutocorrSummary {
    pub per_replica: Vec<IatEstimate>,
    pub iat: f64,
    pub ess: f64,
    pub degenerate: bool,
}

/// Integrated autocorrelation time of one component, replica by replica.
pub fn autocorrelation(trace: &Trace, component: usize, burn_in: u64) -> Result<AutocorrSummary> {
    if component >= trace.dim() {
        return Err(Error::usage(format!(
            "component {component} out of range for dimension {}",
            trace.dim()
        )));
    }
    let per_replica = (0..trace.replicas().max(1))
        .map(|r| integrated_autocorrelation(&trace.series(r, component, burn_in)))
        .collect::<Result<Vec<_>>>()?;
    let k = per_replica.len() as f64;
    Ok(AutocorrSummary {
        iat: per_replica.iter().map(|e| e.iat).sum::<f64>() / k,
        ess: per_replica.iter().map(|e| e.ess).sum::<f64>() / k,
        degenerate: per_replica.iter().any(|e| e.degenerate),
        per_replica,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsOptions {
    #[serde(default = "benchmark_modes")]
    pub modes: Vec<Vec<f64>>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    /// Extra burn-in applied on top of what the trace already excludes.
    #[serde(default)]
    pub burn_in: u64,
}

fn default_radius() -> f64 {
    DEFAULT_MODE_RADIUS
}

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            modes: benchmark_modes(),
            radius: DEFAULT_MODE_RADIUS,
            smoothing: DEFAULT_SMOOTHING,
            burn_in: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub kl: f64,
    pub occupancies: Vec<f64>,
    pub iat: Vec<f64>,
    pub ess: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub samples: usize,
    pub replicas: usize,
    pub overflow: f64,
    pub divergence_events: usize,
}

/// Full report of a trace against an oracle density.
pub fn diagnose(
    trace: &Trace,
    oracle: &GridDensity,
    opts: &DiagnosticsOptions,
) -> Result<DiagnosticsReport> {
    let hist = histogram2d(trace, &oracle.grid, opts.burn_in)?;
    let kl = kl_divergence(&hist.density, oracle, opts.smoothing)?;
    let occupancies = mode_occupancy(trace, &opts.modes, opts.radius, opts.burn_in)?;
    let mut iat = Vec::new();
    let mut ess = Vec::new();
    let mut degenerate = Vec::new();
    for c in 0..trace.dim() {
        let s = autocorrelation(trace, c, opts.burn_in)?;
        iat.push(s.iat);
        ess.push(s.ess);
        degenerate.push(s.degenerate);
    }
    Ok(DiagnosticsReport {
        kl,
        occupancies,
        iat,
        ess,
        degenerate,
        samples: hist.samples,
        replicas: trace.replicas(),
        overflow: hist.overflow,
        divergence_events: trace
            .meta
            .as_ref()
            .map_or(0, |m| usize::from(m.divergence.is_some())),
    })
}
