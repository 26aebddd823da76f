//! Run orchestration: step schedules, minibatches, single-chain skew SGLD and
//! the replicated data-flow sampler.
//!
//! Single chain: each step draws a minibatch, forms the stochastic energy
//! gradient `−(∇log p + λ Σ_batch ∇log P)`, maps it through the configured
//! [`ForceSpec`] and applies one Langevin update.
//!
//! Replicated: each step draws a batch of size `d = Σ d_r`, hands replica `r`
//! a contiguous piece of `d_r` indices, computes every replica's gradient from
//! its own piece and couples them on a ring through [`replica_force`]. All
//! gradients of a step are evaluated from the previous step's states, so
//! stepping replicas in parallel gives the same trace as stepping them in
//! order.
//!
//! [`replica_force`]: crate::dynamics::replica_force

mod batch;
mod schedule;
mod trace;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use batch::{next_batch, BatchKind, BatchPolicy, Batcher};
pub use schedule::{solve_schedule, StepSchedule};
pub use trace::{DivergenceEvent, Trace, TraceMeta, TraceRow};

use crate::dynamics::{self, ForceKind, ForceSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::model::{self, Dataset, LikelihoodScale, ModelSpec, BENCHMARK_DIM};
use crate::rng::{self, RandomStream};

/// Per-replica batch sizes `d_r`; the replica count is their number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaConfig {
    pub sizes: Vec<usize>,
}

impl ReplicaConfig {
    /// `count` replicas each using `size` data per step.
    pub fn uniform(count: usize, size: usize) -> Self {
        Self {
            sizes: vec![size; count],
        }
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

fn default_temperature() -> f64 {
    1.0
}

fn default_thinning() -> u64 {
    1
}

fn default_initial() -> Vec<f64> {
    vec![0.0; BENCHMARK_DIM]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub force: ForceSpec,
    pub schedule: StepSchedule,
    pub batch: BatchPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<ReplicaConfig>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub steps: u64,
    /// Defaults to 10% of `steps`.
    #[serde(default)]
    pub burn_in: Option<u64>,
    #[serde(default = "default_thinning")]
    pub thinning: u64,
    pub seed: u64,
    #[serde(default)]
    pub scale: LikelihoodScale,
    /// Starting state shared by all replicas; defaults to the prior mean.
    #[serde(default = "default_initial")]
    pub initial: Vec<f64>,
    /// Step replicas on the rayon pool. Does not change results.
    #[serde(default)]
    pub parallel: bool,
}

impl RunConfig {
    /// A single-chain config with the defaults used throughout the benchmark.
    pub fn new(
        model: ModelSpec,
        force: ForceSpec,
        schedule: StepSchedule,
        batch: BatchPolicy,
        steps: u64,
        seed: u64,
    ) -> Self {
        Self {
            model,
            force,
            schedule,
            batch,
            replicas: None,
            temperature: 1.0,
            steps,
            burn_in: None,
            thinning: 1,
            seed,
            scale: LikelihoodScale::default(),
            initial: default_initial(),
            parallel: false,
        }
    }

    pub fn replica_count(&self) -> usize {
        self.replicas.as_ref().map_or(1, ReplicaConfig::count)
    }

    pub fn effective_burn_in(&self) -> u64 {
        self.burn_in.unwrap_or(self.steps / 10)
    }

    /// Number of rows a complete run records.
    pub fn expected_rows(&self) -> usize {
        ((self.steps - self.effective_burn_in()) / self.thinning) as usize * self.replica_count()
    }

    fn batch_sizes(&self) -> Vec<usize> {
        match &self.replicas {
            Some(r) => r.sizes.clone(),
            None => vec![self.batch.size],
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        if data.is_empty() {
            return Err(Error::config("sampling requires a non-empty dataset"));
        }
        self.batch.validate(data.len())?;
        if self.steps == 0 {
            return Err(Error::config("steps must be >= 1"));
        }
        if self.effective_burn_in() >= self.steps {
            return Err(Error::config(format!(
                "burn_in ({}) must be < steps ({})",
                self.effective_burn_in(),
                self.steps
            )));
        }
        if self.thinning == 0 {
            return Err(Error::config("thinning must be >= 1"));
        }
        NoiseSpec::new(self.temperature)?;
        if self.initial.len() != BENCHMARK_DIM || self.initial.iter().any(|t| !t.is_finite()) {
            return Err(Error::config(format!(
                "initial state must have {BENCHMARK_DIM} finite components"
            )));
        }
        self.force.validate(BENCHMARK_DIM)?;
        if let Some(r) = &self.replicas {
            if r.sizes.is_empty() || r.sizes.contains(&0) {
                return Err(Error::config(
                    "replica batch sizes must be non-empty and >= 1",
                ));
            }
            if r.total() != self.batch.size {
                return Err(Error::config(format!(
                    "replica batch sizes sum to {} but batch size is {}",
                    r.total(),
                    self.batch.size
                )));
            }
            if r.count() > 1 && self.force.kind != ForceKind::Plain {
                return Err(Error::config(
                    "replicated runs couple replicas through the ring force; set force.kind = plain \
                     and use force.gamma for the coupling degree",
                ));
            }
        }
        Ok(())
    }
}

/// Runs a single chain (replica count 1).
pub fn run_single(config: &RunConfig, data: &Dataset) -> Result<Trace> {
    if config.replica_count() != 1 {
        return Err(Error::usage(format!(
            "run_single needs exactly one replica, config has {}",
            config.replica_count()
        )));
    }
    run_chains(config, data)
}

/// Runs the ring-coupled replicated sampler (replica count >= 2).
pub fn run_replicated(config: &RunConfig, data: &Dataset) -> Result<Trace> {
    if config.replica_count() < 2 {
        return Err(Error::usage("run_replicated needs at least two replicas"));
    }
    run_chains(config, data)
}

/// Dispatches on the replica count.
pub fn run(config: &RunConfig, data: &Dataset) -> Result<Trace> {
    run_chains(config, data)
}

struct Replica {
    theta: Vec<f64>,
    prev: Vec<f64>,
    rng: RandomStream,
    failed: bool,
}

fn for_each_pair<A, B, F>(parallel: bool, a: &mut [A], b: &mut [B], f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut A, &mut B) + Sync + Send,
{
    if parallel {
        a.par_iter_mut()
            .zip(b.par_iter_mut())
            .enumerate()
            .for_each(|(k, (x, y))| f(k, x, y));
    } else {
        a.iter_mut()
            .zip(b.iter_mut())
            .enumerate()
            .for_each(|(k, (x, y))| f(k, x, y));
    }
}

fn run_chains(config: &RunConfig, data: &Dataset) -> Result<Trace> {
    config.validate(data)?;
    let start = Instant::now();
    let dim = BENCHMARK_DIM;
    let sizes = config.batch_sizes();
    let r = sizes.len();
    let noise = NoiseSpec::new(config.temperature)?;
    let points = data.points();
    let lambdas: Vec<f64> = sizes
        .iter()
        .map(|&s| config.scale.weight(data.len(), s))
        .collect();
    let offsets: Vec<usize> = std::iter::once(0)
        .chain(sizes.iter().scan(0, |acc, &s| {
            *acc += s;
            Some(*acc)
        }))
        .collect();

    let mut batch_rng = RandomStream::new(config.seed, rng::BATCH_STREAM);
    let mut batcher = Batcher::new(config.batch, data.len())?;
    let mut replicas: Vec<Replica> = (0..r)
        .map(|k| Replica {
            theta: config.initial.clone(),
            prev: config.initial.clone(),
            rng: RandomStream::new(config.seed, rng::noise_stream(k)),
            failed: false,
        })
        .collect();
    let mut grads = vec![vec![0.0; dim]; r];
    let mut forces = vec![vec![0.0; dim]; r];

    let burn_in = config.effective_burn_in();
    let mut trace = Trace::with_capacity(dim, r, config.expected_rows());
    let mut divergence = None;

    for i in 0..config.steps {
        let dt = config.schedule.dt(i);
        let batch = batcher.next_batch(&mut batch_rng);

        for_each_pair(config.parallel, &mut replicas, &mut grads, |k, rep, g| {
            let piece = &batch[offsets[k]..offsets[k + 1]];
            model::energy_gradient_into(&rep.theta, points, piece, lambdas[k], &config.model, g);
        });

        if r == 1 {
            config.force.force_into(&grads[0], &mut forces[0]);
        } else {
            dynamics::replica_force_into(&grads, config.force.gamma, &mut forces);
        }

        for_each_pair(config.parallel, &mut replicas, &mut forces, |_, rep, a| {
            rep.prev.copy_from_slice(&rep.theta);
            rep.failed =
                dynamics::langevin_update(&mut rep.theta, a, dt, &noise, &mut rep.rng).is_err();
        });

        if let Some(k) = replicas.iter().position(|rep| rep.failed) {
            divergence = Some(DivergenceEvent {
                step: i,
                replica: k,
                dt,
                last_finite_state: replicas[k].prev.clone(),
            });
            break;
        }

        if i >= burn_in && (i - burn_in + 1).is_multiple_of(config.thinning) {
            for (k, rep) in replicas.iter().enumerate() {
                trace.push(i, k, dt, &rep.theta);
            }
        }
    }

    trace.meta = Some(TraceMeta {
        config: config.clone(),
        dim,
        replicas: r,
        divergence,
        wall_time_secs: start.elapsed().as_secs_f64(),
    });
    Ok(trace)
}
