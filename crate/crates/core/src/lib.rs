//! Stochastic gradient Langevin sampling with skew-symmetric (non-reversible)
//! drift, replica coupling and grid-based diagnostics for a two-parameter
//! Gaussian mixture posterior.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod rng;
pub mod sampler;

pub use diagnostics::{DiagnosticsOptions, DiagnosticsReport, GridDensity, GridSpec};
pub use dynamics::{EnergyGradient, ForceKind, ForceSpec, NoiseSpec};
pub use error::{Error, Result};
pub use model::{Dataset, GenerationMode, LikelihoodScale, ModelSpec, ParamVector};
pub use sampler::{BatchKind, BatchPolicy, ReplicaConfig, RunConfig, StepSchedule, Trace};
