use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size schedule `dtᵢ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        dt0: f64,
    },
    /// `dtᵢ = β (i + δ)^(−ε)`, a Robbins–Monro schedule for `ε ∈ (0.5, 1]`.
    Polynomial {
        beta: f64,
        delta: f64,
        epsilon: f64,
    },
}

impl StepSchedule {
    pub fn constant(dt0: f64) -> Result<Self> {
        let s = StepSchedule::Constant { dt0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { dt0 } => {
                if !(dt0.is_finite() && dt0 > 0.0) {
                    return Err(Error::config(format!(
                        "constant dt0 must be > 0, got {dt0}"
                    )));
                }
            }
            StepSchedule::Polynomial {
                beta,
                delta,
                epsilon,
            } => {
                if !(beta.is_finite() && beta > 0.0 && delta.is_finite() && delta > 0.0) {
                    return Err(Error::config(format!(
                        "polynomial schedule needs beta > 0 and delta > 0, got beta={beta}, delta={delta}"
                    )));
                }
                check_epsilon(epsilon)?;
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dt(&self, i: u64) -> f64 {
        match *self {
            StepSchedule::Constant { dt0 } => dt0,
            StepSchedule::Polynomial {
                beta,
                delta,
                epsilon,
            } => beta * (i as f64 + delta).powf(-epsilon),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.5 && epsilon <= 1.0) {
        return Err(Error::config(format!(
            "schedule exponent must lie in (0.5, 1], got {epsilon}"
        )));
    }
    Ok(())
}

/// Solves `β, δ` so that `dt₀ = dt_start` and `dt_steps = dt_end`.
///
/// From `β δ^(−ε) = dt_start` and `β (steps + δ)^(−ε) = dt_end`:
/// `δ = steps / ((dt_start/dt_end)^(1/ε) − 1)` and `β = dt_start δ^ε`.
pub fn solve_schedule(
    dt_start: f64,
    dt_end: f64,
    steps: u64,
    epsilon: f64,
) -> Result<StepSchedule> {
    check_epsilon(epsilon)?;
    if !(dt_end.is_finite() && dt_end > 0.0 && dt_start.is_finite() && dt_start > dt_end) {
        return Err(Error::config(format!(
            "schedule needs dt_start > dt_end > 0, got {dt_start} -> {dt_end} (use a constant schedule for equal steps)"
        )));
    }
    if steps == 0 {
        return Err(Error::config("schedule needs at least one step"));
    }
    let ratio = dt_start / dt_end;
    let delta = steps as f64 / (ratio.powf(1.0 / epsilon) - 1.0);
    let beta = dt_start * delta.powf(epsilon);
    let s = StepSchedule::Polynomial {
        beta,
        delta,
        epsilon,
    };
    s.validate()?;
    Ok(s)
}
