//! Integrated autocorrelation time by the initial positive sequence estimator.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum series length accepted by [`integrated_autocorrelation`].
pub const MIN_SERIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IatEstimate {
    pub iat: f64,
    pub ess: f64,
    pub samples: usize,
    /// Set for constant series; `iat` is then the series length.
    pub degenerate: bool,
}

/// Normalized autocorrelation `ρ(t)` for `t = 0..n`, via zero-padded FFT.
pub fn autocorrelation_function(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        return vec![0.0; n];
    }
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// `τ = −1 + 2 Σ_{m<M} (ρ(2m) + ρ(2m+1))`, truncated at the first
/// non-positive pair; `ESS = n / τ`.
pub fn integrated_autocorrelation(series: &[f64]) -> Result<IatEstimate> {
    let n = series.len();
    if n < MIN_SERIES {
        return Err(Error::usage(format!(
            "autocorrelation needs at least {MIN_SERIES} samples, got {n}"
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::usage(
            "autocorrelation series contains non-finite values",
        ));
    }
    let first = series[0];
    if series.iter().all(|&x| x == first) {
        return Ok(IatEstimate {
            iat: n as f64,
            ess: 1.0,
            samples: n,
            degenerate: true,
        });
    }
    let rho = autocorrelation_function(series);
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho[2 * m] + rho[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    let iat = tau.clamp(1.0, n as f64);
    Ok(IatEstimate {
        iat,
        ess: n as f64 / iat,
        samples: n,
        degenerate: false,
    })
}
