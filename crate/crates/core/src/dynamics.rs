//! Drift forces and the Euler–Maruyama Langevin update.
//!
//! The overdamped dynamics `dθ = A(θ) dt + √(2T) dW` keeps `P ∝ exp(−E)`
//! stationary whenever the probability current `J = (A − T∂)P` is
//! divergence-free. The plain force `A = −∇E` makes `J` vanish (detailed
//! balance). The skew forces here add `−γ S ∇E` with `S` antisymmetric, which
//! leaves a circulating, divergence-free current: the stationary law is
//! unchanged but the dynamics are no longer reversible.
//!
//! The replica force couples `R` copies of the system through their
//! neighbours' gradients on a ring, `A_r = −g_r + γ (g_{r+1} − g_{r−1})`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::diagnostics::GridSpec;
use crate::error::{Error, Result};
use crate::model::{self, Dataset, LikelihoodScale, ModelSpec, ParamVector};
use crate::rng::RandomStream;

/// `∇E(θ)`, the gradient of the energy (negative log target).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyGradient(pub Vec<f64>);

impl Deref for EnergyGradient {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for EnergyGradient {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        self
    }
}

impl From<Vec<f64>> for EnergyGradient {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<ParamVector> for EnergyGradient {
    fn from(v: ParamVector) -> Self {
        Self(v.into_inner())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceKind {
    /// `A = −∇E`.
    #[default]
    Plain,
    /// Two-dimensional rotation: `A₁ = −g₁ − γg₂`, `A₂ = −g₂ + γg₁`.
    Rotation2d,
    /// `A_k = −g_k + γ(g_{k−1} − g_{k+1})` with periodic indices; needs N ≥ 3.
    Circular,
    /// `A = −g − γ S g` for a caller-supplied antisymmetric `S`.
    AntisymmetricMatrix,
}

/// Which drift to use and its degree of detailed-balance violation `γ`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSpec {
    pub kind: ForceKind,
    #[serde(default)]
    pub gamma: f64,
    /// Row-major `N×N` matrix, required iff `kind` is `antisymmetric-matrix`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
}

impl ForceSpec {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn rotation2d(gamma: f64) -> Self {
        Self {
            kind: ForceKind::Rotation2d,
            gamma,
            matrix: None,
        }
    }

    pub fn circular(gamma: f64) -> Self {
        Self {
            kind: ForceKind::Circular,
            gamma,
            matrix: None,
        }
    }

    pub fn antisymmetric(gamma: f64, matrix: Vec<f64>) -> Self {
        Self {
            kind: ForceKind::AntisymmetricMatrix,
            gamma,
            matrix: Some(matrix),
        }
    }

    /// Checks the spec against a state dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        match (self.kind, &self.matrix) {
            (ForceKind::AntisymmetricMatrix, None) => {
                return Err(Error::config(
                    "antisymmetric-matrix force requires `matrix`",
                ))
            }
            (ForceKind::AntisymmetricMatrix, Some(s)) => check_antisymmetric(s, dim)?,
            (_, Some(_)) => {
                return Err(Error::config(format!(
                    "`matrix` is only valid for antisymmetric-matrix force, not {:?}",
                    self.kind
                )))
            }
            (ForceKind::Rotation2d, None) if dim != 2 => {
                return Err(Error::config(format!(
                    "rotation2d force needs N = 2, got N = {dim}"
                )))
            }
            (ForceKind::Circular, None) => check_circular_dim(dim)?,
            _ => {}
        }
        Ok(())
    }

    /// Writes the force for energy gradient `g` into `out`. Assumes [`validate`](Self::validate) passed.
    pub fn force_into(&self, g: &[f64], out: &mut [f64]) {
        if self.gamma == 0.0 {
            plain_into(g, out);
            return;
        }
        match self.kind {
            ForceKind::Plain => plain_into(g, out),
            ForceKind::Rotation2d => rotation2d_into(g, self.gamma, out),
            ForceKind::Circular => circular_into(g, self.gamma, out),
            ForceKind::AntisymmetricMatrix => {
                matrix_into(g, self.gamma, self.matrix.as_deref().unwrap_or(&[]), out)
            }
        }
    }

    pub fn force(&self, g: &[f64]) -> Result<ParamVector> {
        self.validate(g.len())?;
        let mut out = vec![0.0; g.len()];
        self.force_into(g, &mut out);
        Ok(ParamVector(out))
    }
}

fn check_antisymmetric(s: &[f64], dim: usize) -> Result<()> {
    if s.len() != dim * dim {
        return Err(Error::config(format!(
            "matrix has {} entries, expected {dim}×{dim}",
            s.len()
        )));
    }
    for i in 0..dim {
        for j in 0..dim {
            if s[i * dim + j] != -s[j * dim + i] {
                return Err(Error::config(format!(
                    "matrix is not antisymmetric at ({i}, {j}): {} vs {}",
                    s[i * dim + j],
                    s[j * dim + i]
                )));
            }
        }
    }
    Ok(())
}

fn check_circular_dim(dim: usize) -> Result<()> {
    if dim < 3 {
        return Err(Error::config(format!(
            "circular force needs N >= 3 (for N = 2 the periodic neighbours coincide and the skew \
             term vanishes); use rotation2d instead, got N = {dim}"
        )));
    }
    Ok(())
}

#[inline]
fn plain_into(g: &[f64], out: &mut [f64]) {
    for (o, gi) in out.iter_mut().zip(g) {
        *o = -gi;
    }
}

#[inline]
fn rotation2d_into(g: &[f64], gamma: f64, out: &mut [f64]) {
    out[0] = -g[0] - gamma * g[1];
    out[1] = -g[1] + gamma * g[0];
}

fn circular_into(g: &[f64], gamma: f64, out: &mut [f64]) {
    let n = g.len();
    for k in 0..n {
        let prev = g[(k + n - 1) % n];
        let next = g[(k + 1) % n];
        out[k] = -g[k] + gamma * (prev - next);
    }
}

fn matrix_into(g: &[f64], gamma: f64, s: &[f64], out: &mut [f64]) {
    let n = g.len();
    for i in 0..n {
        let sg: f64 = (0..n).map(|j| s[i * n + j] * g[j]).sum();
        out[i] = -g[i] - gamma * sg;
    }
}

/// Equilibrium force `−∇E`.
pub fn plain_force(g: &[f64]) -> ParamVector {
    let mut out = vec![0.0; g.len()];
    plain_into(g, &mut out);
    ParamVector(out)
}

/// Two-dimensional skew force `(−g₁ − γg₂, −g₂ + γg₁)`.
pub fn skew_force_2d(g: &[f64], gamma: f64) -> Result<ParamVector> {
    if g.len() != 2 {
        return Err(Error::usage(format!(
            "skew_force_2d needs N = 2, got N = {}",
            g.len()
        )));
    }
    ForceSpec::rotation2d(gamma).force(g)
}

/// Circular skew force with periodic neighbours.
pub fn skew_force_circular(g: &[f64], gamma: f64) -> Result<ParamVector> {
    ForceSpec::circular(gamma).force(g)
}

/// `−g − γ S g` for antisymmetric `S` given row-major.
pub fn skew_force_matrix(g: &[f64], gamma: f64, s: &[f64]) -> Result<ParamVector> {
    ForceSpec::antisymmetric(gamma, s.to_vec()).force(g)
}

/// Ring-coupled replica forces `A_r = −g_r + γ(g_{r+1} − g_{r−1})`.
pub fn replica_force<G: AsRef<[f64]>>(grads: &[G], gamma: f64) -> Result<Vec<ParamVector>> {
    let r = grads.len();
    if r < 2 {
        return Err(Error::usage(format!(
            "replica force needs R >= 2, got R = {r}"
        )));
    }
    let dim = grads[0].as_ref().len();
    if grads.iter().any(|g| g.as_ref().len() != dim) {
        return Err(Error::usage("replica gradients have mismatched dimensions"));
    }
    let mut out = vec![ParamVector::zeros(dim); r];
    replica_force_into(grads, gamma, &mut out);
    Ok(out)
}

pub(crate) fn replica_force_into<G: AsRef<[f64]>, O: AsMut<[f64]>>(
    grads: &[G],
    gamma: f64,
    out: &mut [O],
) {
    let r = grads.len();
    for (i, o) in out.iter_mut().enumerate() {
        let o = o.as_mut();
        let g = grads[i].as_ref();
        if gamma == 0.0 {
            plain_into(g, o);
            continue;
        }
        let next = grads[(i + 1) % r].as_ref();
        let prev = grads[(i + r - 1) % r].as_ref();
        for k in 0..g.len() {
            o[k] = -g[k] + gamma * (next[k] - prev[k]);
        }
    }
}

impl AsMut<[f64]> for ParamVector {
    fn as_mut(&mut self) -> &mut [f64] {
        self
    }
}

/// Strength of the injected noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    temperature: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { temperature: 1.0 }
    }
}

impl NoiseSpec {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::config(format!(
                "temperature must be > 0, got {temperature}"
            )));
        }
        Ok(Self { temperature })
    }

    /// Zero temperature: the update degenerates to a deterministic Euler step.
    /// Normal draws are still consumed so random streams stay aligned.
    pub fn noiseless() -> Self {
        Self { temperature: 0.0 }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

/// In-place Euler–Maruyama update `θ ← θ + dt·A + √(2T·dt)·ξ`.
///
/// On a non-finite result `theta` holds the offending state and
/// [`Error::NonFinite`] is returned.
#[inline]
pub fn langevin_update(
    theta: &mut [f64],
    force: &[f64],
    dt: f64,
    noise: &NoiseSpec,
    rng: &mut RandomStream,
) -> Result<()> {
    let amp = (2.0 * noise.temperature * dt).sqrt();
    let mut finite = true;
    for (t, a) in theta.iter_mut().zip(force) {
        *t += dt * a + amp * rng.standard_normal();
        finite &= t.is_finite();
    }
    if finite {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// One Langevin step from `theta` under `force`.
pub fn langevin_step(
    theta: &[f64],
    force: &[f64],
    dt: f64,
    noise: &NoiseSpec,
    rng: &mut RandomStream,
) -> Result<ParamVector> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::usage(format!("dt must be > 0, got {dt}")));
    }
    if theta.len() != force.len() {
        return Err(Error::usage("state and force dimensions differ"));
    }
    if force.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut next = theta.to_vec();
    langevin_update(&mut next, force, dt, noise, rng)?;
    Ok(ParamVector(next))
}

/// A differentiable energy `E(θ)`; the target density is `∝ exp(−E)`.
pub trait Energy {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient_into(&self, theta: &[f64], out: &mut [f64]);

    fn gradient(&self, theta: &[f64]) -> EnergyGradient {
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(theta, &mut out);
        EnergyGradient(out)
    }
}

/// `E(θ) = ½ Σᵢ aᵢ θᵢ²`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticEnergy {
    pub precisions: Vec<f64>,
}

impl QuadraticEnergy {
    pub fn new(precisions: Vec<f64>) -> Self {
        Self { precisions }
    }
}

impl Energy for QuadraticEnergy {
    fn dim(&self) -> usize {
        self.precisions.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        0.5 * self
            .precisions
            .iter()
            .zip(theta)
            .map(|(a, t)| a * t * t)
            .sum::<f64>()
    }

    fn gradient_into(&self, theta: &[f64], out: &mut [f64]) {
        for ((o, a), t) in out.iter_mut().zip(&self.precisions).zip(theta) {
            *o = a * t;
        }
    }
}

/// Negative log posterior of the benchmark model on its full dataset.
#[derive(Clone, Debug)]
pub struct PosteriorEnergy<'a> {
    pub model: ModelSpec,
    pub data: &'a Dataset,
    pub scale: LikelihoodScale,
}

impl Energy for PosteriorEnergy<'_> {
    fn dim(&self) -> usize {
        model::BENCHMARK_DIM
    }

    fn value(&self, theta: &[f64]) -> f64 {
        -model::log_unnorm_posterior(theta, self.data, &self.model, self.scale)
            .expect("benchmark energy is 2-dimensional")
    }

    fn gradient_into(&self, theta: &[f64], out: &mut [f64]) {
        let all: Vec<usize> = (0..self.data.len()).collect();
        let lambda = if self.data.is_empty() {
            0.0
        } else {
            self.scale.full_weight(self.data.len())
        };
        model::energy_gradient_into(theta, self.data.points(), &all, lambda, &self.model, out);
    }
}

/// Maximum normalized divergence of the stationary current on a 2-D grid.
///
/// At each cell centre the current is `J = (A + T∇E) P` with `P = exp(−E)`
/// and `T = 1`, using `force` to map `(θ, ∇E)` to the drift. The divergence
/// is taken with central differences at interior nodes and reported as
/// `max |∇·J| / (max |J| / h)` with `h` the larger cell width. A current that
/// is identically zero reports 0.
pub fn divergence_check<F, E>(force: F, energy: &E, grid: &GridSpec) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
    E: Energy + ?Sized,
{
    grid.validate()?;
    if grid.dims() != 2 || energy.dim() != 2 {
        return Err(Error::usage(
            "divergence_check supports 2-D grids and energies only",
        ));
    }
    let (n1, n2) = (grid.bins[0], grid.bins[1]);
    if n1 < 3 || n2 < 3 {
        return Err(Error::usage(
            "divergence_check needs at least 3 cells per dimension",
        ));
    }
    let (h1, h2) = (grid.width(0), grid.width(1));
    let mut j1 = vec![0.0; n1 * n2];
    let mut j2 = vec![0.0; n1 * n2];
    let mut g = vec![0.0; 2];
    let mut max_j: f64 = 0.0;
    for i in 0..n1 {
        for k in 0..n2 {
            let theta = [grid.center(0, i), grid.center(1, k)];
            energy.gradient_into(&theta, &mut g);
            let a = force(&theta, &g);
            let p = (-energy.value(&theta)).exp();
            let idx = i * n2 + k;
            j1[idx] = (a[0] + g[0]) * p;
            j2[idx] = (a[1] + g[1]) * p;
            max_j = max_j.max(j1[idx].abs()).max(j2[idx].abs());
        }
    }
    if max_j == 0.0 {
        return Ok(0.0);
    }
    let mut max_div: f64 = 0.0;
    for i in 1..n1 - 1 {
        for k in 1..n2 - 1 {
            let d1 = (j1[(i + 1) * n2 + k] - j1[(i - 1) * n2 + k]) / (2.0 * h1);
            let d2 = (j2[i * n2 + k + 1] - j2[i * n2 + k - 1]) / (2.0 * h2);
            max_div = max_div.max((d1 + d2).abs());
        }
    }
    Ok(max_div * h1.max(h2) / max_j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn added_drift_dot(a: &[f64], g: &[f64]) -> f64 {
        let b: Vec<f64> = a.iter().zip(g).map(|(x, y)| x + y).collect();
        dot(&b, g)
    }

    #[test]
    fn rotation_example() {
        assert_eq!(skew_force_2d(&[1.0, 0.0], 1.0).unwrap().0, vec![-1.0, 1.0]);
        assert_eq!(skew_force_2d(&[0.3, -0.7], 0.0).unwrap().0, vec![-0.3, 0.7]);
        assert!(matches!(
            skew_force_2d(&[1.0, 2.0, 3.0], 1.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn circular_example() {
        let a = skew_force_circular(&[1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(a.0, vec![0.0, -4.0, -2.0]);
        let a = skew_force_circular(&[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(a.0, vec![-1.0, -2.0, -3.0]);
    }

    #[test]
    fn circular_rejects_two_dimensions() {
        let err = skew_force_circular(&[1.0, 2.0], 1.0).unwrap_err();
        assert!(err.to_string().contains("rotation2d"), "{err}");
    }

    #[test]
    fn matrix_examples() {
        let rot = [0.0, 1.0, -1.0, 0.0];
        let g = [0.4, -1.3];
        assert_eq!(
            skew_force_matrix(&g, 2.5, &rot).unwrap(),
            skew_force_2d(&g, 2.5).unwrap()
        );
        assert_eq!(
            skew_force_matrix(&g, 2.5, &[0.0; 4]).unwrap(),
            plain_force(&g)
        );
        assert!(matches!(
            skew_force_matrix(&g, 1.0, &[0.0, 1.0, 1.0, 0.0]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            skew_force_matrix(&g, 1.0, &[1.0, 1.0, -1.0, 0.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gamma_zero_reduces_to_plain_exactly() {
        let g = [0.123_456_789, -9.87, 3.3];
        let plain = plain_force(&g);
        let s3 = vec![0.0, 1.0, 2.0, -1.0, 0.0, 3.0, -2.0, -3.0, 0.0];
        assert_eq!(skew_force_circular(&g, 0.0).unwrap(), plain);
        assert_eq!(skew_force_matrix(&g, 0.0, &s3).unwrap(), plain);
        let g2 = [0.1, 0.2];
        assert_eq!(skew_force_2d(&g2, 0.0).unwrap(), plain_force(&g2));
    }

    #[test]
    fn replica_examples() {
        let g = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]];
        let a = replica_force(&g, 1.0).unwrap();
        assert_eq!(a[0].0, vec![-1.0, 1.0]);
        assert_eq!(a[1].0, vec![-1.0, -1.0]);
        assert_eq!(a[2].0, vec![1.0, -1.0]);

        // two replicas: neighbours coincide and the coupling cancels
        let g = vec![vec![0.3, -0.2], vec![1.5, 2.5]];
        let a = replica_force(&g, 5.0).unwrap();
        assert_eq!(a[0].0, vec![-0.3, 0.2]);
        assert_eq!(a[1].0, vec![-1.5, -2.5]);

        assert!(matches!(
            replica_force(&[vec![1.0]], 1.0),
            Err(Error::Usage(_))
        ));
        assert!(replica_force(&[vec![1.0], vec![1.0, 2.0]], 1.0).is_err());
    }

    #[test]
    fn euler_step_without_noise() {
        let mut rng = RandomStream::new(1, 1);
        let next = langevin_step(
            &[0.0, 0.0],
            &[1.0, 2.0],
            0.1,
            &NoiseSpec::noiseless(),
            &mut rng,
        )
        .unwrap();
        assert!((next[0] - 0.1).abs() < 1e-15 && (next[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn step_is_deterministic_given_stream() {
        let noise = NoiseSpec::default();
        let a = langevin_step(
            &[0.5, -0.5],
            &[1.0, 2.0],
            0.01,
            &noise,
            &mut RandomStream::new(9, 4),
        )
        .unwrap();
        let b = langevin_step(
            &[0.5, -0.5],
            &[1.0, 2.0],
            0.01,
            &noise,
            &mut RandomStream::new(9, 4),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_step_is_reported() {
        let mut rng = RandomStream::new(1, 1);
        let noise = NoiseSpec::default();
        assert!(matches!(
            langevin_step(&[0.0, 0.0], &[f64::INFINITY, 0.0], 0.1, &noise, &mut rng),
            Err(Error::NonFinite)
        ));
        assert!(matches!(
            langevin_step(&[f64::MAX, 0.0], &[f64::MAX, 0.0], 1.0, &noise, &mut rng),
            Err(Error::NonFinite)
        ));
        assert!(langevin_step(&[0.0], &[0.0], 0.0, &noise, &mut rng).is_err());
    }

    /// Ornstein–Uhlenbeck check on the prior: stationary variance 1/a.
    /// Pools independent chains so the 5% tolerance is several standard errors wide.
    #[test]
    fn prior_chain_variance_matches_ou() {
        let energy = QuadraticEnergy::new(vec![0.1, 0.1]);
        let noise = NoiseSpec::default();
        let (chains, steps, burn) = (32usize, 1_000_000usize, 100_000usize);
        let (mut s, mut n) = (0.0, 0usize);
        for c in 0..chains {
            let mut rng = RandomStream::new(77, c as u64);
            let mut theta = vec![0.0, 0.0];
            let mut g = vec![0.0; 2];
            for i in 0..steps {
                energy.gradient_into(&theta, &mut g);
                let a = [-g[0], -g[1]];
                langevin_update(&mut theta, &a, 0.001, &noise, &mut rng).unwrap();
                if i >= burn {
                    s += theta[0] * theta[0] + theta[1] * theta[1];
                    n += 2;
                }
            }
        }
        let var = s / n as f64;
        assert!((var - 10.0).abs() < 0.5, "variance {var}");
    }

    #[test]
    fn plain_current_vanishes() {
        let grid = GridSpec::new(vec![-2.5, -2.5], vec![2.5, 2.5], vec![101, 101]).unwrap();
        let energy = QuadraticEnergy::new(vec![1.0, 0.5]);
        let d = divergence_check(|_, g| plain_force(g).0, &energy, &grid).unwrap();
        assert!(d < 1e-6);
    }

    #[test]
    fn rotation_divergence_converges() {
        let energy = QuadraticEnergy::new(vec![1.0, 0.5]);
        let spec = ForceSpec::rotation2d(5.0);
        let mut prev = f64::INFINITY;
        for bins in [50, 100, 200] {
            let grid = GridSpec::new(vec![-2.5, -2.5], vec![2.5, 2.5], vec![bins, bins]).unwrap();
            let d = divergence_check(|_, g| spec.force(g).unwrap().0, &energy, &grid).unwrap();
            assert!(d < prev / 3.9, "bins {bins}: {d} vs {prev}");
            prev = d;
        }
    }

    #[test]
    fn symmetric_matrix_divergence_detected() {
        let energy = QuadraticEnergy::new(vec![1.0, 0.5]);
        let grid = GridSpec::new(vec![-2.5, -2.5], vec![2.5, 2.5], vec![100, 100]).unwrap();
        let bad = divergence_check(
            |_, g| vec![-g[0] - 5.0 * g[1], -g[1] - 5.0 * g[0]],
            &energy,
            &grid,
        )
        .unwrap();
        let good =
            divergence_check(|_, g| skew_force_2d(g, 5.0).unwrap().0, &energy, &grid).unwrap();
        assert!(bad > 1e-2, "{bad}");
        assert!(bad > 100.0 * good, "{bad} vs {good}");
    }

    #[test]
    fn posterior_energy_rotation_is_divergence_free() {
        let spec = ModelSpec::benchmark();
        let data = model::generate_data(&[0.0, 2.0], 10, &spec, model::GenerationMode::Mixture, 1)
            .unwrap();
        let energy = PosteriorEnergy {
            model: spec,
            data: &data,
            scale: LikelihoodScale::Average,
        };
        let force = ForceSpec::rotation2d(2.0);
        let coarse = GridSpec::new(vec![-2.0, -4.0], vec![4.0, 4.0], vec![120, 160]).unwrap();
        let fine = GridSpec::new(vec![-2.0, -4.0], vec![4.0, 4.0], vec![240, 320]).unwrap();
        let dc = divergence_check(|_, g| force.force(g).unwrap().0, &energy, &coarse).unwrap();
        let df = divergence_check(|_, g| force.force(g).unwrap().0, &energy, &fine).unwrap();
        assert!(df < dc / 3.5, "{dc} -> {df}");
    }

    #[test]
    fn spec_validation() {
        assert!(ForceSpec::rotation2d(-1.0).validate(2).is_err());
        assert!(ForceSpec::rotation2d(1.0).validate(3).is_err());
        assert!(ForceSpec::circular(1.0).validate(2).is_err());
        assert!(ForceSpec::circular(1.0).validate(3).is_ok());
        let mut s = ForceSpec::plain();
        s.matrix = Some(vec![0.0; 4]);
        assert!(s.validate(2).is_err());
        let json = r#"{"kind":"antisymmetric-matrix","gamma":2.0,"matrix":[0,1,-1,0]}"#;
        let parsed: ForceSpec = serde_json::from_str(json).unwrap();
        assert!(parsed.validate(2).is_ok());
        assert!(serde_json::from_str::<ForceSpec>(r#"{"kind":"plain","gama":1}"#).is_err());
    }

    fn random_vec(rng: &mut RandomStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    #[test]
    fn orthogonality_on_random_inputs() {
        let mut rng = RandomStream::new(2024, 0);
        for _ in 0..100 {
            for gamma in [2.0, 5.0] {
                let g = random_vec(&mut rng, 2);
                let a = skew_force_2d(&g, gamma).unwrap();
                assert!(added_drift_dot(&a, &g).abs() < 1e-12);
            }
            let g = random_vec(&mut rng, 5);
            let a = skew_force_circular(&g, 5.0).unwrap();
            assert!(added_drift_dot(&a, &g).abs() < 1e-12);

            let mut s = vec![0.0; 16];
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let v = rng.random_range(-2.0..2.0);
                    s[i * 4 + j] = v;
                    s[j * 4 + i] = -v;
                }
            }
            let g = random_vec(&mut rng, 4);
            let a = skew_force_matrix(&g, 1.0, &s).unwrap();
            assert!(added_drift_dot(&a, &g).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn replica_ring_telescopes(
            grads in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 2..12),
            gamma in 0.0f64..10.0,
        ) {
            let a = replica_force(&grads, gamma).unwrap();
            for k in 0..2 {
                let s: f64 = a.iter().zip(&grads).map(|(ar, gr)| ar[k] + gr[k]).sum();
                prop_assert!(s.abs() < 1e-12, "{}", s);
            }
        }
    }
}
