//! Likelihood processes `γ = exp(−∫B dV − ½∫|B|² ds)` and `γ⁻¹`, kept in log
//! space, and a Monte-Carlo check of `E γ_T = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CoefficientValues, ModelError, ModelSpec};
use crate::noise::{ObservationDecomposition, SamplePath, TimeGrid};
use crate::rng::{Purpose, StreamKey};
use crate::scalar::Scalar;
use crate::simulator::{mean_se, simulate_from_key, SchemeConfig, SimError};

#[derive(Debug, Error)]
pub enum GirsanovError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("signal path has {found} values, expected {expected}")]
    PathLength { expected: usize, found: usize },
}

/// `log γ` per node. `γ` and `γ⁻¹` are only materialized on request, and
/// only where the exponential is finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LikelihoodPath<S> {
    pub log_gamma: Vec<S>,
    /// Some node's `γ` or `γ⁻¹` overflows; those values stay in log space.
    pub overflow: bool,
}

impl<S: Scalar> LikelihoodPath<S> {
    fn from_log(log_gamma: Vec<S>) -> Self {
        let overflow = log_gamma.iter().any(|&l| representable(l).is_none() || representable(-l).is_none());
        Self { log_gamma, overflow }
    }

    /// `γ` at node `i`, or `None` when it is not a finite positive float.
    pub fn gamma(&self, i: usize) -> Option<S> {
        representable(self.log_gamma[i])
    }

    pub fn gamma_inv(&self, i: usize) -> Option<S> {
        representable(-self.log_gamma[i])
    }

    pub fn log_gamma_inv(&self) -> Vec<S> {
        self.log_gamma.iter().map(|&l| -l).collect()
    }
}

fn representable<S: Scalar>(log: S) -> Option<S> {
    let g = log.exp();
    (g.is_finite() && g > S::zero()).then_some(g)
}

fn obs_drift_at<S: Scalar>(
    spec: &ModelSpec<S>,
    t: S,
    x: &[S],
    y: &[S],
    z: &mut [S],
    c: &mut CoefficientValues<S>,
) -> Result<(), ModelError> {
    z[..x.len()].copy_from_slice(x);
    z[x.len()..].copy_from_slice(y);
    spec.eval_coefficients_into(t, z, c)
}

/// `log γ` along a simulated path: per step `−B·ΔV − ½|B|²Δt` with `B` at the
/// step start.
pub fn compute_gamma<S: Scalar>(spec: &ModelSpec<S>, path: &SamplePath<S>) -> Result<LikelihoodPath<S>, GirsanovError> {
    let grid = path.grid;
    let dt = grid.dt();
    let half = S::lit(0.5);
    let mut z = vec![S::zero(); spec.dim_z()];
    let mut c = CoefficientValues::for_spec(spec);
    let mut log = Vec::with_capacity(grid.n_steps + 1);
    let mut acc = S::zero();
    log.push(acc);
    for i in 0..grid.n_steps {
        obs_drift_at(spec, grid.node(i), path.x_at(i), path.y_at(i), &mut z, &mut c)?;
        let dv = path.noise.dv_step(i);
        acc += -crate::scalar::dot(&c.obs_b, dv) - half * crate::scalar::norm_sq(&c.obs_b) * dt;
        log.push(acc);
    }
    Ok(LikelihoodPath::from_log(log))
}

/// `log γ⁻¹` along a signal path (flat, node-major) against an observation:
/// per step `B·ΔṼ − ½|B|²Δt`, the exact exponential step of `dγ⁻¹ = γ⁻¹ B dṼ`
/// with `B` frozen at the step start.
pub fn evolve_gamma_inv<S: Scalar>(spec: &ModelSpec<S>, x_path: &[S], obs: &ObservationDecomposition<S>) -> Result<Vec<S>, GirsanovError> {
    let grid: TimeGrid<S> = obs.grid;
    let d = spec.dim_x;
    let expected = (grid.n_steps + 1) * d;
    if x_path.len() != expected {
        return Err(GirsanovError::PathLength { expected, found: x_path.len() });
    }
    let dt = grid.dt();
    let half = S::lit(0.5);
    let mut z = vec![S::zero(); spec.dim_z()];
    let mut c = CoefficientValues::for_spec(spec);
    let mut log = Vec::with_capacity(grid.n_steps + 1);
    let mut acc = S::zero();
    log.push(acc);
    for i in 0..grid.n_steps {
        obs_drift_at(spec, grid.node(i), &x_path[i * d..(i + 1) * d], obs.y_at(i), &mut z, &mut c)?;
        acc += crate::scalar::dot(&c.obs_b, obs.dvtilde_step(i)) - half * crate::scalar::norm_sq(&c.obs_b) * dt;
        log.push(acc);
    }
    Ok(log)
}

pub const HEAVY_TAIL_KURTOSIS: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub model: String,
    pub n_paths: usize,
    pub n_steps: usize,
    /// Sample mean of `γ_T`.
    pub mean: f64,
    pub std_error: f64,
    /// Sample kurtosis of `γ_T` (non-excess); 0 for a degenerate sample.
    pub kurtosis: f64,
    pub heavy_tail: bool,
    /// Mean and standard error of the one-step factors `γ_{t+Δt}/γ_t`, pooled.
    pub step_factor_mean: f64,
    pub step_factor_std_error: f64,
    /// Paths whose `γ` left the floating-point range.
    pub overflowed: usize,
    /// `|mean − 1| ≤ 3 SE` for both `γ_T` and the step factors.
    pub pass: bool,
}

fn within(mean: f64, se: f64) -> bool {
    (mean - 1.0).abs() <= 3.0 * se
}

/// Monte-Carlo `E γ_T` under the physical measure over `n_paths` simulated
/// paths, each with its own noise stream.
pub fn verify_girsanov<S: Scalar>(
    spec: &ModelSpec<S>,
    n_paths: usize,
    scheme: &SchemeConfig,
    seed: u64,
) -> Result<GirsanovReport, GirsanovError> {
    let grid = scheme.grid(spec.horizon).map_err(SimError::from)?;
    struct PathStats {
        gamma_t: f64,
        overflow: bool,
        factor_sum: f64,
        factor_sq: f64,
    }
    let stats: Vec<PathStats> = (0..n_paths as u64)
        .into_par_iter()
        .map(|j| -> Result<PathStats, GirsanovError> {
            let path = simulate_from_key(spec, &grid, StreamKey::new(seed, Purpose::SystemNoise, j, 0), scheme)?;
            let lik = compute_gamma(spec, &path)?;
            let (mut factor_sum, mut factor_sq) = (0.0, 0.0);
            for w in lik.log_gamma.windows(2) {
                let f = (w[1] - w[0]).as_f64().exp();
                factor_sum += f;
                factor_sq += f * f;
            }
            let last = *lik.log_gamma.last().expect("nonempty");
            Ok(PathStats { gamma_t: last.as_f64().exp(), overflow: lik.overflow, factor_sum, factor_sq })
        })
        .collect::<Result<_, _>>()?;
    let (mean, std_error) = mean_se(stats.iter().map(|s| s.gamma_t));
    let m = stats.len() as f64;
    let (m2, m4) = stats.iter().fold((0.0, 0.0), |(a, b), s| {
        let d = s.gamma_t - mean;
        (a + d * d, b + d * d * d * d)
    });
    let kurtosis = if m2 > 0.0 { m * m4 / (m2 * m2) } else { 0.0 };
    let n_factors = m * grid.n_steps as f64;
    let f_sum: f64 = stats.iter().map(|s| s.factor_sum).sum();
    let f_sq: f64 = stats.iter().map(|s| s.factor_sq).sum();
    let step_factor_mean = f_sum / n_factors;
    let f_var = ((f_sq - n_factors * step_factor_mean * step_factor_mean) / (n_factors - 1.0)).max(0.0);
    let step_factor_std_error = (f_var / n_factors).sqrt();
    let overflowed = stats.iter().filter(|s| s.overflow).count();
    let pass = within(mean, std_error) && within(step_factor_mean, step_factor_std_error) && overflowed == 0;
    Ok(GirsanovReport {
        model: spec.name.clone(),
        n_paths,
        n_steps: grid.n_steps,
        mean,
        std_error,
        kurtosis,
        heavy_tail: kurtosis > HEAVY_TAIL_KURTOSIS,
        step_factor_mean,
        step_factor_std_error,
        overflowed,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{zoo, VectorField};
    use crate::noise::{decompose_observation, sample_noise, DecompositionMode};
    use crate::simulator::simulate_system;
    use std::collections::BTreeMap;

    fn model(name: &str, params: &[(&str, f64)]) -> ModelSpec<f64> {
        let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        zoo::build(name, &p).unwrap()
    }

    fn path(spec: &ModelSpec<f64>, n: usize, p: u64) -> SamplePath<f64> {
        let grid = TimeGrid::new(spec.horizon, n).unwrap();
        simulate_from_key(spec, &grid, StreamKey::new(7, Purpose::SystemNoise, p, 0), &SchemeConfig::new(n)).unwrap()
    }

    #[test]
    fn zero_drift_gives_unit_likelihood() {
        let spec = model("ou", &[("h", 0.0)]);
        let p = path(&spec, 100, 0);
        let lik = compute_gamma(&spec, &p).unwrap();
        assert!(lik.log_gamma.iter().all(|&l| l == 0.0));
        let obs = decompose_observation(&spec, &p.grid, &p.y, DecompositionMode::Oracle(&[])).unwrap();
        assert!(evolve_gamma_inv(&spec, &p.x, &obs).unwrap().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn constant_drift_closed_form() {
        let c = 0.7;
        let mut spec = model("ou", &[]);
        spec.obs_drift = VectorField::constant(vec![c], 2);
        let p = path(&spec, 200, 1);
        let lik = compute_gamma(&spec, &p).unwrap();
        let obs = decompose_observation(&spec, &p.grid, &p.y, DecompositionMode::Oracle(&[])).unwrap();
        let inv = evolve_gamma_inv(&spec, &p.x, &obs).unwrap();
        let (mut v, mut vt) = (0.0, 0.0);
        for i in 0..=200 {
            let t = p.grid.node(i);
            let expected = (-c * v - 0.5 * c * c * t).exp();
            assert!((lik.gamma(i).unwrap() - expected).abs() <= 1e-12 * expected.max(1.0));
            let expected_inv = (c * vt - 0.5 * c * c * t).exp();
            assert!((inv[i].exp() - expected_inv).abs() <= 1e-12 * expected_inv.max(1.0));
            assert!((lik.gamma(i).unwrap() * inv[i].exp() - 1.0).abs() < 1e-12);
            if i < 200 {
                v += p.noise.dv_step(i)[0];
                vt += obs.dvtilde_step(i)[0];
            }
        }
    }

    #[test]
    fn reversal_matches_inverse() {
        let spec = model("bounded_obs", &[("rho", 0.3)]);
        for k in 0..5 {
            let p = path(&spec, 500, k);
            let lik = compute_gamma(&spec, &p).unwrap();
            let obs = decompose_observation(&spec, &p.grid, &p.y, DecompositionMode::Oracle(&[])).unwrap();
            let inv = evolve_gamma_inv(&spec, &p.x, &obs).unwrap();
            for (a, b) in lik.log_gamma_inv().iter().zip(&inv) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(lik.log_gamma.iter().all(|l| l.exp() > 0.0));
        }
    }

    #[test]
    fn overflow_is_flagged_not_materialized() {
        let lik = LikelihoodPath::from_log(vec![0.0, 700.0]);
        assert!(!lik.overflow);
        assert!(lik.gamma_inv(1).unwrap() > 0.0);
        let lik = LikelihoodPath::from_log(vec![0.0, 800.0]);
        assert!(lik.overflow);
        assert_eq!((lik.gamma(1), lik.gamma_inv(1)), (None, None));
    }

    #[test]
    fn verify_zero_drift_is_exact() {
        let spec = model("ou", &[("h", 0.0)]);
        let r = verify_girsanov(&spec, 200, &SchemeConfig::new(20), 3).unwrap();
        assert_eq!((r.mean, r.std_error), (1.0, 0.0));
        assert!(r.pass && !r.heavy_tail);
    }

    #[test]
    fn verify_bounded_and_linear_drift() {
        for (name, params) in [("bounded_obs", vec![]), ("linear_obs", vec![])] {
            let spec = model(name, &params);
            let r = verify_girsanov(&spec, 20_000, &SchemeConfig::new(50), 11).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn wrong_path_length_is_rejected() {
        let spec = model("ou", &[]);
        let p = path(&spec, 10, 0);
        let obs = decompose_observation(&spec, &p.grid, &p.y, DecompositionMode::Oracle(&[])).unwrap();
        assert!(matches!(evolve_gamma_inv(&spec, &p.x[1..], &obs), Err(GirsanovError::PathLength { .. })));
        let noise = sample_noise(&spec, &p.grid, StreamKey::new(1, Purpose::SystemNoise, 0, 0));
        let q = simulate_system(&spec, &noise, &[0.0], &[0.0], &SchemeConfig::new(10)).unwrap();
        assert_eq!(compute_gamma(&spec, &q).unwrap().log_gamma.len(), 11);
    }
}
