use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::coefficients::{MatrixField, VectorField};
use crate::model::ModelSpec;
use crate::noise::TimeGrid;
use crate::scalar::Scalar;

pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum KalmanError {
    #[error("model is not linear-Gaussian: {0}")]
    NotLinear(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("covariance lost positive semidefiniteness at node {node}")]
    NotPsd { node: usize },
}

/// `dX = AX dt + σ dW + ρ dV`, `dY = HX dt + dV`, `X₀ ~ N(m0, P0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub drift: Matrix<f64>,
    pub obs: Matrix<f64>,
    pub sigma: Matrix<f64>,
    pub rho: Matrix<f64>,
    pub m0: Vec<f64>,
    pub p0: Matrix<f64>,
}

fn to_f64<S: Scalar>(m: &Matrix<S>) -> Matrix<f64> {
    Matrix::from_rows(m.rows, m.cols, m.data.iter().map(|v| v.as_f64()).collect())
}

/// The `x`-block of an affine field with no offset and no `y` dependence.
fn linear_part<S: Scalar>(field: &VectorField<S>, d: usize, what: &str) -> Result<Matrix<f64>, KalmanError> {
    let VectorField::Affine { matrix, offset } = field else {
        return Err(KalmanError::NotLinear(format!("{what} is not affine")));
    };
    if offset.iter().any(|v| !v.is_zero()) {
        return Err(KalmanError::NotLinear(format!("{what} has an offset")));
    }
    let mut out = Matrix::zeros(matrix.rows, d);
    for r in 0..matrix.rows {
        for c in 0..matrix.cols {
            let v = matrix.get(r, c).as_f64();
            if c < d {
                out.set(r, c, v);
            } else if v != 0.0 {
                return Err(KalmanError::NotLinear(format!("{what} depends on the observation")));
            }
        }
    }
    Ok(out)
}

fn constant<S: Scalar>(field: &MatrixField<S>, what: &str) -> Result<Matrix<f64>, KalmanError> {
    field.as_constant().map(to_f64).ok_or_else(|| KalmanError::NotLinear(format!("{what} is state dependent")))
}

impl LinearModel {
    pub fn from_spec<S: Scalar>(spec: &ModelSpec<S>) -> Result<Self, KalmanError> {
        if !spec.eta.is_identically_zero() || !spec.xi.is_identically_zero() {
            return Err(KalmanError::NotLinear("model has jumps".into()));
        }
        let d = spec.dim_x;
        let mut p0 = Matrix::zeros(d, d);
        for (i, s) in spec.initial.x_std.iter().enumerate() {
            p0.set(i, i, s.as_f64() * s.as_f64());
        }
        Ok(Self {
            drift: linear_part(&spec.drift, d, "signal drift")?,
            obs: linear_part(&spec.obs_drift, d, "observation drift")?,
            sigma: constant(&spec.sigma, "sigma")?,
            rho: constant(&spec.rho, "rho")?,
            m0: spec.initial.x_mean.iter().map(|v| v.as_f64()).collect(),
            p0,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.rows
    }
}

/// Posterior mean and covariance at every node (flat, node-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalmanPath {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl KalmanPath {
    pub fn mean_at(&self, i: usize) -> &[f64] {
        &self.mean[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cov_at(&self, i: usize) -> Matrix<f64> {
        let n = self.dim * self.dim;
        Matrix::from_rows(self.dim, self.dim, self.cov[i * n..(i + 1) * n].to_vec())
    }
}

/// Correlated-noise Kalman–Bucy filter, explicit Euler on `grid`, driven by
/// the observation increments `dy` (flat, step-major).
pub fn kalman_bucy<S: Scalar>(model: &LinearModel, dy: &[S], grid: &TimeGrid<S>) -> Result<KalmanPath, KalmanError> {
    let d = model.dim();
    let dy_dim = model.obs.rows;
    let n = grid.n_steps;
    if dy.len() != n * dy_dim {
        return Err(KalmanError::Dimension(format!("expected {} observation increments, got {}", n * dy_dim, dy.len())));
    }
    if model.sigma.rows != d || model.rho.rows != d || model.rho.cols != dy_dim || model.m0.len() != d {
        return Err(KalmanError::Dimension("coefficient shapes disagree".into()));
    }
    let dt = grid.dt().as_f64();
    let a = &model.drift;
    let at = a.transpose();
    let ht = model.obs.transpose();
    let q = model.sigma.mul(&model.sigma.transpose()).add(&model.rho.mul(&model.rho.transpose()));
    let mut m = model.m0.clone();
    let mut p = model.p0.clone();
    p.symmetrize();
    let mut out = KalmanPath { dim: d, mean: m.clone(), cov: p.data.clone() };
    let mut innov = vec![0.0; dy_dim];
    let mut am = vec![0.0; d];
    let mut dm = vec![0.0; d];
    for i in 0..n {
        let gain = p.mul(&ht).add(&model.rho);
        model.obs.mul_vec_into(&m, &mut innov);
        for k in 0..dy_dim {
            innov[k] = dy[i * dy_dim + k].as_f64() - innov[k] * dt;
        }
        a.mul_vec_into(&m, &mut am);
        gain.mul_vec_into(&innov, &mut dm);
        for j in 0..d {
            m[j] += am[j] * dt + dm[j];
        }
        let dp = a.mul(&p).add(&p.mul(&at)).add(&q).sub(&gain.mul(&gain.transpose()));
        p = p.add(&dp.scale(dt));
        p.symmetrize();
        if p.cholesky(PSD_TOLERANCE).is_none() {
            return Err(KalmanError::NotPsd { node: i + 1 });
        }
        out.mean.extend_from_slice(&m);
        out.cov.extend_from_slice(&p.data);
    }
    Ok(out)
}

/// Fixed point of the scalar Riccati equation `0 = 2ap + s² + r² − (ph + r)²`.
pub fn stationary_variance(a: f64, sigma: f64, rho: f64, h: f64) -> f64 {
    if h == 0.0 {
        // 0 = 2ap + σ² (a < 0).
        return -(sigma * sigma) / (2.0 * a);
    }
    // h²p² + 2(rh − a)p − σ² = 0, positive root.
    let b = 2.0 * (rho * h - a);
    (-b + (b * b + 4.0 * h * h * sigma * sigma).sqrt()) / (2.0 * h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::zoo;
    use std::collections::BTreeMap;

    fn scalar(a: f64, sigma: f64, rho: f64, h: f64, p0: f64) -> LinearModel {
        LinearModel {
            drift: Matrix::scalar(a),
            obs: Matrix::scalar(h),
            sigma: Matrix::scalar(sigma),
            rho: Matrix::scalar(rho),
            m0: vec![0.0],
            p0: Matrix::scalar(p0),
        }
    }

    #[test]
    fn no_information_is_lyapunov() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let out = kalman_bucy(&scalar(0.0, 1.0, 0.0, 0.0, 0.3), &vec![0.1; 1000], &grid).unwrap();
        for i in [0, 250, 1000] {
            assert!((out.cov_at(i).get(0, 0) - (0.3 + grid.node(i))).abs() < 1e-12);
            assert_eq!(out.mean_at(i)[0], 0.0);
        }
    }

    #[test]
    fn riccati_reaches_stationary_value() {
        assert!((stationary_variance(-1.0, 1.0, 0.0, 1.0) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let grid = TimeGrid::new(20.0, 200_000).unwrap();
        for rho in [0.0, 0.5] {
            let out = kalman_bucy(&scalar(-1.0, 1.0, rho, 1.0, 1.0), &vec![0.0; 200_000], &grid).unwrap();
            let p = out.cov_at(200_000).get(0, 0);
            let expected = stationary_variance(-1.0, 1.0, rho, 1.0);
            assert!((p - expected).abs() < 1e-3, "rho {rho}: {p} vs {expected}");
            // 0 = −2p + 1 + ρ² − (p + ρ)²
            assert!((-2.0 * expected + 1.0 + rho * rho - (expected + rho).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_noise_follows_the_ode() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let mut model = scalar(-1.0, 0.0, 0.0, 1.0, 0.0);
        model.m0 = vec![2.0];
        let out = kalman_bucy(&model, &vec![0.05; 1000], &grid).unwrap();
        let dt = 1e-3f64;
        assert!(out.cov.iter().all(|&p| p == 0.0));
        assert!((out.mean_at(1000)[0] - 2.0 * (1.0 - dt).powi(1000)).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_covariance_stays_psd_and_symmetric() {
        let model = LinearModel {
            drift: Matrix::from_f64(2, 2, &[-1.0, 0.5, -0.5, -0.2]),
            obs: Matrix::from_f64(1, 2, &[1.0, 0.0]),
            sigma: Matrix::from_f64(2, 1, &[0.0, 1.0]),
            rho: Matrix::from_f64(2, 1, &[0.3, 0.0]),
            m0: vec![0.0, 0.0],
            p0: Matrix::identity(2),
        };
        let grid = TimeGrid::new(2.0, 2000).unwrap();
        let out = kalman_bucy(&model, &vec![0.01; 2000], &grid).unwrap();
        for i in 0..=2000 {
            let p = out.cov_at(i);
            assert_eq!(p.get(0, 1), p.get(1, 0));
            assert!(p.cholesky(PSD_TOLERANCE).is_some());
        }
    }

    #[test]
    fn extracted_from_zoo() {
        let mut p = BTreeMap::new();
        p.insert("rho".to_string(), 0.5);
        let spec: ModelSpec<f64> = zoo::build("linear_gaussian", &p).unwrap();
        let lm = LinearModel::from_spec(&spec).unwrap();
        assert_eq!(lm.drift.get(0, 0), -1.0);
        assert_eq!(lm.rho.get(0, 0), 0.5);
        assert_eq!(lm.p0.get(0, 0), 1.0);
        let jumps: ModelSpec<f64> = zoo::build("ou_jumps", &BTreeMap::new()).unwrap();
        assert!(LinearModel::from_spec(&jumps).is_err());
        let bounded: ModelSpec<f64> = zoo::build("bounded_obs", &BTreeMap::new()).unwrap();
        assert!(LinearModel::from_spec(&bounded).is_err());
    }

    #[test]
    fn wrong_increment_count() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!(matches!(kalman_bucy(&scalar(-1.0, 1.0, 0.0, 1.0, 1.0), &[0.0; 9], &grid), Err(KalmanError::Dimension(_))));
    }
}
