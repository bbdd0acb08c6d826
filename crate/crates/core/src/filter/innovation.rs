use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Increments `ΔV̄ = ΔṼ − P(B) Δt` per step, flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct InnovationPath<S> {
    pub dim: usize,
    pub dvbar: Vec<S>,
}

impl<S: Scalar> InnovationPath<S> {
    pub fn n_steps(&self) -> usize {
        self.dvbar.len() / self.dim.max(1)
    }

    #[inline]
    pub fn step(&self, i: usize) -> &[S] {
        &self.dvbar[i * self.dim..(i + 1) * self.dim]
    }

    /// `V̄` at every node, starting from 0.
    pub fn path(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.dim];
        let mut acc = vec![S::zero(); self.dim];
        for i in 0..self.n_steps() {
            for (a, &v) in acc.iter_mut().zip(self.step(i)) {
                *a += v;
            }
            out.extend_from_slice(&acc);
        }
        out
    }
}

pub const QV_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnovationReport {
    pub n_steps: usize,
    pub horizon: f64,
    /// Realized quadratic variation over `T`, per component.
    pub qv_over_t: Vec<f64>,
    /// Lag-1 sample autocorrelation of the increments, per component.
    pub lag1_autocorr: Vec<f64>,
    /// `3 / √n_steps`.
    pub autocorr_bound: f64,
    pub pass: bool,
}

/// Wiener-ness checks: `|QV/T − 1| ≤ 0.05` and `|lag-1 autocorrelation| ≤ 3/√n`.
pub fn innovation_diagnostics<S: Scalar>(innovation: &InnovationPath<S>, horizon: f64) -> InnovationReport {
    let n = innovation.n_steps();
    let bound = 3.0 / (n as f64).sqrt();
    let mut qv_over_t = Vec::with_capacity(innovation.dim);
    let mut lag1 = Vec::with_capacity(innovation.dim);
    for k in 0..innovation.dim {
        let xs: Vec<f64> = (0..n).map(|i| innovation.step(i)[k].as_f64()).collect();
        qv_over_t.push(xs.iter().map(|v| v * v).sum::<f64>() / horizon);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var: f64 = xs.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        lag1.push(if var > 0.0 { cov / var } else { 0.0 });
    }
    let pass = n >= 2 && qv_over_t.iter().all(|q| (q - 1.0).abs() <= QV_TOLERANCE) && lag1.iter().all(|a| a.abs() <= bound);
    InnovationReport { n_steps: n, horizon, qv_over_t, lag1_autocorr: lag1, autocorr_bound: bound, pass }
}
