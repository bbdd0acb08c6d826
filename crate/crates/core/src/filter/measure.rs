use serde::{Deserialize, Serialize};

use crate::model::test_functions::TestFunction;
use crate::scalar::Scalar;

/// `μ = e^{log_scale} (1/M) Σ e^{log_weightᵢ} δ_{xᵢ}` over `M` particles in `R^dim`.
///
/// `log_scale` carries the normalizing constants absorbed by resampling, so
/// `μ(1)` stays trackable across resampling events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct WeightedEmpiricalMeasure<S> {
    pub dim: usize,
    pub time: S,
    /// Flat, particle-major.
    pub particles: Vec<S>,
    pub log_weights: Vec<S>,
    pub log_scale: S,
}

impl<S: Scalar> WeightedEmpiricalMeasure<S> {
    /// Equally weighted particles.
    pub fn uniform(dim: usize, time: S, particles: Vec<S>) -> Self {
        let m = particles.len() / dim;
        Self { dim, time, particles, log_weights: vec![S::zero(); m], log_scale: S::zero() }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    #[inline]
    pub fn particle(&self, i: usize) -> &[S] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    pub fn max_log_weight(&self) -> S {
        self.log_weights.iter().copied().fold(S::neg_infinity(), S::max)
    }

    /// `e^{log wᵢ − max}` for every particle, and the max.
    pub fn shifted_weights(&self) -> (Vec<S>, S) {
        let m = self.max_log_weight();
        (self.log_weights.iter().map(|&l| (l - m).exp()).collect(), m)
    }

    /// `Σ e^{log wᵢ − max} f(xᵢ)`, `Σ e^{log wᵢ − max}` and the max.
    pub fn weighted_sum<F: FnMut(&[S]) -> S>(&self, mut f: F) -> (S, S, S) {
        let m = self.max_log_weight();
        let mut num = S::zero();
        let mut den = S::zero();
        for i in 0..self.len() {
            let e = (self.log_weights[i] - m).exp();
            num += e * f(self.particle(i));
            den += e;
        }
        (num, den, m)
    }

    fn log_prefactor(&self, max: S) -> S {
        max + self.log_scale - S::from_usize_lossy(self.len()).ln()
    }

    /// `μ(φ)`.
    pub fn mu<F: TestFunction<S> + ?Sized>(&self, phi: &F) -> S {
        let (num, _, m) = self.weighted_sum(|x| phi.value(x));
        num * self.log_prefactor(m).exp()
    }

    pub fn log_mu_one(&self) -> S {
        let (_, den, m) = self.weighted_sum(|_| S::one());
        den.ln() + self.log_prefactor(m)
    }

    pub fn mu_one(&self) -> S {
        self.log_mu_one().exp()
    }

    /// `P(φ) = μ(φ)/μ(1)`; `P(1) = 1` exactly.
    pub fn p<F: TestFunction<S> + ?Sized>(&self, phi: &F) -> S {
        let (num, den, _) = self.weighted_sum(|x| phi.value(x));
        num / den
    }

    /// `P(f)` for an arbitrary function of the particle.
    pub fn p_with<F: FnMut(&[S]) -> S>(&self, f: F) -> S {
        let (num, den, _) = self.weighted_sum(f);
        num / den
    }

    /// `(Σw)² / Σw²`.
    pub fn ess(&self) -> S {
        let (w, _) = self.shifted_weights();
        let s: S = w.iter().copied().sum();
        let s2: S = w.iter().map(|&v| v * v).sum();
        s * s / s2
    }

    /// Posterior mean and per-coordinate variance.
    pub fn mean_var(&self) -> (Vec<S>, Vec<S>) {
        let (w, _) = self.shifted_weights();
        let total: S = w.iter().copied().sum();
        let d = self.dim;
        let mut mean = vec![S::zero(); d];
        for (i, &wi) in w.iter().enumerate() {
            for k in 0..d {
                mean[k] += wi * self.particle(i)[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![S::zero(); d];
        for (i, &wi) in w.iter().enumerate() {
            for k in 0..d {
                let u = self.particle(i)[k] - mean[k];
                var[k] += wi * u * u;
            }
        }
        var.iter_mut().for_each(|v| *v /= total);
        (mean, var)
    }

    /// The measure with particles reordered so that new slot `j` holds old
    /// particle `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (j, &i) in perm.iter().enumerate() {
            out.particles[j * self.dim..(j + 1) * self.dim].copy_from_slice(self.particle(i));
            out.log_weights[j] = self.log_weights[i];
        }
        out
    }
}
