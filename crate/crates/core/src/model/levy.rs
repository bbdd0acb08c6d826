//! Finite Lévy (characteristic) measures.
//!
//! Only finite measures are representable: small jumps of an infinite-activity
//! measure must be truncated before a model is built. Each measure carries the
//! quadrature rule used to integrate against it, exact for atomic measures
//! and a fixed 2048-point Halton rule for measures given by a density.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng::halton;
use crate::scalar::Scalar;

use super::ModelError;

pub const QMC_POINTS: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom<S> {
    pub mark: Vec<S>,
    pub mass: S,
}

/// Normalized law of the marks for a density-type measure.
#[derive(Clone, Debug, PartialEq)]
pub enum MarkLaw<S> {
    /// Independent Gaussian coordinates.
    Gaussian { mean: Vec<S>, std: Vec<S> },
    /// Uniform on the box `[low, high]`.
    Uniform { low: Vec<S>, high: Vec<S> },
}

impl<S: Scalar> MarkLaw<S> {
    fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Uniform { low, .. } => low.len(),
        }
    }

    fn pdf(&self, mark: &[S]) -> S {
        match self {
            Self::Gaussian { mean, std } => {
                let mut p = S::one();
                for ((&m, &s), &x) in mean.iter().zip(std).zip(mark) {
                    let u = (x - m) / s;
                    p *= (-(u * u) * S::lit(0.5)).exp() / (s * S::lit((2.0 * std::f64::consts::PI).sqrt()));
                }
                p
            }
            Self::Uniform { low, high } => {
                let mut p = S::one();
                for ((&l, &h), &x) in low.iter().zip(high).zip(mark) {
                    if x < l || x > h {
                        return S::zero();
                    }
                    p /= h - l;
                }
                p
            }
        }
    }

    /// Map a point of the unit cube to a mark (inverse CDF per coordinate).
    fn map_unit(&self, u: &[f64], out: &mut [S]) {
        match self {
            Self::Gaussian { mean, std } => {
                let n = Normal::standard();
                for (k, o) in out.iter_mut().enumerate() {
                    *o = mean[k] + std[k] * S::lit(n.inverse_cdf(u[k]));
                }
            }
            Self::Uniform { low, high } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = low[k] + (high[k] - low[k]) * S::lit(u[k]);
                }
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [S]) {
        match self {
            Self::Gaussian { mean, std } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = mean[k] + std[k] * S::lit(z);
                }
            }
            Self::Uniform { low, high } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let u: f64 = rng.random();
                    *o = low[k] + (high[k] - low[k]) * S::lit(u);
                }
            }
        }
    }

    fn second_moment(&self) -> S {
        match self {
            Self::Gaussian { mean, std } => mean.iter().zip(std).map(|(&m, &s)| m * m + s * s).sum(),
            Self::Uniform { low, high } => low.iter().zip(high).map(|(&l, &h)| (l * l + l * h + h * h) / S::lit(3.0)).sum(),
        }
    }

    fn mean_into(&self, out: &mut [S]) {
        match self {
            Self::Gaussian { mean, .. } => out.copy_from_slice(mean),
            Self::Uniform { low, high } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = (low[k] + high[k]) * S::lit(0.5);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LevyKind<S> {
    Atomic(Vec<Atom<S>>),
    Density { total_mass: S, law: MarkLaw<S> },
}

/// Nodes and weights of the rule used for `∫ f(mark) ν(dmark)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule<S> {
    pub mark_dim: usize,
    /// Flattened `n x mark_dim`.
    pub nodes: Vec<S>,
    pub weights: Vec<S>,
    pub exact: bool,
}

impl<S: Scalar> QuadratureRule<S> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[S] {
        &self.nodes[i * self.mark_dim..(i + 1) * self.mark_dim]
    }
}

/// Result of integrating against a measure; `std_error` is zero for exact rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature<S> {
    pub value: S,
    pub std_error: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevyMeasure<S> {
    mark_dim: usize,
    kind: LevyKind<S>,
    rule: QuadratureRule<S>,
    cumulative: Vec<S>,
    moment: Vec<S>,
}

impl<S: Scalar> LevyMeasure<S> {
    pub fn empty(mark_dim: usize) -> Self {
        Self::atomic(mark_dim, Vec::new()).expect("empty measure is valid")
    }

    pub fn atomic(mark_dim: usize, atoms: Vec<Atom<S>>) -> Result<Self, ModelError> {
        for a in &atoms {
            if a.mark.len() != mark_dim {
                return Err(ModelError::Dimension { what: "Lévy atom mark".into(), expected: mark_dim, found: a.mark.len() });
            }
            if !(a.mass > S::zero()) || !a.mass.is_finite() {
                return Err(ModelError::InvalidMeasure(format!("atom mass must be positive and finite, got {}", a.mass)));
            }
            if !a.mark.iter().all(|m| m.is_finite()) {
                return Err(ModelError::InvalidMeasure("atom mark is not finite".into()));
            }
        }
        let rule = QuadratureRule {
            mark_dim,
            nodes: atoms.iter().flat_map(|a| a.mark.iter().copied()).collect(),
            weights: atoms.iter().map(|a| a.mass).collect(),
            exact: true,
        };
        let mut acc = S::zero();
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.mass;
                acc
            })
            .collect();
        let mut moment = vec![S::zero(); mark_dim];
        for a in &atoms {
            for (o, &m) in moment.iter_mut().zip(&a.mark) {
                *o += a.mass * m;
            }
        }
        Ok(Self { mark_dim, kind: LevyKind::Atomic(atoms), rule, cumulative, moment })
    }

    pub fn density(total_mass: S, law: MarkLaw<S>) -> Result<Self, ModelError> {
        if !(total_mass >= S::zero()) || !total_mass.is_finite() {
            return Err(ModelError::InvalidMeasure(format!("total mass must be finite and nonnegative, got {total_mass}")));
        }
        match &law {
            MarkLaw::Gaussian { mean, std } => {
                if mean.len() != std.len() || std.iter().any(|&s| !(s > S::zero())) {
                    return Err(ModelError::InvalidMeasure("gaussian mark law needs positive std per coordinate".into()));
                }
            }
            MarkLaw::Uniform { low, high } => {
                if low.len() != high.len() || low.iter().zip(high).any(|(&l, &h)| !(h > l)) {
                    return Err(ModelError::InvalidMeasure("uniform mark law needs low < high per coordinate".into()));
                }
            }
        }
        let mark_dim = law.dim();
        let mut nodes = Vec::with_capacity(QMC_POINTS * mark_dim);
        let mut u = vec![0.0; mark_dim];
        let mut m = vec![S::zero(); mark_dim];
        for i in 0..QMC_POINTS {
            halton(i as u64 + 1, mark_dim, &mut u);
            law.map_unit(&u, &mut m);
            nodes.extend_from_slice(&m);
        }
        let w = total_mass / S::from_usize_lossy(QMC_POINTS);
        let rule = QuadratureRule { mark_dim, nodes, weights: vec![w; QMC_POINTS], exact: false };
        let mut moment = vec![S::zero(); mark_dim];
        law.mean_into(&mut moment);
        moment.iter_mut().for_each(|o| *o *= total_mass);
        Ok(Self { mark_dim, kind: LevyKind::Density { total_mass, law }, rule, cumulative: Vec::new(), moment })
    }

    pub fn kind(&self) -> &LevyKind<S> {
        &self.kind
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    pub fn rule(&self) -> &QuadratureRule<S> {
        &self.rule
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.kind, LevyKind::Atomic(_))
    }

    pub fn atoms(&self) -> Option<&[Atom<S>]> {
        match &self.kind {
            LevyKind::Atomic(a) => Some(a),
            LevyKind::Density { .. } => None,
        }
    }

    pub fn total_mass(&self) -> S {
        match &self.kind {
            LevyKind::Atomic(_) => self.cumulative.last().copied().unwrap_or_else(S::zero),
            LevyKind::Density { total_mass, .. } => *total_mass,
        }
    }

    /// `∫ |mark|^2 ν(dmark)`, exact for both representations.
    pub fn second_moment(&self) -> S {
        match &self.kind {
            LevyKind::Atomic(atoms) => atoms.iter().map(|a| a.mass * crate::scalar::norm_sq(&a.mark)).sum(),
            LevyKind::Density { total_mass, law } => *total_mass * law.second_moment(),
        }
    }

    /// `∫ mark ν(dmark)`, exact for both representations.
    pub fn first_moment(&self) -> Vec<S> {
        self.moment.clone()
    }

    pub fn first_moment_ref(&self) -> &[S] {
        &self.moment
    }

    /// Density of ν with respect to Lebesgue measure; `None` for atomic measures.
    pub fn density_at(&self, mark: &[S]) -> Option<S> {
        match &self.kind {
            LevyKind::Atomic(_) => None,
            LevyKind::Density { total_mass, law } => Some(*total_mass * law.pdf(mark)),
        }
    }

    /// Draw a mark from the normalized measure `ν / ν(total)`.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [S]) {
        match &self.kind {
            LevyKind::Atomic(atoms) => {
                let total = self.total_mass();
                let u = S::lit(rng.random::<f64>()) * total;
                let idx = self.cumulative.partition_point(|&c| c <= u).min(atoms.len() - 1);
                out.copy_from_slice(&atoms[idx].mark);
            }
            LevyKind::Density { law, .. } => law.sample(rng, out),
        }
    }

    /// `∫ f dν` with the measure's rule.
    pub fn integrate<F: FnMut(&[S]) -> S>(&self, mut f: F) -> Quadrature<S> {
        let rule = &self.rule;
        if rule.exact {
            let value = (0..rule.len()).map(|i| rule.weights[i] * f(rule.node(i))).sum();
            return Quadrature { value, std_error: S::zero() };
        }
        let n = S::from_usize_lossy(rule.len());
        let vals: Vec<S> = (0..rule.len()).map(|i| f(rule.node(i))).collect();
        let mean = vals.iter().copied().sum::<S>() / n;
        let var = vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / (n - S::one());
        let mass = self.total_mass();
        Quadrature { value: mass * mean, std_error: mass * (var / n).sqrt() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};

    #[test]
    fn atomic_moments_are_exact() {
        let nu = LevyMeasure::<f64>::atomic(1, vec![Atom { mark: vec![1.0], mass: 2.0 }, Atom { mark: vec![-0.5], mass: 1.0 }]).unwrap();
        assert_eq!(nu.total_mass(), 3.0);
        assert_eq!(nu.second_moment(), 2.0 * 1.0 + 1.0 * 0.25);
        assert_eq!(nu.first_moment(), vec![1.5]);
        let q = nu.integrate(|m| m[0] * m[0]);
        assert_eq!(q.value, nu.second_moment());
        assert_eq!(q.std_error, 0.0);
    }

    #[test]
    fn rejects_bad_atoms() {
        assert!(LevyMeasure::<f64>::atomic(1, vec![Atom { mark: vec![1.0], mass: 0.0 }]).is_err());
        assert!(LevyMeasure::<f64>::atomic(2, vec![Atom { mark: vec![1.0], mass: 1.0 }]).is_err());
        assert!(LevyMeasure::<f64>::density(f64::INFINITY, MarkLaw::Uniform { low: vec![0.0], high: vec![1.0] }).is_err());
    }

    #[test]
    fn qmc_rule_integrates_gaussian_moments() {
        let nu = LevyMeasure::<f64>::density(2.0, MarkLaw::Gaussian { mean: vec![0.5], std: vec![1.5] }).unwrap();
        let q = nu.integrate(|m| m[0] * m[0]);
        let exact = nu.second_moment();
        assert!((q.value - exact).abs() < 0.02 * exact, "{} vs {}", q.value, exact);
        assert!(q.std_error > 0.0);
        assert!((q.value - exact).abs() < 4.0 * q.std_error);
        let m = nu.integrate(|m| m[0]);
        assert!((m.value - 1.0).abs() < 1e-2);
    }

    #[test]
    fn sampler_matches_density() {
        // Histogram goodness of fit for the uniform law.
        let nu = LevyMeasure::<f64>::density(1.0, MarkLaw::Uniform { low: vec![-1.0], high: vec![1.0] }).unwrap();
        let mut rng = StreamKey::new(1, Purpose::Fixture, 0, 0).rng();
        let mut counts = [0usize; 10];
        let mut m = [0.0];
        let n = 100_000;
        for _ in 0..n {
            nu.sample_mark(&mut rng, &mut m);
            counts[(((m[0] + 1.0) / 0.2) as usize).min(9)] += 1;
        }
        let expected = n as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square(9) 0.999 quantile is 27.88
        assert!(chi2 < 27.88, "chi2 = {chi2}");
        assert_eq!(nu.density_at(&[0.3]), Some(0.5));
        assert_eq!(nu.density_at(&[1.3]), Some(0.0));
    }

    #[test]
    fn atomic_sampler_frequencies() {
        let nu = LevyMeasure::<f64>::atomic(1, vec![Atom { mark: vec![1.0], mass: 3.0 }, Atom { mark: vec![2.0], mass: 1.0 }]).unwrap();
        let mut rng = StreamKey::new(2, Purpose::Fixture, 0, 0).rng();
        let mut m = [0.0];
        let n = 40_000;
        let ones = (0..n)
            .filter(|_| {
                nu.sample_mark(&mut rng, &mut m);
                m[0] == 1.0
            })
            .count();
        let p = ones as f64 / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 4.0 * se);
    }
}
