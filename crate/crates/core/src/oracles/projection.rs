//! Monte-Carlo corroboration that conditioning a stochastic integral of a
//! simple process on the `(W¹, N₁)` history projects the integrand.

use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{Purpose, StreamKey};

pub const MIN_BIN_SAMPLES: usize = 30;
pub const N_BINS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum FixtureError {
    #[error("partition must start at 0 and be nondecreasing")]
    Partition,
    #[error("interval {interval} has {found} integrand values, expected one per interval")]
    Length { interval: usize, found: usize },
    #[error("integrand on interval {interval} reads node {node}, which is in its future")]
    NotAdapted { interval: usize, node: usize },
    #[error("rates must be nonnegative and finite")]
    Rate,
}

/// Value of the simple integrand on one interval, a function of information
/// available at the interval's left end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Integrand {
    Constant {
        value: f64,
    },
    /// `sign(U)` for an independent standard normal `U` of this interval.
    SignOfAuxiliary,
    /// `tanh(W¹)` at partition node `node`.
    TanhW1At {
        node: usize,
    },
    /// `tanh(W⁰)` at partition node `node`.
    TanhW0At {
        node: usize,
    },
    /// `min(N₁(0, t_node], cap)`.
    N1CountAt {
        node: usize,
        cap: u32,
    },
}

impl Integrand {
    fn node(&self) -> Option<usize> {
        match self {
            Self::TanhW1At { node } | Self::TanhW0At { node } | Self::N1CountAt { node, .. } => Some(*node),
            _ => None,
        }
    }

    fn value(&self, d: &Draw) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::SignOfAuxiliary => 0.0,
            Self::TanhW1At { node } => d.w1[node].tanh(),
            Self::TanhW0At { node } => d.w0[node].tanh(),
            Self::N1CountAt { node, cap } => d.n1[node].min(cap) as f64,
        }
    }

    /// Conditional expectation given the `(W¹, N₁)` history.
    fn projected(&self, d: &Draw) -> f64 {
        match *self {
            Self::SignOfAuxiliary | Self::TanhW0At { .. } => 0.0,
            _ => self.value(d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralKind {
    Lebesgue,
    ItoW1,
    ItoW0,
    CompensatedN1,
    CompensatedN0,
}

/// Conditioning feature the Monte-Carlo samples are binned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    W1End,
    N1End,
    /// The closed-form conditional expectation itself.
    Projection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleProcessFixture {
    pub name: String,
    /// `0 = t₀ ≤ … ≤ t_k`.
    pub partition: Vec<f64>,
    /// One per interval `(tᵢ, tᵢ₊₁]`.
    pub integrand: Vec<Integrand>,
    pub kind: IntegralKind,
    pub rate0: f64,
    pub rate1: f64,
    pub features: Vec<Feature>,
}

impl SimpleProcessFixture {
    pub fn validate(&self) -> Result<(), FixtureError> {
        let p = &self.partition;
        if p.is_empty() || p[0] != 0.0 || p.windows(2).any(|w| w[1] < w[0]) {
            return Err(FixtureError::Partition);
        }
        let k = p.len() - 1;
        if self.integrand.len() != k {
            return Err(FixtureError::Length { interval: k, found: self.integrand.len() });
        }
        for (i, f) in self.integrand.iter().enumerate() {
            if let Some(node) = f.node() {
                if node > i {
                    return Err(FixtureError::NotAdapted { interval: i, node });
                }
            }
        }
        if !(self.rate0 >= 0.0 && self.rate0.is_finite() && self.rate1 >= 0.0 && self.rate1.is_finite()) {
            return Err(FixtureError::Rate);
        }
        Ok(())
    }
}

/// The shipped fixture set.
pub fn shipped_fixtures() -> Vec<SimpleProcessFixture> {
    let partition = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let fixture = |name: &str, integrand: Vec<Integrand>, kind, features: Vec<Feature>| SimpleProcessFixture {
        name: name.into(),
        partition: partition.clone(),
        integrand,
        kind,
        rate0: 2.0,
        rate1: 2.0,
        features,
    };
    vec![
        fixture("constant_w1", vec![Integrand::Constant { value: 1.5 }; 4], IntegralKind::ItoW1, vec![Feature::W1End]),
        fixture("auxiliary_sign_w1", vec![Integrand::SignOfAuxiliary; 4], IntegralKind::ItoW1, vec![Feature::W1End, Feature::N1End]),
        fixture(
            "w1_history_w0",
            vec![
                Integrand::Constant { value: 0.0 },
                Integrand::TanhW1At { node: 1 },
                Integrand::TanhW1At { node: 1 },
                Integrand::TanhW1At { node: 3 },
            ],
            IntegralKind::ItoW0,
            vec![Feature::W1End, Feature::Projection],
        ),
        fixture(
            "mixed_history_w1",
            vec![
                Integrand::SignOfAuxiliary,
                Integrand::TanhW0At { node: 1 },
                Integrand::TanhW1At { node: 2 },
                Integrand::N1CountAt { node: 3, cap: 3 },
            ],
            IntegralKind::ItoW1,
            vec![Feature::Projection, Feature::W1End],
        ),
        fixture(
            "n1_history_n0",
            vec![
                Integrand::Constant { value: 1.0 },
                Integrand::N1CountAt { node: 1, cap: 2 },
                Integrand::TanhW1At { node: 2 },
                Integrand::N1CountAt { node: 3, cap: 4 },
            ],
            IntegralKind::CompensatedN0,
            vec![Feature::N1End, Feature::W1End],
        ),
        fixture(
            "w0_history_n1",
            vec![
                Integrand::TanhW1At { node: 0 },
                Integrand::TanhW0At { node: 1 },
                Integrand::N1CountAt { node: 1, cap: 2 },
                Integrand::SignOfAuxiliary,
            ],
            IntegralKind::CompensatedN1,
            vec![Feature::Projection, Feature::N1End],
        ),
        fixture(
            "w0_history_lebesgue",
            vec![
                Integrand::TanhW0At { node: 0 },
                Integrand::TanhW0At { node: 1 },
                Integrand::TanhW1At { node: 1 },
                Integrand::N1CountAt { node: 2, cap: 3 },
            ],
            IntegralKind::Lebesgue,
            vec![Feature::Projection],
        ),
    ]
}

/// Paths of one draw at the partition nodes.
struct Draw {
    w0: Vec<f64>,
    w1: Vec<f64>,
    n0: Vec<u32>,
    n1: Vec<u32>,
    aux: Vec<f64>,
}

fn draw(fx: &SimpleProcessFixture, key: StreamKey) -> Draw {
    let mut rng = key.rng();
    let k = fx.partition.len();
    let mut d = Draw { w0: vec![0.0; k], w1: vec![0.0; k], n0: vec![0; k], n1: vec![0; k], aux: vec![0.0; k - 1] };
    for i in 1..k {
        let dt = fx.partition[i] - fx.partition[i - 1];
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        d.w0[i] = d.w0[i - 1] + dt.sqrt() * z0;
        d.w1[i] = d.w1[i - 1] + dt.sqrt() * z1;
        d.n0[i] = d.n0[i - 1] + poisson(fx.rate0 * dt, &mut rng);
        d.n1[i] = d.n1[i - 1] + poisson(fx.rate1 * dt, &mut rng);
        d.aux[i - 1] = StandardNormal.sample(&mut rng);
    }
    d
}

fn poisson<R: rand::Rng>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

/// `(∫f dZ, ∫f̂ dZ)` over the whole horizon.
fn integrals(fx: &SimpleProcessFixture, d: &Draw) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (i, f) in fx.integrand.iter().enumerate() {
        let dt = fx.partition[i + 1] - fx.partition[i];
        let value = match f {
            Integrand::SignOfAuxiliary => d.aux[i].signum(),
            _ => f.value(d),
        };
        let proj = f.projected(d);
        let (inc, projected_inc) = match fx.kind {
            IntegralKind::Lebesgue => (dt, dt),
            IntegralKind::ItoW1 => {
                let dw = d.w1[i + 1] - d.w1[i];
                (dw, dw)
            }
            IntegralKind::ItoW0 => (d.w0[i + 1] - d.w0[i], 0.0),
            IntegralKind::CompensatedN1 => {
                let dn = (d.n1[i + 1] - d.n1[i]) as f64 - fx.rate1 * dt;
                (dn, dn)
            }
            IntegralKind::CompensatedN0 => ((d.n0[i + 1] - d.n0[i]) as f64 - fx.rate0 * dt, 0.0),
        };
        lhs += value * inc;
        rhs += proj * projected_inc;
    }
    (lhs, rhs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinResult {
    pub feature: Feature,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub mean_integral: f64,
    pub mean_projection: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub fixture: String,
    pub kind: IntegralKind,
    pub n_mc: usize,
    pub bins: Vec<BinResult>,
    /// Bins dropped for having fewer than [`MIN_BIN_SAMPLES`] samples.
    pub excluded: Vec<BinResult>,
    /// Largest `|mean difference| / SE` over the tested bins.
    pub max_z: f64,
    pub pass: bool,
}

/// Bins the `n_mc` draws by each feature's quartiles and checks, per bin, that
/// the mean of `∫f dZ − ∫f̂ dZ` is within 3 standard errors of 0.
pub fn projection_theorem_test(
    fx: &SimpleProcessFixture,
    n_mc: usize,
    seed: u64,
    fixture_index: u64,
) -> Result<ProjectionReport, FixtureError> {
    fx.validate()?;
    let samples: Vec<(f64, f64, f64, f64)> = (0..n_mc as u64)
        .into_par_iter()
        .map(|r| {
            let d = draw(fx, StreamKey::new(seed, Purpose::Fixture, fixture_index, r));
            let (lhs, rhs) = integrals(fx, &d);
            let k = fx.partition.len() - 1;
            (lhs, rhs, d.w1[k], d.n1[k] as f64)
        })
        .collect();
    let mut bins = Vec::new();
    let mut excluded = Vec::new();
    for &feature in &fx.features {
        let values: Vec<f64> = samples
            .iter()
            .map(|s| match feature {
                Feature::W1End => s.2,
                Feature::N1End => s.3,
                Feature::Projection => s.1,
            })
            .collect();
        for bin in quantile_bins(&values) {
            let members: Vec<&(f64, f64, f64, f64)> =
                samples.iter().zip(&values).filter(|(_, &v)| v >= bin.0 && v <= bin.1).map(|(s, _)| s).collect();
            let n = members.len();
            let mean = |f: &dyn Fn(&(f64, f64, f64, f64)) -> f64| members.iter().map(|s| f(s)).sum::<f64>() / n.max(1) as f64;
            let mean_integral = mean(&|s| s.0);
            let mean_projection = mean(&|s| s.1);
            let diff_mean = mean_integral - mean_projection;
            let var = if n > 1 { members.iter().map(|s| (s.0 - s.1 - diff_mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            let se = (var / n.max(1) as f64).sqrt();
            let result = BinResult {
                feature,
                lo: bin.0,
                hi: bin.1,
                n,
                mean_integral,
                mean_projection,
                std_error: se,
                pass: diff_mean.abs() <= 3.0 * se,
            };
            if n < MIN_BIN_SAMPLES {
                excluded.push(result);
            } else {
                bins.push(result);
            }
        }
    }
    let max_z = bins
        .iter()
        .map(|b| {
            let d = (b.mean_integral - b.mean_projection).abs();
            if b.std_error > 0.0 {
                d / b.std_error
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let pass = !bins.is_empty() && bins.iter().all(|b| b.pass);
    Ok(ProjectionReport { fixture: fx.name.clone(), kind: fx.kind, n_mc, bins, excluded, max_z, pass })
}

/// Closed value ranges covering the quartiles of `values`; ties collapse bins.
fn quantile_bins(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.is_empty() {
        return Vec::new();
    }
    let mut all = values.to_vec();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let mut edges: Vec<f64> = (1..N_BINS).map(|k| all[(k * n / N_BINS).min(n - 1)]).collect();
    edges.dedup();
    // Bins are [prev distinct value above edge, edge]; built from the distinct values.
    let mut out = Vec::new();
    let mut lo = sorted[0];
    for &e in &edges {
        if e < lo {
            continue;
        }
        out.push((lo, e));
        let next = sorted.partition_point(|&v| v <= e);
        if next >= sorted.len() {
            return out;
        }
        lo = sorted[next];
    }
    out.push((lo, *sorted.last().expect("nonempty")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_fixtures_validate() {
        for fx in shipped_fixtures() {
            fx.validate().unwrap();
        }
    }

    #[test]
    fn future_information_is_rejected() {
        let mut fx = shipped_fixtures().remove(2);
        fx.integrand[1] = Integrand::TanhW1At { node: 2 };
        assert_eq!(fx.validate(), Err(FixtureError::NotAdapted { interval: 1, node: 2 }));
    }

    #[test]
    fn constant_integrand_is_its_own_projection() {
        let fx = &shipped_fixtures()[0];
        let r = projection_theorem_test(fx, 2000, 1, 0).unwrap();
        assert!(r.pass && r.max_z == 0.0);
        for b in &r.bins {
            assert_eq!(b.mean_integral, b.mean_projection);
        }
    }

    #[test]
    fn small_runs_of_every_fixture_pass() {
        for (i, fx) in shipped_fixtures().iter().enumerate() {
            let r = projection_theorem_test(fx, 20_000, 7, i as u64).unwrap();
            assert!(r.max_z < 4.5, "{}: {}", fx.name, r.max_z);
        }
    }

    #[test]
    fn integrals_of_one_draw() {
        let fx = SimpleProcessFixture {
            name: "hand".into(),
            partition: vec![0.0, 0.5, 1.0],
            integrand: vec![Integrand::Constant { value: 0.0 }, Integrand::SignOfAuxiliary],
            kind: IntegralKind::ItoW1,
            rate0: 1.0,
            rate1: 1.0,
            features: vec![Feature::W1End],
        };
        let d = Draw { w0: vec![0.0; 3], w1: vec![0.0, 0.3, 1.0], n0: vec![0; 3], n1: vec![0; 3], aux: vec![1.0, -2.0] };
        assert_eq!(integrals(&fx, &d), (-0.7, 0.0));
    }

    #[test]
    fn quantile_bins_cover_ties() {
        let v: Vec<f64> = (0..100).map(|i| (i % 3) as f64).collect();
        let bins = quantile_bins(&v);
        assert_eq!(bins, vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        let w: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let bins = quantile_bins(&w);
        assert_eq!(bins.len(), N_BINS);
        assert_eq!(bins[0], (0.0, 250.0));
        assert_eq!(bins[N_BINS - 1].1, 999.0);
    }
}
