use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    None,
    Systematic,
    Multinomial,
}

/// Ancestor indices for `weights.len()` offspring, proportional to the
/// (unnormalized, nonnegative) `weights`.
pub fn resample_indices<R: Rng + ?Sized>(scheme: Resampling, weights: &[f64], rng: &mut R, out: &mut Vec<usize>) {
    let m = weights.len();
    out.clear();
    let total: f64 = weights.iter().sum();
    match scheme {
        Resampling::None => out.extend(0..m),
        Resampling::Systematic => {
            let u0: f64 = rng.random::<f64>() / m as f64;
            select(weights, total, (0..m).map(|j| u0 + j as f64 / m as f64), out);
        }
        Resampling::Multinomial => {
            // Sorted uniforms from normalized exponential spacings.
            let gaps: Vec<f64> = (0..=m).map(|_| Exp1.sample(rng)).collect();
            let sum: f64 = gaps.iter().sum();
            let mut acc = 0.0;
            let points: Vec<f64> = gaps[..m]
                .iter()
                .map(|g| {
                    acc += g;
                    acc / sum
                })
                .collect();
            select(weights, total, points.into_iter(), out);
        }
    }
}

fn select<I: Iterator<Item = f64>>(weights: &[f64], total: f64, sorted_points: I, out: &mut Vec<usize>) {
    let mut i = 0;
    let mut cum = weights[0] / total;
    let last = weights.len() - 1;
    for u in sorted_points {
        while u >= cum && i < last {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
}
