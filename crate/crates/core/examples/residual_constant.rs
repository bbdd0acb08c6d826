//! Empirical residual constant `worst relative residual / (Δt + 1/√M)` on the
//! OU-with-jumps model, for both filter modes.
//!
//! cargo run --release --example residual_constant -- [particles] [steps] [seeds]

use std::collections::BTreeMap;

use jdfilter::experiments::{residual_run, worst_relative};
use jdfilter::filter::{FilterConfig, FilterMode};
use jdfilter::model::zoo;
use jdfilter::noise::{observe_path, TimeGrid};
use jdfilter::rng::{Purpose, StreamKey};
use jdfilter::simulator::{simulate_from_key, SchemeConfig};
use jdfilter::ModelSpecF64;

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (m, n, seeds) = (arg(1, 10_000), arg(2, 1000), arg(3, 3));
    let spec: ModelSpecF64 = zoo::build("ou_jumps", &BTreeMap::new())?;
    let grid = TimeGrid::new(1.0, n)?;
    let rate = 1.0 / n as f64 + 1.0 / (m as f64).sqrt();
    for seed in 1..=seeds as u64 {
        let path = simulate_from_key(&spec, &grid, StreamKey::new(seed, Purpose::SystemNoise, 0, 0), &SchemeConfig::new(n))?;
        let obs = observe_path(&spec, &path)?;
        for mode in [FilterMode::Zakai, FilterMode::Fkk] {
            let key = StreamKey::new(seed, Purpose::ParticleNoise, 0, 0);
            let (reports, _) = residual_run(&spec, &obs, &FilterConfig::new(m, mode), mode, key)?;
            let worst = worst_relative(&reports);
            println!("seed={seed} mode={mode:?} worst={worst:.4} constant={:.2}", worst / rate);
        }
    }
    Ok(())
}
