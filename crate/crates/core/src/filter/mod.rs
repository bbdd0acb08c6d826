//! Reference-measure particle approximation of the unnormalized conditional
//! measure `μ_t` and the filter `P_t`.

mod innovation;
mod measure;
mod resample;
mod residual;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use innovation::{innovation_diagnostics, InnovationPath, InnovationReport, QV_TOLERANCE};
pub use measure::WeightedEmpiricalMeasure;
pub use resample::{resample_indices, Resampling};
pub use residual::{fkk_residual, zakai_residual, ResidualReport, ResidualTracker};

use crate::model::test_functions::{builtin_test_functions, TestFunction};
use crate::model::{ModelError, ModelSpec, PriorSampler};
use crate::noise::{JumpAtom, ObservationDecomposition, ParticleNoiseStream};
use crate::rng::{Purpose, StreamKey};
use crate::scalar::{all_finite, dot, norm_sq, Scalar};
use crate::simulator::SignalStepper;

/// Particles per parallel work item.
const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error("observation has dimension {found}, model expects {expected}")]
    ObservationDimension { expected: usize, found: usize },
    #[error("filter degenerated at node {node} (t = {t}): {reason}")]
    Degenerate { node: usize, t: f64, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Raw weights, never resampled.
    #[default]
    Zakai,
    /// Resampling allowed.
    Fkk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub resampling: Resampling,
    /// Resample when `ESS < resample_threshold · M`.
    pub resample_threshold: f64,
    pub mode: FilterMode,
    /// Keep the measure at every node (memory `O(M · n_steps)`).
    pub keep_snapshots: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { n_particles: 1000, resampling: Resampling::None, resample_threshold: 0.5, mode: FilterMode::Zakai, keep_snapshots: false }
    }
}

impl FilterConfig {
    pub fn new(n_particles: usize, mode: FilterMode) -> Self {
        let resampling = match mode {
            FilterMode::Zakai => Resampling::None,
            FilterMode::Fkk => Resampling::Systematic,
        };
        Self { n_particles, resampling, mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.n_particles < 2 {
            return Err(FilterError::Config(format!("n_particles must be at least 2, got {}", self.n_particles)));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(FilterError::Config(format!("resample_threshold must lie in (0, 1], got {}", self.resample_threshold)));
        }
        if self.mode == FilterMode::Zakai && self.resampling != Resampling::None {
            return Err(FilterError::Config("zakai mode does not resample; set resampling = \"none\"".into()));
        }
        Ok(())
    }
}

/// Per-node diagnostics, evaluated before any resampling at that node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: usize,
    pub t: f64,
    pub mu_one: f64,
    pub log_mu_one: f64,
    pub ess: f64,
    pub resampled: bool,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// `P(φ)` over the builtin test functions.
    pub p_phi: Vec<f64>,
}

/// Inputs of the step from the current node to the next.
#[derive(Clone, Copy, Debug)]
pub struct StepInputs<'a, S> {
    pub dt: S,
    pub dvtilde: &'a [S],
    pub dvbar: &'a [S],
    /// `P(B)` at the current node.
    pub p_obs_drift: &'a [S],
    pub atoms1: &'a [JumpAtom<S>],
}

/// What an observer sees at each node.
#[derive(Clone, Copy, Debug)]
pub struct NodeView<'a, S> {
    pub spec: &'a ModelSpec<S>,
    pub node: usize,
    pub t: S,
    pub y: &'a [S],
    pub measure: &'a WeightedEmpiricalMeasure<S>,
    /// `None` at the last node.
    pub step: Option<StepInputs<'a, S>>,
}

/// Hook called at every node, in order, with the measure the filter
/// propagates from that node.
pub trait FilterObserver<S: Scalar> {
    fn observe(&mut self, view: &NodeView<'_, S>) -> Result<(), FilterError>;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FilterOutput<S> {
    pub mode: FilterMode,
    pub summaries: Vec<NodeSummary>,
    pub innovation: InnovationPath<S>,
    /// Every node's measure when `keep_snapshots` is set.
    pub snapshots: Vec<WeightedEmpiricalMeasure<S>>,
    pub final_measure: WeightedEmpiricalMeasure<S>,
    pub n_resamples: usize,
}

impl<S: Scalar> FilterOutput<S> {
    pub fn posterior_means(&self, coord: usize) -> Vec<f64> {
        self.summaries.iter().map(|s| s.mean[coord]).collect()
    }
}

struct ParticleBuffers<S> {
    x: Vec<S>,
    lw: Vec<S>,
}

/// Runs the particle filter along `obs`.
///
/// Particle `j` draws its prior from `(key.seed, ParticlePrior, key.path, j)`
/// and its own `W`, `N₀` from `(key.seed, ParticleNoise, key.path, j)`; slots
/// keep their streams through resampling.
pub fn run_filter<S: Scalar, P: PriorSampler<S> + ?Sized>(
    spec: &ModelSpec<S>,
    obs: &ObservationDecomposition<S>,
    cfg: &FilterConfig,
    prior: &P,
    key: StreamKey,
    observers: &mut [&mut dyn FilterObserver<S>],
) -> Result<FilterOutput<S>, FilterError> {
    cfg.validate()?;
    if obs.dim_y != spec.dim_y {
        return Err(FilterError::ObservationDimension { expected: spec.dim_y, found: obs.dim_y });
    }
    let grid = obs.grid;
    let (d, dy, m) = (spec.dim_x, spec.dim_y, cfg.n_particles);
    let dt = grid.dt();
    let half = S::lit(0.5);
    let phis = builtin_test_functions::<S>(d);

    let mut x = vec![S::zero(); m * d];
    x.par_chunks_mut(d).enumerate().for_each(|(j, xj)| {
        let mut rng = key.with_purpose(Purpose::ParticlePrior).with_particle(j as u64).rng();
        prior.sample(&mut rng, xj);
    });
    let mut streams: Vec<ParticleNoiseStream<S>> =
        (0..m).into_par_iter().map(|j| ParticleNoiseStream::new(spec, &grid, key.with_particle(j as u64))).collect();

    let mut cur = WeightedEmpiricalMeasure::uniform(d, grid.node(0), x);
    let mut next = ParticleBuffers { x: vec![S::zero(); m * d], lw: vec![S::zero(); m] };
    let mut drifts = vec![S::zero(); m * dy];
    let mut innovation = InnovationPath { dim: dy, dvbar: Vec::with_capacity(grid.n_steps * dy) };
    let mut summaries = Vec::with_capacity(grid.n_steps + 1);
    let mut snapshots = Vec::new();
    let mut n_resamples = 0;
    let mut resampled = false;
    let mut p_b = vec![S::zero(); dy];
    let mut dvbar = vec![S::zero(); dy];
    let mut ancestors = Vec::with_capacity(m);

    for i in 0..=grid.n_steps {
        let t = grid.node(i);
        let y = obs.y_at(i);
        let last = i == grid.n_steps;
        if !last {
            let dvt = obs.dvtilde_step(i);
            let atoms1 = obs.atoms_in_step(i);
            let cur_ref = &cur;
            next.x
                .par_chunks_mut(CHUNK * d)
                .zip(next.lw.par_chunks_mut(CHUNK))
                .zip(drifts.par_chunks_mut(CHUNK * dy))
                .zip(streams.par_chunks_mut(CHUNK))
                .enumerate()
                .try_for_each(|(c, (((xs, lws), bs), st))| -> Result<(), ModelError> {
                    let mut stepper = SignalStepper::new(spec);
                    let mut dw = vec![S::zero(); spec.dim_w];
                    for k in 0..lws.len() {
                        let j = c * CHUNK + k;
                        let xj = cur_ref.particle(j);
                        let b = stepper.prepare(spec, t, xj, y)?;
                        bs[k * dy..(k + 1) * dy].copy_from_slice(b);
                        lws[k] = cur_ref.log_weights[j] + (dot(b, dvt) - half * norm_sq(b) * dt);
                        let xn = &mut xs[k * d..(k + 1) * d];
                        xn.copy_from_slice(xj);
                        st[k].next_dw(&mut dw);
                        let atoms0 = st[k].atoms0_in_step(i);
                        stepper.advance(spec, dt, xn, dvt, &dw, atoms0, atoms1);
                    }
                    Ok(())
                })?;
            let (w, _) = cur.shifted_weights();
            let total: S = w.iter().copied().sum();
            for k in 0..dy {
                let s: S = w.iter().enumerate().map(|(j, &wj)| wj * drifts[j * dy + k]).sum();
                p_b[k] = s / total;
                dvbar[k] = dvt[k] - p_b[k] * dt;
            }
            innovation.dvbar.extend_from_slice(&dvbar);
        }

        summaries.push(summarize(i, &cur, resampled, &phis));
        let view = NodeView {
            spec,
            node: i,
            t,
            y,
            measure: &cur,
            step: (!last).then(|| StepInputs {
                dt,
                dvtilde: obs.dvtilde_step(i),
                dvbar: &dvbar,
                p_obs_drift: &p_b,
                atoms1: obs.atoms_in_step(i),
            }),
        };
        for o in observers.iter_mut() {
            o.observe(&view)?;
        }
        if last {
            break;
        }
        if cfg.keep_snapshots {
            snapshots.push(cur.clone());
        }

        std::mem::swap(&mut cur.particles, &mut next.x);
        std::mem::swap(&mut cur.log_weights, &mut next.lw);
        cur.time = grid.node(i + 1);
        check_degeneracy(&cur, i + 1)?;

        resampled = false;
        if cfg.mode == FilterMode::Fkk && cfg.resampling != Resampling::None && cur.ess().as_f64() < cfg.resample_threshold * m as f64 {
            let (w, max) = cur.shifted_weights();
            let wf: Vec<f64> = w.iter().map(|v| v.as_f64()).collect();
            let mut rng = StreamKey::new(key.seed, Purpose::Resampling, key.path, (i + 1) as u64).rng();
            resample_indices(cfg.resampling, &wf, &mut rng, &mut ancestors);
            let total: S = w.iter().copied().sum();
            for (j, &a) in ancestors.iter().enumerate() {
                next.x[j * d..(j + 1) * d].copy_from_slice(cur.particle(a));
            }
            std::mem::swap(&mut cur.particles, &mut next.x);
            cur.log_scale += max + (total / S::from_usize_lossy(m)).ln();
            cur.log_weights.iter_mut().for_each(|l| *l = S::zero());
            resampled = true;
            n_resamples += 1;
        }
    }
    if cfg.keep_snapshots {
        snapshots.push(cur.clone());
    }
    Ok(FilterOutput { mode: cfg.mode, summaries, innovation, snapshots, final_measure: cur, n_resamples })
}

fn summarize<S: Scalar, F: TestFunction<S>>(node: usize, mu: &WeightedEmpiricalMeasure<S>, resampled: bool, phis: &[F]) -> NodeSummary {
    let (mean, var) = mu.mean_var();
    NodeSummary {
        node,
        t: mu.time.as_f64(),
        mu_one: mu.mu_one().as_f64(),
        log_mu_one: mu.log_mu_one().as_f64(),
        ess: mu.ess().as_f64(),
        resampled,
        mean: mean.iter().map(|v| v.as_f64()).collect(),
        var: var.iter().map(|v| v.as_f64()).collect(),
        p_phi: phis.iter().map(|f| mu.p(f).as_f64()).collect(),
    }
}

fn check_degeneracy<S: Scalar>(mu: &WeightedEmpiricalMeasure<S>, node: usize) -> Result<(), FilterError> {
    let t = mu.time.as_f64();
    if let Some(j) = mu.log_weights.iter().position(|l| l.is_nan()) {
        return Err(FilterError::Degenerate { node, t, reason: format!("log-weight of particle {j} is NaN") });
    }
    if mu.log_weights.iter().all(|l| *l == S::neg_infinity()) {
        return Err(FilterError::Degenerate { node, t, reason: "every log-weight is -inf".into() });
    }
    if mu.max_log_weight() == S::infinity() {
        return Err(FilterError::Degenerate { node, t, reason: "a log-weight is +inf".into() });
    }
    if !all_finite(&mu.particles) {
        let j = mu.particles.iter().position(|v| !v.is_finite()).unwrap_or(0) / mu.dim;
        return Err(FilterError::Degenerate { node, t, reason: format!("particle {j} left the finite range") });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::girsanov::evolve_gamma_inv;
    use crate::model::test_functions::Builtin;
    use crate::model::zoo;
    use crate::noise::{observe_path, sample_particle_noise, TimeGrid};
    use crate::simulator::{simulate_from_key, simulate_signal_under_q, SchemeConfig};
    use std::collections::BTreeMap;

    fn model(name: &str, params: &[(&str, f64)]) -> ModelSpec<f64> {
        let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        zoo::build(name, &p).unwrap()
    }

    fn observation(spec: &ModelSpec<f64>, n_steps: usize, seed: u64) -> ObservationDecomposition<f64> {
        let grid = TimeGrid::new(spec.horizon, n_steps).unwrap();
        let path = simulate_from_key(spec, &grid, StreamKey::new(seed, Purpose::SystemNoise, 0, 0), &SchemeConfig::new(n_steps)).unwrap();
        observe_path(spec, &path).unwrap()
    }

    fn run(spec: &ModelSpec<f64>, obs: &ObservationDecomposition<f64>, cfg: &FilterConfig, seed: u64) -> FilterOutput<f64> {
        run_filter(spec, obs, cfg, &spec.initial, StreamKey::new(seed, Purpose::ParticleNoise, 0, 0), &mut []).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::new(1, FilterMode::Zakai).validate().is_err());
        assert!(FilterConfig { resampling: Resampling::Systematic, ..FilterConfig::new(10, FilterMode::Zakai) }.validate().is_err());
        assert!(FilterConfig { resample_threshold: 0.0, ..FilterConfig::new(10, FilterMode::Fkk) }.validate().is_err());
        assert!(FilterConfig::new(2, FilterMode::Fkk).validate().is_ok());
    }

    #[test]
    fn uninformative_observation_keeps_weights() {
        let spec = model("ou", &[("h", 0.0), ("x0_std", 1.0)]);
        let obs = observation(&spec, 50, 1);
        let out = run(&spec, &obs, &FilterConfig::new(64, FilterMode::Zakai), 2);
        assert!(out.final_measure.log_weights.iter().all(|&l| l == 0.0));
        assert!(out.summaries.iter().all(|s| s.ess == 64.0 && s.mu_one == 1.0));
        assert_eq!(out.innovation.dvbar, obs.dvtilde);
    }

    #[test]
    fn zakai_weights_are_likelihood_of_own_path() {
        let spec = model("ou_jumps", &[]);
        let obs = observation(&spec, 100, 3);
        let key = StreamKey::new(9, Purpose::ParticleNoise, 4, 0);
        let out = run_filter(&spec, &obs, &FilterConfig::new(40, FilterMode::Zakai), &spec.initial, key, &mut []).unwrap();
        for j in [0usize, 17, 39] {
            let mut x0 = [0.0];
            spec.initial.sample(&mut key.with_purpose(Purpose::ParticlePrior).with_particle(j as u64).rng(), &mut x0);
            let noise = sample_particle_noise(&spec, &obs.grid, key.with_particle(j as u64));
            let path = simulate_signal_under_q(&spec, &obs, &noise, &x0).unwrap();
            let log = evolve_gamma_inv(&spec, &path, &obs).unwrap();
            assert_eq!(out.final_measure.log_weights[j], *log.last().unwrap());
            assert_eq!(out.final_measure.particle(j), &path[path.len() - 1..]);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = model("ou_jumps", &[]);
        let obs = observation(&spec, 100, 5);
        let cfg = FilterConfig::new(600, FilterMode::Fkk);
        let a = run(&spec, &obs, &cfg, 1);
        let b = run(&spec, &obs, &cfg, 1);
        assert_eq!(a.final_measure, b.final_measure);
        assert_eq!(a.summaries, b.summaries);
        let c = run(&spec, &obs, &cfg, 2);
        assert_ne!(a.final_measure, c.final_measure);
    }

    #[test]
    fn normalized_filter_sums_to_one_and_tracks_mass_through_resampling() {
        let spec = model("ou_jumps", &[("h", 3.0)]);
        let obs = observation(&spec, 200, 7);
        let fkk = run(&spec, &obs, &FilterConfig { resample_threshold: 0.9, ..FilterConfig::new(2000, FilterMode::Fkk) }, 1);
        assert!(fkk.n_resamples > 0);
        assert!(fkk.summaries.iter().any(|s| s.resampled));
        assert!(fkk.summaries.iter().all(|s| s.p_phi[0] == 1.0));
        let zakai = run(&spec, &obs, &FilterConfig::new(2000, FilterMode::Zakai), 1);
        let (a, b) = (fkk.summaries.last().unwrap().log_mu_one, zakai.summaries.last().unwrap().log_mu_one);
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
    }

    #[test]
    fn mass_follows_observation_drift() {
        // μ(1) increments by μ(B)ΔṼ up to O(Δt) per step.
        let spec = model("ou", &[("h", 1.0), ("x0", 0.5)]);
        let obs = observation(&spec, 1000, 11);
        let out = run_filter(
            &spec,
            &obs,
            &FilterConfig { keep_snapshots: true, ..FilterConfig::new(200, FilterMode::Zakai) },
            &spec.initial,
            StreamKey::new(1, Purpose::ParticleNoise, 0, 0),
            &mut [],
        )
        .unwrap();
        let h = Builtin::coordinate(1, 0);
        let dt = obs.grid.dt();
        for i in 0..obs.grid.n_steps {
            let (a, b) = (&out.snapshots[i], &out.snapshots[i + 1]);
            let predicted = a.mu(&h) * obs.dvtilde_step(i)[0];
            let err = b.mu_one() - a.mu_one() - predicted;
            assert!(err.abs() < 20.0 * dt * a.mu_one(), "step {i}: {err}");
        }
    }

    #[test]
    fn constant_test_function_has_zero_residual() {
        let spec = model("ou_jumps", &[]);
        let obs = observation(&spec, 200, 13);
        let one = Builtin::one(1);
        let mut tracker = ResidualTracker::new(FilterMode::Fkk, vec![&one]);
        run_filter(
            &spec,
            &obs,
            &FilterConfig::new(300, FilterMode::Fkk),
            &spec.initial,
            StreamKey::new(1, Purpose::ParticleNoise, 0, 0),
            &mut [&mut tracker],
        )
        .unwrap();
        let r = &tracker.reports()[0];
        assert!(r.max_abs < 1e-12, "{}", r.max_abs);
        assert_eq!(r.series.len(), 201);
    }

    #[test]
    fn trivial_models_have_zero_zakai_residual() {
        for spec in [model("zero", &[]), model("ou", &[("h", 0.0), ("x0_std", 1.0)])] {
            let obs = observation(&spec, 100, 3);
            let one = Builtin::one(1);
            let mut tracker = ResidualTracker::new(FilterMode::Zakai, vec![&one]);
            run_filter(
                &spec,
                &obs,
                &FilterConfig::new(50, FilterMode::Zakai),
                &spec.initial,
                StreamKey::new(1, Purpose::ParticleNoise, 0, 0),
                &mut [&mut tracker],
            )
            .unwrap();
            assert_eq!(tracker.reports()[0].max_abs, 0.0);
        }
        let spec = model("zero", &[]);
        let obs = observation(&spec, 100, 3);
        let phis = builtin_test_functions::<f64>(1);
        let refs: Vec<&Builtin<f64>> = phis.iter().collect();
        let mut tracker = ResidualTracker::new(FilterMode::Zakai, refs);
        run_filter(
            &spec,
            &obs,
            &FilterConfig::new(50, FilterMode::Zakai),
            &spec.initial,
            StreamKey::new(1, Purpose::ParticleNoise, 0, 0),
            &mut [&mut tracker],
        )
        .unwrap();
        assert!(tracker.reports().iter().all(|r| r.max_abs == 0.0));
    }

    #[test]
    fn without_observation_drift_fkk_and_zakai_residuals_agree() {
        let spec = model("ou_jumps", &[("h", 0.0)]);
        let obs = observation(&spec, 200, 17);
        let cfg = FilterConfig { keep_snapshots: true, ..FilterConfig::new(500, FilterMode::Zakai) };
        let out = run(&spec, &obs, &cfg, 4);
        let phis = builtin_test_functions::<f64>(1);
        let refs: Vec<&Builtin<f64>> = phis.iter().collect();
        let z = zakai_residual(&spec, &obs, &out, &refs).unwrap();
        let f = fkk_residual(&spec, &obs, &out, &refs).unwrap();
        for (a, b) in z.iter().zip(&f) {
            for (u, v) in a.series.iter().zip(&b.series) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn online_and_replayed_residuals_match() {
        let spec = model("ou_jumps", &[]);
        let obs = observation(&spec, 100, 19);
        let phis = builtin_test_functions::<f64>(1);
        let refs: Vec<&Builtin<f64>> = phis.iter().collect();
        let mut tracker = ResidualTracker::new(FilterMode::Zakai, refs.clone());
        let cfg = FilterConfig { keep_snapshots: true, ..FilterConfig::new(300, FilterMode::Zakai) };
        let out =
            run_filter(&spec, &obs, &cfg, &spec.initial, StreamKey::new(1, Purpose::ParticleNoise, 0, 0), &mut [&mut tracker]).unwrap();
        let replayed = zakai_residual(&spec, &obs, &out, &refs).unwrap();
        assert_eq!(tracker.reports(), replayed);
        let no_snap = run(&spec, &obs, &FilterConfig::new(300, FilterMode::Zakai), 1);
        assert!(zakai_residual(&spec, &obs, &no_snap, &refs).is_err());
    }

    #[test]
    fn resampling_is_unbiased() {
        let spec = model("ou_jumps", &[("h", 3.0)]);
        let obs = observation(&spec, 100, 23);
        let out = run(&spec, &obs, &FilterConfig::new(500, FilterMode::Zakai), 1);
        let mu = &out.final_measure;
        let phi = Builtin::Sine { dim: 1, coord: 0, freq: 1.0 };
        let target = mu.p(&phi);
        let (w, _) = mu.shifted_weights();
        for scheme in [Resampling::Systematic, Resampling::Multinomial] {
            let mut idx = Vec::new();
            let vals: Vec<f64> = (0..2000)
                .map(|r| {
                    let mut rng = StreamKey::new(r, Purpose::Resampling, 0, 0).rng();
                    resample_indices(scheme, &w, &mut rng, &mut idx);
                    idx.iter().map(|&i| phi.value(mu.particle(i))).sum::<f64>() / idx.len() as f64
                })
                .collect();
            let (mean, se) = crate::simulator::mean_se(vals);
            assert!((mean - target).abs() <= 3.0 * se.max(1e-12), "{scheme:?}: {mean} vs {target} (se {se})");
        }
    }

    #[test]
    fn degeneracy_is_reported() {
        let mut mu = WeightedEmpiricalMeasure::uniform(1, 0.5, vec![0.0, 1.0]);
        mu.log_weights = vec![f64::NEG_INFINITY; 2];
        assert!(matches!(check_degeneracy(&mu, 3), Err(FilterError::Degenerate { node: 3, .. })));
        mu.log_weights = vec![0.0, f64::NAN];
        assert!(check_degeneracy(&mu, 3).is_err());
        mu.log_weights = vec![0.0, 0.0];
        mu.particles[1] = f64::INFINITY;
        assert!(check_degeneracy(&mu, 3).is_err());
    }

    #[test]
    fn single_precision_runs() {
        let p = BTreeMap::new();
        let spec: ModelSpec<f32> = zoo::build("ou_jumps", &p).unwrap();
        let grid = TimeGrid::new(1.0f32, 100).unwrap();
        let path = simulate_from_key(&spec, &grid, StreamKey::new(1, Purpose::SystemNoise, 0, 0), &SchemeConfig::new(100)).unwrap();
        let obs = observe_path(&spec, &path).unwrap();
        let out = run_filter(
            &spec,
            &obs,
            &FilterConfig::new(200, FilterMode::Fkk),
            &spec.initial,
            StreamKey::new(1, Purpose::ParticleNoise, 0, 0),
            &mut [],
        )
        .unwrap();
        assert!(out.summaries.iter().all(|s| s.mean[0].is_finite() && (s.p_phi[0] - 1.0).abs() < 1e-6));
    }
}
