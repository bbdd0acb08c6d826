//! Euler schemes for the system under the physical measure and for signal
//! particles under the reference measure.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CoefficientValues, JumpKind, ModelError, ModelSpec};
use crate::noise::{sample_noise, JumpAtom, NoiseError, NoiseRecord, ObservationDecomposition, SamplePath, TimeGrid};
use crate::rng::{Purpose, StreamKey};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("path rejected: state not finite at node {node} (t={t})")]
    NonFinite { node: usize, t: f64 },
    #[error("path left the ball of radius {radius} at node {node} (t={t})")]
    Exited { node: usize, t: f64, radius: f64 },
    #[error("scheme has {scheme} steps but the noise record has {noise}")]
    StepMismatch { scheme: usize, noise: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    Length { what: &'static str, expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub n_steps: usize,
    /// Insert jump times as extra nodes, with Brownian-bridge sub-increments.
    #[serde(default)]
    pub jump_adapted: bool,
    /// Reject paths leaving this ball.
    #[serde(default)]
    pub clip_radius: Option<f64>,
}

impl SchemeConfig {
    pub fn new(n_steps: usize) -> Self {
        Self { n_steps, jump_adapted: false, clip_radius: None }
    }

    pub fn grid<S: Scalar>(&self, horizon: S) -> Result<TimeGrid<S>, NoiseError> {
        TimeGrid::new(horizon, self.n_steps)
    }
}

/// Per-path scratch space for the Euler steps.
#[derive(Clone, Debug)]
struct Workspace<S> {
    z: Vec<S>,
    coeffs: CoefficientValues<S>,
    comp: Vec<S>,
    jump: Vec<S>,
    m1: Vec<S>,
}

impl<S: Scalar> Workspace<S> {
    fn new(spec: &ModelSpec<S>) -> Self {
        Self {
            z: vec![S::zero(); spec.dim_z()],
            coeffs: CoefficientValues::for_spec(spec),
            comp: vec![S::zero(); spec.dim_x],
            jump: vec![S::zero(); spec.dim_x],
            m1: spec.nu1.first_moment(),
        }
    }

    fn load(&mut self, spec: &ModelSpec<S>, t: S, x: &[S], y: &[S]) -> Result<(), ModelError> {
        let d = x.len();
        self.z[..d].copy_from_slice(x);
        self.z[d..].copy_from_slice(y);
        spec.eval_coefficients_into(t, &self.z, &mut self.coeffs)?;
        self.comp.iter_mut().for_each(|c| *c = S::zero());
        spec.add_jump_compensator(&self.z, &mut self.comp);
        Ok(())
    }

    /// Adds the jump of `which` for `mark`, evaluated at the loaded state, to `x`.
    #[inline]
    fn add_jump(&mut self, spec: &ModelSpec<S>, t: S, which: JumpKind, mark: &[S], x: &mut [S]) {
        spec.jump_field(which).eval_into(t, &self.z, mark, &mut self.jump);
        for (xi, &j) in x.iter_mut().zip(&self.jump) {
            *xi += j;
        }
    }

    /// Continuous part of a P-step of length `h` from the loaded state.
    fn continuous(&self, h: S, dw: &[S], dv: &[S], x: &mut [S], y: &mut [S], dvtilde: &mut [S]) {
        let c = &self.coeffs;
        for (i, xi) in x.iter_mut().enumerate() {
            let mut inc = (c.b[i] - self.comp[i]) * h;
            for (k, &w) in dw.iter().enumerate() {
                inc += c.sigma.get(i, k) * w;
            }
            for (k, &v) in dv.iter().enumerate() {
                inc += c.rho.get(i, k) * v;
            }
            *xi += inc;
        }
        for k in 0..y.len() {
            let cont = c.obs_b[k] * h + dv[k];
            dvtilde[k] += cont;
            y[k] += cont - self.m1[k] * h;
        }
    }
}

fn check_state<S: Scalar>(x: &[S], y: &[S], node: usize, t: S, clip: Option<f64>) -> Result<(), SimError> {
    if !crate::scalar::all_finite(x) || !crate::scalar::all_finite(y) {
        return Err(SimError::NonFinite { node, t: t.as_f64() });
    }
    if let Some(radius) = clip {
        let r2 = crate::scalar::norm_sq(x) + crate::scalar::norm_sq(y);
        if r2.as_f64() > radius * radius {
            return Err(SimError::Exited { node, t: t.as_f64(), radius });
        }
    }
    Ok(())
}

/// Integrates the system on the noise's grid from `(x0, y0)`.
///
/// Per step, with coefficients at the step start:
/// `ΔX = bΔt + σΔW + ρΔV + Σ η + Σ ξ − Δt(∫η dν₀ + ∫ξ dν₁)` and
/// `ΔY = BΔt + ΔV + Σ marks − Δt ∫ mark ν₁`. With `jump_adapted`, each step is
/// split at its atoms and jump coefficients see the state just before the jump.
pub fn simulate_system<S: Scalar>(
    spec: &ModelSpec<S>,
    noise: &NoiseRecord<S>,
    x0: &[S],
    y0: &[S],
    scheme: &SchemeConfig,
) -> Result<SamplePath<S>, SimError> {
    let grid = noise.grid;
    if scheme.n_steps != grid.n_steps {
        return Err(SimError::StepMismatch { scheme: scheme.n_steps, noise: grid.n_steps });
    }
    let (d, dy) = (spec.dim_x, spec.dim_y);
    if x0.len() != d {
        return Err(SimError::Length { what: "x0", expected: d, found: x0.len() });
    }
    if y0.len() != dy {
        return Err(SimError::Length { what: "y0", expected: dy, found: y0.len() });
    }
    let n = grid.n_steps;
    let dt = grid.dt();
    let mut xs = Vec::with_capacity((n + 1) * d);
    let mut ys = Vec::with_capacity((n + 1) * dy);
    let mut dvtilde = vec![S::zero(); n * dy];
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    check_state(&x, &y, 0, S::zero(), scheme.clip_radius)?;
    xs.extend_from_slice(&x);
    ys.extend_from_slice(&y);
    let mut ws = Workspace::new(spec);
    let mut bridge = noise.key.with_purpose(Purpose::BrownianBridge).rng();
    let mut events: Vec<(S, JumpKind, &[S])> = Vec::new();
    let mut dw_rest = vec![S::zero(); spec.dim_w];
    let mut dv_rest = vec![S::zero(); dy];
    let mut dw_sub = vec![S::zero(); spec.dim_w];
    let mut dv_sub = vec![S::zero(); dy];
    for i in 0..n {
        let t = grid.node(i);
        let atoms0 = noise.atoms_in_step(JumpKind::Eta, i);
        let atoms1 = noise.atoms_in_step(JumpKind::Xi, i);
        let dvt = &mut dvtilde[i * dy..(i + 1) * dy];
        if !scheme.jump_adapted || (atoms0.is_empty() && atoms1.is_empty()) {
            ws.load(spec, t, &x, &y)?;
            ws.continuous(dt, noise.dw_step(i), noise.dv_step(i), &mut x, &mut y, dvt);
            for a in atoms0 {
                ws.add_jump(spec, t, JumpKind::Eta, &a.mark, &mut x);
            }
            for a in atoms1 {
                ws.add_jump(spec, t, JumpKind::Xi, &a.mark, &mut x);
                for (yk, &m) in y.iter_mut().zip(&a.mark) {
                    *yk += m;
                }
            }
        } else {
            events.clear();
            events.extend(atoms0.iter().map(|a| (a.time, JumpKind::Eta, a.mark.as_slice())));
            events.extend(atoms1.iter().map(|a| (a.time, JumpKind::Xi, a.mark.as_slice())));
            events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite atom times"));
            dw_rest.copy_from_slice(noise.dw_step(i));
            dv_rest.copy_from_slice(noise.dv_step(i));
            let end = grid.node(i + 1);
            let mut s = t;
            for e in 0..=events.len() {
                let stop = if e < events.len() { events[e].0 } else { end };
                let h = (stop - s).max(S::zero());
                let remaining = end - s;
                let last = e == events.len();
                bridge_split(&mut bridge, h, remaining, last, &mut dw_rest, &mut dw_sub);
                bridge_split(&mut bridge, h, remaining, last, &mut dv_rest, &mut dv_sub);
                ws.load(spec, s, &x, &y)?;
                ws.continuous(h, &dw_sub, &dv_sub, &mut x, &mut y, dvt);
                if !last {
                    let (tau, which, mark) = events[e];
                    ws.load(spec, tau, &x, &y)?;
                    ws.add_jump(spec, tau, which, mark, &mut x);
                    if which == JumpKind::Xi {
                        for (yk, &m) in y.iter_mut().zip(mark) {
                            *yk += m;
                        }
                    }
                }
                s = stop;
            }
        }
        check_state(&x, &y, i + 1, grid.node(i + 1), scheme.clip_radius)?;
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
    }
    Ok(SamplePath { grid, dim_x: d, dim_y: dy, x: xs, y: ys, dvtilde, noise: noise.clone() })
}

/// Splits the remaining increment `rest` over a remaining time `remaining`
/// into the part on the first `h` (into `sub`) by Brownian-bridge sampling.
fn bridge_split<S: Scalar, R: Rng + ?Sized>(rng: &mut R, h: S, remaining: S, last: bool, rest: &mut [S], sub: &mut [S]) {
    for (r, s) in rest.iter_mut().zip(sub.iter_mut()) {
        if last || !(remaining > S::zero()) {
            *s = *r;
        } else {
            let frac = h / remaining;
            let sd = (h * (remaining - h) / remaining).max(S::zero()).sqrt();
            let z: f64 = StandardNormal.sample(rng);
            *s = frac * *r + sd * S::lit(z);
        }
        *r -= *s;
    }
}

/// Samples the system noise and initial state for path `key.path` and
/// integrates. The initial signal comes from the model's prior stream.
pub fn simulate_from_key<S: Scalar>(
    spec: &ModelSpec<S>,
    grid: &TimeGrid<S>,
    key: StreamKey,
    scheme: &SchemeConfig,
) -> Result<SamplePath<S>, SimError> {
    let noise = sample_noise(spec, grid, key);
    let mut x0 = vec![S::zero(); spec.dim_x];
    spec.initial.sample_x(&mut key.with_purpose(Purpose::Prior).rng(), &mut x0);
    simulate_system(spec, &noise, &x0, &spec.initial.y0, scheme)
}

/// One reference-measure Euler step for a signal particle. Coefficients are
/// evaluated once per step by [`SignalStepper::prepare`]; the observation
/// drift `B` at that point is then available for the weight update.
#[derive(Clone, Debug)]
pub struct SignalStepper<S> {
    ws: Workspace<S>,
    t: S,
}

impl<S: Scalar> SignalStepper<S> {
    pub fn new(spec: &ModelSpec<S>) -> Self {
        Self { ws: Workspace::new(spec), t: S::zero() }
    }

    /// Loads the coefficients at `(t, x, y)` and returns `B` there.
    #[inline]
    pub fn prepare(&mut self, spec: &ModelSpec<S>, t: S, x: &[S], y: &[S]) -> Result<&[S], ModelError> {
        self.t = t;
        self.ws.load(spec, t, x, y)?;
        Ok(&self.ws.coeffs.obs_b)
    }

    pub fn coefficients(&self) -> &CoefficientValues<S> {
        &self.ws.coeffs
    }

    /// `ΔX = (b − ρB)Δt + σΔW + ρΔṼ + Σ η(own atoms) + Σ ξ(observed atoms)
    /// − Δt(∫η dν₀ + ∫ξ dν₁)` from the prepared point.
    #[inline]
    pub fn advance(
        &mut self,
        spec: &ModelSpec<S>,
        dt: S,
        x: &mut [S],
        dvtilde: &[S],
        dw: &[S],
        atoms0: &[JumpAtom<S>],
        atoms1: &[JumpAtom<S>],
    ) {
        let c = &self.ws.coeffs;
        for (i, xi) in x.iter_mut().enumerate() {
            let mut inc = (c.b[i] - self.ws.comp[i]) * dt;
            for (k, &w) in dw.iter().enumerate() {
                inc += c.sigma.get(i, k) * w;
            }
            for (k, &v) in dvtilde.iter().enumerate() {
                let r = c.rho.get(i, k);
                inc += r * (v - c.obs_b[k] * dt);
            }
            *xi += inc;
        }
        let t = self.t;
        for a in atoms0 {
            self.ws.add_jump(spec, t, JumpKind::Eta, &a.mark, x);
        }
        for a in atoms1 {
            self.ws.add_jump(spec, t, JumpKind::Xi, &a.mark, x);
        }
    }
}

/// Signal path (flat, node-major) of one particle driven by its own `W`, `N₀`
/// from `particle_noise` and the observed `ΔṼ`, `N₁` from `obs`.
pub fn simulate_signal_under_q<S: Scalar>(
    spec: &ModelSpec<S>,
    obs: &ObservationDecomposition<S>,
    particle_noise: &NoiseRecord<S>,
    x0: &[S],
) -> Result<Vec<S>, SimError> {
    let grid = obs.grid;
    if particle_noise.grid.n_steps != grid.n_steps {
        return Err(SimError::StepMismatch { scheme: grid.n_steps, noise: particle_noise.grid.n_steps });
    }
    let d = spec.dim_x;
    let dt = grid.dt();
    let mut stepper = SignalStepper::new(spec);
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity((grid.n_steps + 1) * d);
    out.extend_from_slice(&x);
    for i in 0..grid.n_steps {
        stepper.prepare(spec, grid.node(i), &x, obs.y_at(i))?;
        stepper.advance(
            spec,
            dt,
            &mut x,
            obs.dvtilde_step(i),
            particle_noise.dw_step(i),
            particle_noise.atoms_in_step(JumpKind::Eta, i),
            obs.atoms_in_step(i),
        );
        if !crate::scalar::all_finite(&x) {
            return Err(SimError::NonFinite { node: i + 1, t: grid.node(i + 1).as_f64() });
        }
        out.extend_from_slice(&x);
    }
    Ok(out)
}

/// Which part of the state enters `sup_t |·|^p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentTarget {
    /// The signal `X` alone.
    Signal,
    /// `Z = (X, Y)`, which always carries the observation noise.
    State,
}

/// Monte-Carlo estimate of `E sup_t |X_t|^p` or `E sup_t |Z_t|^p` at `Δt` and
/// at `Δt/2`, both driven by the same noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub target: MomentTarget,
    pub p: f64,
    pub n_paths: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub refined: f64,
    pub refined_std_error: f64,
    /// `refined / estimate`; 1 when both are zero.
    pub ratio: f64,
    /// Paths rejected at either resolution.
    pub rejected: usize,
    /// `|ratio − 1| ≤ 0.1` and no rejections.
    pub stable: bool,
}

pub const MOMENT_RATIO_TOLERANCE: f64 = 0.1;

pub fn estimate_moment_bound<S: Scalar>(
    spec: &ModelSpec<S>,
    target: MomentTarget,
    p: f64,
    n_paths: usize,
    scheme: &SchemeConfig,
    seed: u64,
) -> Result<MomentEstimate, SimError> {
    let fine_scheme = SchemeConfig { n_steps: scheme.n_steps * 2, ..*scheme };
    let fine_grid = fine_scheme.grid(spec.horizon)?;
    let sup = |path: &SamplePath<S>| -> f64 {
        (0..=path.grid.n_steps)
            .map(|i| {
                let mut r2 = crate::scalar::norm_sq(path.x_at(i));
                if target == MomentTarget::State {
                    r2 += crate::scalar::norm_sq(path.y_at(i));
                }
                r2.as_f64().powf(p / 2.0)
            })
            .fold(0.0, f64::max)
    };
    let samples: Vec<Option<(f64, f64)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|j| {
            let key = StreamKey::new(seed, Purpose::SystemNoise, j, 0);
            let fine = sample_noise(spec, &fine_grid, key);
            let coarse = fine.coarsen(2).expect("even step count");
            let mut x0 = vec![S::zero(); spec.dim_x];
            spec.initial.sample_x(&mut key.with_purpose(Purpose::Prior).rng(), &mut x0);
            let y0 = &spec.initial.y0;
            let a = simulate_system(spec, &coarse, &x0, y0, scheme).ok()?;
            let b = simulate_system(spec, &fine, &x0, y0, &fine_scheme).ok()?;
            Some((sup(&a), sup(&b)))
        })
        .collect();
    let ok: Vec<(f64, f64)> = samples.iter().flatten().copied().collect();
    let rejected = n_paths - ok.len();
    let (estimate, std_error) = mean_se(ok.iter().map(|s| s.0));
    let (refined, refined_std_error) = mean_se(ok.iter().map(|s| s.1));
    let ratio = if estimate == 0.0 && refined == 0.0 { 1.0 } else { refined / estimate };
    let stable = rejected == 0 && ratio.is_finite() && (ratio - 1.0).abs() <= MOMENT_RATIO_TOLERANCE;
    Ok(MomentEstimate { target, p, n_paths, estimate, std_error, refined, refined_std_error, ratio, rejected, stable })
}

/// Sample mean and its standard error.
pub fn mean_se<I: IntoIterator<Item = f64>>(values: I) -> (f64, f64) {
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    if n < 2 {
        return (if n == 1 { mean } else { f64::NAN }, if n == 1 { 0.0 } else { f64::NAN });
    }
    (mean, (m2 / (n - 1) as f64 / n as f64).sqrt())
}
