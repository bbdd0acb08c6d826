use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FilterError, FilterMode, FilterObserver, FilterOutput, NodeView};
use crate::model::test_functions::TestFunction;
use crate::model::{JumpKind, ModelSpec};
use crate::noise::ObservationDecomposition;
use crate::operators::{JumpOperator, PointOperators, PointTerms};
use crate::scalar::Scalar;

const CHUNK: usize = 256;

/// Residual of the filtering equation for one test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub phi: String,
    pub mode: FilterMode,
    /// `R` at every node; `R₀ = 0`.
    pub series: Vec<f64>,
    pub max_abs: f64,
    pub argmax: usize,
    /// `sup|φ|`, times `max_t μ_t(1)` in zakai mode.
    pub scale: f64,
    /// Accumulated right-hand-side terms at the last node.
    pub drift_total: f64,
    pub martingale_total: f64,
    pub jump_total: f64,
}

impl ResidualReport {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_abs / self.scale
        } else {
            self.max_abs
        }
    }
}

/// Accumulates the right-hand side of the Zakai (or FKK) equation with
/// left-point stochastic integrals, as an observer of a filter run.
pub struct ResidualTracker<'f, S, F: ?Sized> {
    mode: FilterMode,
    phis: Vec<&'f F>,
    first: Vec<f64>,
    drift: Vec<f64>,
    martingale: Vec<f64>,
    jump: Vec<f64>,
    series: Vec<Vec<f64>>,
    max_mu_one: f64,
    _scalar: std::marker::PhantomData<S>,
}

impl<'f, S: Scalar, F: TestFunction<S> + ?Sized> ResidualTracker<'f, S, F> {
    pub fn new(mode: FilterMode, phis: Vec<&'f F>) -> Self {
        let n = phis.len();
        Self {
            mode,
            phis,
            first: vec![0.0; n],
            drift: vec![0.0; n],
            martingale: vec![0.0; n],
            jump: vec![0.0; n],
            series: vec![Vec::new(); n],
            max_mu_one: 0.0,
            _scalar: std::marker::PhantomData,
        }
    }

    pub fn reports(&self) -> Vec<ResidualReport> {
        self.phis
            .iter()
            .enumerate()
            .map(|(p, phi)| {
                let series = &self.series[p];
                let (argmax, max_abs) =
                    series.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
                let bound = phi.bound().as_f64();
                let scale = match self.mode {
                    FilterMode::Zakai => bound * self.max_mu_one,
                    FilterMode::Fkk => bound,
                };
                ResidualReport {
                    phi: phi.name(),
                    mode: self.mode,
                    series: series.clone(),
                    max_abs,
                    argmax,
                    scale,
                    drift_total: self.drift[p],
                    martingale_total: self.martingale[p],
                    jump_total: self.jump[p],
                }
            })
            .collect()
    }
}

/// Layout of one test function's weighted sums: value, `𝓛φ`, `𝓜φ` (dy),
/// `∫Jηφ`, `∫Jξφ`, `∫Iξφ`, then `Iξφ` at each observed atom.
struct Layout {
    dy: usize,
    atoms: usize,
}

impl Layout {
    fn width(&self) -> usize {
        5 + self.dy + self.atoms
    }
}

impl<'f, S: Scalar, F: TestFunction<S> + ?Sized> FilterObserver<S> for ResidualTracker<'f, S, F> {
    fn observe(&mut self, view: &NodeView<'_, S>) -> Result<(), FilterError> {
        let spec = view.spec;
        let mu = view.measure;
        let dy = spec.dim_y;
        let atoms = view.step.map(|s| s.atoms1).unwrap_or(&[]);
        let layout = Layout { dy, atoms: atoms.len() };
        let width = layout.width();
        let n_phi = self.phis.len();
        let (weights, max) = mu.shifted_weights();
        let need_terms = view.step.is_some();

        let phis = &self.phis;
        let partials: Vec<Vec<S>> = weights
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, w)| -> Result<Vec<S>, FilterError> {
                let mut acc = vec![S::zero(); n_phi * width];
                let mut ops = PointOperators::new(spec);
                let mut terms = PointTerms::new(dy);
                for (k, &wj) in w.iter().enumerate() {
                    let j = c * CHUNK + k;
                    let x = mu.particle(j);
                    if !need_terms {
                        for (p, phi) in phis.iter().enumerate() {
                            acc[p * width] += wj * phi.value(x);
                        }
                        continue;
                    }
                    ops.at(spec, view.t, x, view.y)?;
                    for (p, phi) in phis.iter().enumerate() {
                        ops.residual_terms(spec, *phi, &mut terms);
                        let a = &mut acc[p * width..(p + 1) * width];
                        a[0] += wj * terms.value;
                        a[1] += wj * terms.l;
                        for k in 0..dy {
                            a[2 + k] += wj * terms.m[k];
                        }
                        a[2 + dy] += wj * terms.j_eta;
                        a[3 + dy] += wj * terms.j_xi;
                        a[4 + dy] += wj * terms.i_xi;
                        for (n, atom) in atoms.iter().enumerate() {
                            a[5 + dy + n] += wj * ops.jump_op(spec, *phi, &atom.mark, JumpKind::Xi, JumpOperator::I);
                        }
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_, _>>()?;
        let mut sums = vec![0.0f64; n_phi * width];
        for part in &partials {
            for (s, v) in sums.iter_mut().zip(part) {
                *s += v.as_f64();
            }
        }
        let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
        // μ = sums · factor; P = sums / total.
        let factor = match self.mode {
            FilterMode::Zakai => (max + mu.log_scale).as_f64().exp() / mu.len() as f64,
            FilterMode::Fkk => 1.0 / total,
        };
        self.max_mu_one = self.max_mu_one.max((max + mu.log_scale).as_f64().exp() * total / mu.len() as f64);

        for p in 0..n_phi {
            let a: Vec<f64> = sums[p * width..(p + 1) * width].iter().map(|v| v * factor).collect();
            if view.node == 0 {
                self.first[p] = a[0];
            }
            let accumulated = self.drift[p] + self.martingale[p] + self.jump[p];
            self.series[p].push(a[0] - self.first[p] - accumulated);
            let Some(step) = view.step else { continue };
            let dt = step.dt.as_f64();
            self.drift[p] += (a[1] + a[2 + dy] + a[3 + dy]) * dt;
            let mut mart = 0.0;
            for k in 0..dy {
                mart += match self.mode {
                    FilterMode::Zakai => a[2 + k] * step.dvtilde[k].as_f64(),
                    FilterMode::Fkk => (a[2 + k] - a[0] * step.p_obs_drift[k].as_f64()) * step.dvbar[k].as_f64(),
                };
            }
            self.martingale[p] += mart;
            let observed: f64 = a[5 + dy..].iter().sum();
            self.jump[p] += observed - dt * a[4 + dy];
        }
        Ok(())
    }
}

fn replay<S: Scalar, F: TestFunction<S> + ?Sized>(
    spec: &ModelSpec<S>,
    obs: &ObservationDecomposition<S>,
    output: &FilterOutput<S>,
    phis: &[&F],
    mode: FilterMode,
) -> Result<Vec<ResidualReport>, FilterError> {
    let grid = obs.grid;
    if output.snapshots.len() != grid.n_steps + 1 {
        return Err(FilterError::Config(format!(
            "residuals need a snapshot at every node ({} expected, {} kept); enable keep_snapshots",
            grid.n_steps + 1,
            output.snapshots.len()
        )));
    }
    let mut tracker = ResidualTracker::new(mode, phis.to_vec());
    let dy = spec.dim_y;
    for (i, mu) in output.snapshots.iter().enumerate() {
        let last = i == grid.n_steps;
        let (dvbar, p_b) = if last {
            (&[][..], Vec::new())
        } else {
            let dvbar = output.innovation.step(i);
            let dt = grid.dt();
            let p_b = (0..dy).map(|k| (obs.dvtilde_step(i)[k] - dvbar[k]) / dt).collect();
            (dvbar, p_b)
        };
        let view = NodeView {
            spec,
            node: i,
            t: grid.node(i),
            y: obs.y_at(i),
            measure: mu,
            step: (!last).then(|| super::StepInputs {
                dt: grid.dt(),
                dvtilde: obs.dvtilde_step(i),
                dvbar,
                p_obs_drift: &p_b,
                atoms1: obs.atoms_in_step(i),
            }),
        };
        tracker.observe(&view)?;
    }
    Ok(tracker.reports())
}

/// Zakai residual from a zakai-mode run that kept its snapshots.
pub fn zakai_residual<S: Scalar, F: TestFunction<S> + ?Sized>(
    spec: &ModelSpec<S>,
    obs: &ObservationDecomposition<S>,
    output: &FilterOutput<S>,
    phis: &[&F],
) -> Result<Vec<ResidualReport>, FilterError> {
    if output.mode != FilterMode::Zakai || output.n_resamples > 0 {
        return Err(FilterError::Config("zakai residual needs a zakai-mode run without resampling".into()));
    }
    replay(spec, obs, output, phis, FilterMode::Zakai)
}

/// FKK residual from a run that kept its snapshots.
pub fn fkk_residual<S: Scalar, F: TestFunction<S> + ?Sized>(
    spec: &ModelSpec<S>,
    obs: &ObservationDecomposition<S>,
    output: &FilterOutput<S>,
    phis: &[&F],
) -> Result<Vec<ResidualReport>, FilterError> {
    replay(spec, obs, output, phis, FilterMode::Fkk)
}
