use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::model::{CoefficientValues, ModelError, ModelSpec};
use crate::noise::ObservationDecomposition;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GridError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("grid oracle needs a one-dimensional signal and observation, got d = {dim_x}, d' = {dim_y}")]
    Dimension { dim_x: usize, dim_y: usize },
    #[error("grid oracle needs {0}")]
    Unsupported(&'static str),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("explicit step unstable at x = {x}: Courant number {number:.3} > 1 (increase substeps or dx)")]
    Courant { x: f64, number: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    /// Explicit sub-steps of the deterministic part per time step.
    pub substeps: usize,
}

impl GridConfig {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_cells).map(|i| self.x_min + (i as f64 + 0.5) * dx).collect()
    }

    fn validate(&self) -> Result<(), GridError> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(GridError::Mesh(format!("need x_min < x_max, got [{}, {}]", self.x_min, self.x_max)));
        }
        if self.n_cells < 3 || self.substeps == 0 {
            return Err(GridError::Mesh("need n_cells >= 3 and substeps >= 1".into()));
        }
        Ok(())
    }
}

/// Unnormalized cell masses at every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridZakaiOutput {
    pub centers: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
}

impl GridZakaiOutput {
    pub fn total_mass(&self, node: usize) -> f64 {
        self.masses[node].iter().sum()
    }

    /// `μ(x)`.
    pub fn first_moment(&self, node: usize) -> f64 {
        self.masses[node].iter().zip(&self.centers).map(|(q, x)| q * x).sum()
    }

    pub fn mean(&self, node: usize) -> f64 {
        self.first_moment(node) / self.total_mass(node)
    }

    pub fn variance(&self, node: usize) -> f64 {
        let m = self.mean(node);
        let s: f64 = self.masses[node].iter().zip(&self.centers).map(|(q, x)| q * (x - m) * (x - m)).sum();
        s / self.total_mass(node)
    }
}

/// Moves every cell's mass by `shift`, splitting it between the two nearest
/// cells; mass pushed past either end stays in the end cell.
pub fn shift_masses(q: &[f64], shift: f64, dx: f64, out: &mut [f64]) {
    let n = q.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    let cells = shift / dx;
    let whole = cells.floor();
    let frac = cells - whole;
    let whole = whole as i64;
    for (i, &m) in q.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let lo = (i as i64 + whole).clamp(0, n as i64 - 1) as usize;
        let hi = (i as i64 + whole + 1).clamp(0, n as i64 - 1) as usize;
        out[lo] += m * (1.0 - frac);
        out[hi] += m * frac;
    }
}

struct Mesh<'a> {
    cfg: &'a GridConfig,
    centers: Vec<f64>,
    dx: f64,
}

/// Splitting scheme for the density form of the Zakai equation in one
/// dimension. Per step:
///
/// 1. explicit flux-form Fokker–Planck sub-steps with drift
///    `b − ∫η dν₀ − ∫ξ dν₁ − ρB` (upwind) and diffusion `½σ²`, plus the
///    `η` jump gain/loss terms, reflecting at both ends;
/// 2. multiplication by `exp(B ΔṼ − ½B²Δt)`;
/// 3. translation by `ρ ΔṼ`;
/// 4. translation by `ξ(mark)` at every observed atom.
///
/// `ξ` and `η` must not depend on `x`, `ν₀` must be atomic and `ρ` constant.
pub fn grid_zakai_1d<S: Scalar>(
    spec: &ModelSpec<S>,
    obs: &ObservationDecomposition<S>,
    cfg: &GridConfig,
) -> Result<GridZakaiOutput, GridError> {
    cfg.validate()?;
    if spec.dim_x != 1 || spec.dim_y != 1 {
        return Err(GridError::Dimension { dim_x: spec.dim_x, dim_y: spec.dim_y });
    }
    if !spec.eta.is_x_independent(1) || !spec.xi.is_x_independent(1) {
        return Err(GridError::Unsupported("jump sizes that do not depend on the signal"));
    }
    if !spec.eta.is_identically_zero() && !spec.nu0.is_atomic() {
        return Err(GridError::Unsupported("an atomic signal jump measure"));
    }
    if spec.rho.as_constant().is_none() {
        return Err(GridError::Unsupported("a constant signal-observation correlation"));
    }
    let mesh = Mesh { cfg, centers: cfg.centers(), dx: cfg.dx() };
    let n = cfg.n_cells;
    let grid = obs.grid;
    let dt = grid.dt().as_f64();
    let h = dt / cfg.substeps as f64;

    let mut q = initial_masses(spec, &mesh);
    let mut masses = Vec::with_capacity(grid.n_steps + 1);
    masses.push(q.clone());
    let mut scratch = vec![0.0; n];
    let mut flux = vec![0.0; n + 1];
    let mut coeffs = CoefficientValues::for_spec(spec);
    let mut z = vec![S::zero(); 2];
    let mut jump = vec![S::zero(); 1];
    let mut velocity = vec![0.0; n];
    let mut diffusion = vec![0.0; n];
    let mut obs_drift = vec![0.0; n];

    for i in 0..grid.n_steps {
        let t = grid.node(i);
        let y = obs.y_at(i)[0];
        z[1] = y;
        let comp = compensators(spec, &z, &mut jump);
        for c in 0..n {
            z[0] = S::lit(mesh.centers[c]);
            spec.eval_coefficients_into(t, &z, &mut coeffs)?;
            let rho = coeffs.rho.get(0, 0).as_f64();
            obs_drift[c] = coeffs.obs_b[0].as_f64();
            velocity[c] = coeffs.b[0].as_f64() - comp - rho * obs_drift[c];
            let s = coeffs.sigma.data.iter().map(|v| v.as_f64().powi(2)).sum::<f64>();
            diffusion[c] = 0.5 * s;
        }
        let eta_jumps = eta_atoms(spec, t, &z, &mut jump);
        let eta_rate: f64 = eta_jumps.iter().map(|(_, r)| r).sum();
        for c in 0..n {
            let number = (velocity[c].abs() / mesh.dx + 2.0 * diffusion[c] / (mesh.dx * mesh.dx) + eta_rate) * h;
            if number > 1.0 {
                return Err(GridError::Courant { x: mesh.centers[c], number });
            }
        }

        for _ in 0..cfg.substeps {
            fokker_planck_substep(&mut q, &velocity, &diffusion, mesh.dx, h, &mut flux);
            if !eta_jumps.is_empty() {
                let base = q.clone();
                for &(shift, rate) in &eta_jumps {
                    shift_masses(&base, shift, mesh.dx, &mut scratch);
                    for c in 0..n {
                        q[c] += rate * h * (scratch[c] - base[c]);
                    }
                }
            }
        }

        let dv = obs.dvtilde_step(i)[0].as_f64();
        for c in 0..n {
            let b = obs_drift[c];
            q[c] *= (b * dv - 0.5 * b * b * dt).exp();
        }
        let rho = spec.rho.as_constant().map(|m| m.get(0, 0).as_f64()).unwrap_or(0.0);
        if rho != 0.0 {
            shift_masses(&q, rho * dv, mesh.dx, &mut scratch);
            std::mem::swap(&mut q, &mut scratch);
        }
        for atom in obs.atoms_in_step(i) {
            spec.xi.eval_into(t, &z, &atom.mark, &mut jump);
            shift_masses(&q, jump[0].as_f64(), mesh.dx, &mut scratch);
            std::mem::swap(&mut q, &mut scratch);
        }
        masses.push(q.clone());
    }
    Ok(GridZakaiOutput { centers: mesh.centers, masses })
}

fn initial_masses<S: Scalar>(spec: &ModelSpec<S>, mesh: &Mesh<'_>) -> Vec<f64> {
    let n = mesh.cfg.n_cells;
    let mean = spec.initial.x_mean[0].as_f64();
    let std = spec.initial.x_std[0].as_f64();
    let mut q = vec![0.0; n];
    if std == 0.0 {
        let mut unit = vec![0.0; n];
        unit[0] = 1.0;
        shift_masses(&unit, mean - mesh.centers[0], mesh.dx, &mut q);
        return q;
    }
    let normal = Normal::new(mean, std).expect("positive std");
    for (c, v) in q.iter_mut().enumerate() {
        let lo = if c == 0 { f64::NEG_INFINITY } else { mesh.cfg.x_min + c as f64 * mesh.dx };
        let hi = if c + 1 == n { f64::INFINITY } else { mesh.cfg.x_min + (c + 1) as f64 * mesh.dx };
        *v = normal.cdf(hi) - normal.cdf(lo);
    }
    q
}

/// `∫η dν₀ + ∫ξ dν₁` for `x`-independent jump sizes.
fn compensators<S: Scalar>(spec: &ModelSpec<S>, z: &[S], jump: &mut [S]) -> f64 {
    jump.iter_mut().for_each(|j| *j = S::zero());
    spec.add_jump_compensator(z, jump);
    jump[0].as_f64()
}

fn eta_atoms<S: Scalar>(spec: &ModelSpec<S>, t: S, z: &[S], jump: &mut [S]) -> Vec<(f64, f64)> {
    if spec.eta.is_identically_zero() {
        return Vec::new();
    }
    spec.nu0
        .atoms()
        .unwrap_or(&[])
        .iter()
        .map(|a| {
            spec.eta.eval_into(t, z, &a.mark, jump);
            (jump[0].as_f64(), a.mass.as_f64())
        })
        .collect()
}

/// One explicit step of `∂p = −∂(v p) + ∂²(a p)` on cell masses with zero
/// flux through both ends, so total mass is conserved exactly.
fn fokker_planck_substep(q: &mut [f64], v: &[f64], a: &[f64], dx: f64, h: f64, flux: &mut [f64]) {
    let n = q.len();
    flux[0] = 0.0;
    flux[n] = 0.0;
    for c in 0..n - 1 {
        let vf = 0.5 * (v[c] + v[c + 1]);
        let adv = if vf >= 0.0 { vf * q[c] } else { vf * q[c + 1] } / dx;
        let dif = -(a[c + 1] * q[c + 1] - a[c] * q[c]) / (dx * dx);
        flux[c + 1] = adv + dif;
    }
    for c in 0..n {
        q[c] -= h * (flux[c + 1] - flux[c]);
    }
}
