//! The partially observed jump diffusion `Z = (X, Y)`:
//!
//! ```text
//! dX = b dt + σ dW + ρ dV + ∫ η Ñ₀(dz, dt) + ∫ ξ Ñ₁(dz, dt)
//! dY = B dt + dV + ∫ z Ñ₁(dz, dt)
//! ```
//!
//! with compensated Poisson measures `Ñᵢ = Nᵢ − νᵢ dt`.

pub mod assumptions;
pub mod coefficients;
pub mod levy;
pub mod test_functions;
pub mod zoo;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub use coefficients::{JumpField, MatrixField, VectorField};
pub use levy::{Atom, LevyKind, LevyMeasure, MarkLaw, Quadrature, QuadratureRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("coefficient {coefficient} is not finite at t={t}, z={z:?}")]
    NonFinite { coefficient: &'static str, t: f64, z: Vec<f64> },
    #[error("{what}: expected dimension {expected}, found {found}")]
    Dimension { what: String, expected: usize, found: usize },
    #[error("invalid Lévy measure: {0}")]
    InvalidMeasure(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("model '{model}': parameter '{param}' {reason}")]
    InvalidParameter { model: String, param: String, reason: String },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Which jump coefficient an operator or integral refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpKind {
    /// `η`, driven by the unobserved measure `N₀`.
    Eta,
    /// `ξ`, driven by `N₁`, whose jumps are shared with the observation.
    Xi,
}

/// Constants of the growth conditions:
/// `|b|² ≤ K0 + K1|z|²`, `|σ|² + |ρ|² + |B|² ≤ K0 + K2|z|²`,
/// `|η|²_{L2(ν0)} + |ξ|²_{L2(ν1)} ≤ K0 + K2|z|²`, `∫|z|²ν1 ≤ K0`, and the
/// one-sided bound `−xᵢ ρⁱᵏ Bᵏ ≤ K(1 + |z|²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthConstants<S> {
    pub k0: S,
    pub k1: S,
    pub k2: S,
    pub k: S,
}

/// Law of `X₀` given `Y₀`: independent Gaussian coordinates, `Y₀` fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialLaw<S> {
    pub x_mean: Vec<S>,
    pub x_std: Vec<S>,
    pub y0: Vec<S>,
}

impl<S: Scalar> InitialLaw<S> {
    pub fn deterministic(x0: Vec<S>, y0: Vec<S>) -> Self {
        let n = x0.len();
        Self { x_mean: x0, x_std: vec![S::zero(); n], y0 }
    }

    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [S]) {
        for (k, o) in out.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *o = self.x_mean[k] + self.x_std[k] * S::lit(z);
        }
    }
}

/// Draws `X₀` for a filter run.
pub trait PriorSampler<S>: Sync {
    fn sample(&self, rng: &mut crate::rng::StreamRng, out: &mut [S]);
}

impl<S: Scalar> PriorSampler<S> for InitialLaw<S> {
    fn sample(&self, rng: &mut crate::rng::StreamRng, out: &mut [S]) {
        self.sample_x(rng, out)
    }
}

#[derive(Clone, Debug)]
pub struct ModelSpec<S> {
    pub name: String,
    pub dim_x: usize,
    pub dim_y: usize,
    pub dim_w: usize,
    pub drift: VectorField<S>,
    pub sigma: MatrixField<S>,
    pub rho: MatrixField<S>,
    pub obs_drift: VectorField<S>,
    pub eta: JumpField<S>,
    pub xi: JumpField<S>,
    pub nu0: LevyMeasure<S>,
    pub nu1: LevyMeasure<S>,
    pub horizon: S,
    pub growth: GrowthConstants<S>,
    pub initial: InitialLaw<S>,
}

/// `b, σ, ρ, B` evaluated at one `(t, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientValues<S> {
    pub b: Vec<S>,
    pub sigma: Matrix<S>,
    pub rho: Matrix<S>,
    pub obs_b: Vec<S>,
}

impl<S: Scalar> CoefficientValues<S> {
    pub fn for_spec(spec: &ModelSpec<S>) -> Self {
        Self {
            b: vec![S::zero(); spec.dim_x],
            sigma: Matrix::zeros(spec.dim_x, spec.dim_w),
            rho: Matrix::zeros(spec.dim_x, spec.dim_y),
            obs_b: vec![S::zero(); spec.dim_y],
        }
    }
}

fn check_dim(what: &str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::Dimension { what: what.to_string(), expected, found })
    }
}

impl<S: Scalar> ModelSpec<S> {
    pub fn dim_z(&self) -> usize {
        self.dim_x + self.dim_y
    }

    /// Checks that every coefficient family has the declared shapes.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (d, dy, dw, dz) = (self.dim_x, self.dim_y, self.dim_w, self.dim_z());
        if d == 0 || dy == 0 || dw == 0 {
            return Err(ModelError::Invalid("dimensions must be positive".into()));
        }
        check_dim("drift b output", d, self.drift.out_dim())?;
        if let Some(n) = self.drift.in_dim() {
            check_dim("drift b input", dz, n)?;
        }
        if matches!(self.drift, VectorField::Rotation { .. }) && d < 2 {
            return Err(ModelError::Invalid("rotation drift needs dim_x >= 2".into()));
        }
        check_dim("observation drift B output", dy, self.obs_drift.out_dim())?;
        if let Some(n) = self.obs_drift.in_dim() {
            check_dim("observation drift B input", dz, n)?;
        }
        let (r, c) = self.sigma.shape();
        check_dim("sigma rows", d, r)?;
        check_dim("sigma cols", dw, c)?;
        let (r, c) = self.rho.shape();
        check_dim("rho rows", d, r)?;
        check_dim("rho cols", dy, c)?;
        if let MatrixField::Modulated { gain, .. } = &self.sigma {
            check_dim("sigma gain", dz, gain.len())?;
        }
        if let MatrixField::Modulated { gain, .. } = &self.rho {
            check_dim("rho gain", dz, gain.len())?;
        }
        check_dim("eta output", d, self.eta.out_dim())?;
        check_dim("xi output", d, self.xi.out_dim())?;
        check_dim("nu1 mark space", dy, self.nu1.mark_dim())?;
        if let Some(m) = self.eta.mark_dim() {
            check_dim("eta mark", self.nu0.mark_dim(), m)?;
        }
        if let Some(m) = self.xi.mark_dim() {
            check_dim("xi mark", dy, m)?;
        }
        for jf in [&self.eta, &self.xi] {
            if let JumpField::Affine { state, .. } = jf {
                check_dim("jump state matrix cols", dz, state.cols)?;
            }
        }
        check_dim("initial x mean", d, self.initial.x_mean.len())?;
        check_dim("initial x std", d, self.initial.x_std.len())?;
        check_dim("initial y0", dy, self.initial.y0.len())?;
        if !(self.horizon > S::zero()) || !self.horizon.is_finite() {
            return Err(ModelError::Invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        let g = &self.growth;
        if [g.k0, g.k1, g.k2, g.k].iter().any(|&k| !(k >= S::zero())) {
            return Err(ModelError::Invalid("growth constants must be nonnegative".into()));
        }
        Ok(())
    }

    /// Evaluates `b, σ, ρ, B` at `(t, z)` into `out`, checking finiteness.
    pub fn eval_coefficients_into(&self, t: S, z: &[S], out: &mut CoefficientValues<S>) -> Result<(), ModelError> {
        self.drift.eval_into(t, z, &mut out.b);
        self.sigma.eval_into(t, z, &mut out.sigma);
        self.rho.eval_into(t, z, &mut out.rho);
        self.obs_drift.eval_into(t, z, &mut out.obs_b);
        let checks: [(&'static str, &[S]); 4] = [("b", &out.b), ("sigma", &out.sigma.data), ("rho", &out.rho.data), ("B", &out.obs_b)];
        for (name, v) in checks {
            if !crate::scalar::all_finite(v) {
                return Err(self.non_finite(name, t, z));
            }
        }
        Ok(())
    }

    pub(crate) fn non_finite(&self, coefficient: &'static str, t: S, z: &[S]) -> ModelError {
        ModelError::NonFinite { coefficient, t: t.as_f64(), z: z.iter().map(|v| v.as_f64()).collect() }
    }

    pub fn jump_field(&self, which: JumpKind) -> &JumpField<S> {
        match which {
            JumpKind::Eta => &self.eta,
            JumpKind::Xi => &self.xi,
        }
    }

    pub fn levy(&self, which: JumpKind) -> &LevyMeasure<S> {
        match which {
            JumpKind::Eta => &self.nu0,
            JumpKind::Xi => &self.nu1,
        }
    }

    /// `∫η dν₀ + ∫ξ dν₁` at `z`, added into `out`; the signal compensator.
    pub fn add_jump_compensator(&self, z: &[S], out: &mut [S]) {
        self.eta.add_integral(z, &self.nu0, out);
        self.xi.add_integral(z, &self.nu1, out);
    }
}

/// Bundled `b, σ, ρ, B` at `(t, z)`.
pub fn evaluate_coefficients<S: Scalar>(spec: &ModelSpec<S>, t: S, z: &[S]) -> Result<CoefficientValues<S>, ModelError> {
    check_dim("state z", spec.dim_z(), z.len())?;
    if !crate::scalar::all_finite(z) {
        return Err(spec.non_finite("z", t, z));
    }
    let mut out = CoefficientValues::for_spec(spec);
    spec.eval_coefficients_into(t, z, &mut out)?;
    Ok(out)
}
