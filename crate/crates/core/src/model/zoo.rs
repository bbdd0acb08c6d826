//! Named parametric models addressable from experiment configs.
//!
//! Each builder derives the growth constants analytically from its
//! parameters, so `check_assumptions` passes on every shipped entry except
//! `quadratic_drift`, which deliberately declares constants it violates.

use std::collections::{BTreeMap, BTreeSet};

use crate::linalg::Matrix;
use crate::scalar::Scalar;

use super::{Atom, GrowthConstants, InitialLaw, JumpField, LevyMeasure, MarkLaw, MatrixField, ModelError, ModelSpec, VectorField};

pub struct ZooEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: &'static [(&'static str, f64)],
}

pub const ZOO: &[ZooEntry] = &[
    ZooEntry { name: "zero", summary: "all coefficients zero, no jumps", params: &[] },
    ZooEntry { name: "constant_drift", summary: "b = drift, everything else zero", params: &[("drift", 1.0)] },
    ZooEntry {
        name: "ou",
        summary: "Ornstein-Uhlenbeck signal b=-theta x, linear observation B=h x",
        params: &[("theta", 1.0), ("sigma", 1.0), ("rho", 0.0), ("h", 0.0), ("x0", 0.0), ("x0_std", 0.0)],
    },
    ZooEntry {
        name: "linear_gaussian",
        summary: "linear-Gaussian filter benchmark b=-a x, B=h x, Gaussian prior",
        params: &[("a", 1.0), ("sigma", 1.0), ("rho", 0.0), ("h", 1.0), ("m0", 0.0), ("p0", 1.0)],
    },
    ZooEntry {
        name: "linear_obs",
        summary: "unbounded observation drift B=h x with rho=0 (one-sided growth holds)",
        params: &[("theta", 1.0), ("sigma", 1.0), ("h", 1.0), ("m0", 0.0), ("p0", 1.0)],
    },
    ZooEntry {
        name: "bounded_obs",
        summary: "bounded observation drift B=scale*tanh(x)",
        params: &[("theta", 1.0), ("sigma", 1.0), ("rho", 0.0), ("scale", 1.0), ("m0", 0.0), ("p0", 1.0)],
    },
    ZooEntry {
        name: "ou_jumps",
        summary: "1-D mean-reverting signal with shared observed jumps (atomic nu1) and hidden jumps (atomic nu0)",
        params: &[
            ("theta", 1.0),
            ("level", 1.0),
            ("sigma", 0.5),
            ("h", 1.0),
            ("xi_scale", 0.5),
            ("up_mark", 1.0),
            ("up_rate", 1.0),
            ("down_mark", -0.5),
            ("down_rate", 1.0),
            ("eta", 0.3),
            ("eta_rate", 0.5),
            ("p0", 0.25),
        ],
    },
    ZooEntry {
        name: "rotation",
        summary: "2-D rotating signal, tanh observation, density-type Lévy measures",
        params: &[("rate", 1.0), ("sigma", 0.5), ("jump_rate", 0.5), ("eta_rate", 0.5), ("eta_std", 0.2)],
    },
    ZooEntry { name: "quadratic_drift", summary: "b = coef x^2 with linear-growth constants it violates", params: &[("coef", 1.0)] },
];

struct Params<'a> {
    model: &'a str,
    given: &'a BTreeMap<String, f64>,
    defaults: &'static [(&'static str, f64)],
    used: BTreeSet<&'static str>,
}

impl<'a> Params<'a> {
    fn get(&mut self, key: &'static str) -> f64 {
        let default = self.defaults.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).expect("parameter declared in zoo table");
        self.used.insert(key);
        self.given.get(key).copied().unwrap_or(default)
    }

    fn positive(&mut self, key: &'static str) -> Result<f64, ModelError> {
        let v = self.get(key);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad(key, "must be positive and finite"))
        }
    }

    fn nonneg(&mut self, key: &'static str) -> Result<f64, ModelError> {
        let v = self.get(key);
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad(key, "must be nonnegative and finite"))
        }
    }

    fn finite(&mut self, key: &'static str) -> Result<f64, ModelError> {
        let v = self.get(key);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad(key, "must be finite"))
        }
    }

    fn bad(&self, key: &str, reason: &str) -> ModelError {
        ModelError::InvalidParameter { model: self.model.into(), param: key.into(), reason: reason.into() }
    }

    fn finish(self) -> Result<(), ModelError> {
        for k in self.given.keys() {
            if !self.defaults.iter().any(|(d, _)| d == k) {
                return Err(self.bad(k, "is not a parameter of this model"));
            }
        }
        Ok(())
    }
}

pub fn entry(name: &str) -> Option<&'static ZooEntry> {
    ZOO.iter().find(|e| e.name == name)
}

/// Builds a zoo model. Unknown names and unknown or out-of-range parameters are errors.
pub fn build<S: Scalar>(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec<S>, ModelError> {
    let e = entry(name).ok_or_else(|| ModelError::UnknownModel(name.to_string()))?;
    let mut p = Params { model: e.name, given: params, defaults: e.params, used: BTreeSet::new() };
    let spec = match name {
        "zero" => scalar_model("zero", 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, (0.0, 0.0)),
        "constant_drift" => {
            let c = p.finite("drift")?;
            let mut m = scalar_model("constant_drift", 0.0, c, 0.0, 0.0, 0.0, 0.0, (0.0, 0.0));
            m.growth.k0 = S::lit(c * c);
            m
        }
        "ou" => {
            let theta = p.finite("theta")?;
            let (s, r, h) = (p.finite("sigma")?, p.finite("rho")?, p.finite("h")?);
            let x0 = (p.finite("x0")?, p.nonneg("x0_std")?);
            scalar_model("ou", -theta, 0.0, s, r, h, 0.0, x0)
        }
        "linear_gaussian" => {
            let a = p.finite("a")?;
            let (s, r, h) = (p.finite("sigma")?, p.finite("rho")?, p.finite("h")?);
            let prior = (p.finite("m0")?, p.nonneg("p0")?.sqrt());
            scalar_model("linear_gaussian", -a, 0.0, s, r, h, 0.0, prior)
        }
        "linear_obs" => {
            let theta = p.finite("theta")?;
            let (s, h) = (p.finite("sigma")?, p.finite("h")?);
            let prior = (p.finite("m0")?, p.nonneg("p0")?.sqrt());
            scalar_model("linear_obs", -theta, 0.0, s, 0.0, h, 0.0, prior)
        }
        "bounded_obs" => {
            let theta = p.finite("theta")?;
            let (s, r, scale) = (p.finite("sigma")?, p.finite("rho")?, p.finite("scale")?);
            let prior = (p.finite("m0")?, p.nonneg("p0")?.sqrt());
            let mut m = scalar_model("bounded_obs", -theta, 0.0, s, r, 0.0, 0.0, prior);
            m.obs_drift = VectorField::BoundedTanh {
                scale: vec![S::lit(scale)],
                matrix: Matrix::from_f64(1, 2, &[1.0, 0.0]),
                offset: vec![S::zero()],
            };
            m.growth.k0 = S::lit(s * s + r * r + scale * scale);
            m.growth.k = S::lit((r * scale).abs());
            m
        }
        "ou_jumps" => ou_jumps(&mut p)?,
        "rotation" => rotation(&mut p)?,
        "quadratic_drift" => {
            let coef = p.finite("coef")?;
            let mut m = scalar_model("quadratic_drift", 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, (0.0, 0.0));
            m.drift = VectorField::Quadratic { coef: S::lit(coef), dim: 1 };
            m.growth = GrowthConstants { k0: S::one(), k1: S::one(), k2: S::zero(), k: S::zero() };
            m
        }
        _ => unreachable!("zoo table and builder disagree on {name}"),
    };
    p.finish()?;
    spec.validate()?;
    Ok(spec)
}

/// d = d' = d1 = 1 model with `b = a x + c`, `σ = s`, `ρ = r`, `B = h x + g`.
#[allow(clippy::too_many_arguments)]
fn scalar_model<S: Scalar>(name: &str, a: f64, c: f64, s: f64, r: f64, h: f64, g: f64, prior: (f64, f64)) -> ModelSpec<S> {
    let k0 = (2.0 * c * c).max(s * s + r * r + 2.0 * g * g);
    let k1 = if c == 0.0 { a * a } else { 2.0 * a * a };
    let k2 = if g == 0.0 { h * h } else { 2.0 * h * h };
    // -x r (h x + g) <= |r h| x² + |r g| (1 + x²)/2
    let k = (r * h).abs() + (r * g).abs();
    ModelSpec {
        name: name.to_string(),
        dim_x: 1,
        dim_y: 1,
        dim_w: 1,
        drift: VectorField::Affine { matrix: Matrix::from_f64(1, 2, &[a, 0.0]), offset: vec![S::lit(c)] },
        sigma: MatrixField::Constant(Matrix::scalar(S::lit(s))),
        rho: MatrixField::Constant(Matrix::scalar(S::lit(r))),
        obs_drift: VectorField::Affine { matrix: Matrix::from_f64(1, 2, &[h, 0.0]), offset: vec![S::lit(g)] },
        eta: JumpField::Zero { dim: 1 },
        xi: JumpField::Zero { dim: 1 },
        nu0: LevyMeasure::empty(1),
        nu1: LevyMeasure::empty(1),
        horizon: S::one(),
        growth: GrowthConstants { k0: S::lit(k0), k1: S::lit(k1), k2: S::lit(k2), k: S::lit(k) },
        initial: InitialLaw { x_mean: vec![S::lit(prior.0)], x_std: vec![S::lit(prior.1)], y0: vec![S::zero()] },
    }
}

fn ou_jumps<S: Scalar>(p: &mut Params) -> Result<ModelSpec<S>, ModelError> {
    let theta = p.finite("theta")?;
    let level = p.finite("level")?;
    let sigma = p.finite("sigma")?;
    let h = p.finite("h")?;
    let xi_scale = p.finite("xi_scale")?;
    let up = (p.finite("up_mark")?, p.nonneg("up_rate")?);
    let down = (p.finite("down_mark")?, p.nonneg("down_rate")?);
    let eta = p.finite("eta")?;
    let eta_rate = p.nonneg("eta_rate")?;
    let p0 = p.nonneg("p0")?;
    if up.0 == 0.0 || down.0 == 0.0 {
        return Err(p.bad("up_mark/down_mark", "observation jump marks must be nonzero"));
    }
    let atoms1: Vec<Atom<S>> = [up, down]
        .into_iter()
        .filter(|&(_, rate)| rate > 0.0)
        .map(|(m, rate)| Atom { mark: vec![S::lit(m)], mass: S::lit(rate) })
        .collect();
    let atoms0: Vec<Atom<S>> = if eta_rate > 0.0 { vec![Atom { mark: vec![S::one()], mass: S::lit(eta_rate) }] } else { Vec::new() };
    let nu1 = LevyMeasure::atomic(1, atoms1)?;
    let nu0 = LevyMeasure::atomic(1, atoms0)?;
    let nu1_m2 = up.1 * up.0 * up.0 + down.1 * down.0 * down.0;
    let jump_l2 = eta * eta * eta_rate + xi_scale * xi_scale * nu1_m2;
    let k0 = (2.0 * theta * theta * level * level).max(sigma * sigma).max(jump_l2).max(nu1_m2);
    Ok(ModelSpec {
        name: "ou_jumps".into(),
        dim_x: 1,
        dim_y: 1,
        dim_w: 1,
        drift: VectorField::Affine { matrix: Matrix::from_f64(1, 2, &[-theta, 0.0]), offset: vec![S::lit(theta * level)] },
        sigma: MatrixField::Constant(Matrix::scalar(S::lit(sigma))),
        rho: MatrixField::zero(1, 1),
        obs_drift: VectorField::linear(Matrix::from_f64(1, 2, &[h, 0.0])),
        eta: JumpField::MarkProportional { matrix: Matrix::scalar(S::lit(eta)) },
        xi: JumpField::MarkProportional { matrix: Matrix::scalar(S::lit(xi_scale)) },
        nu0,
        nu1,
        horizon: S::one(),
        growth: GrowthConstants { k0: S::lit(k0), k1: S::lit(2.0 * theta * theta), k2: S::lit(h * h), k: S::zero() },
        initial: InitialLaw { x_mean: vec![S::lit(level)], x_std: vec![S::lit(p0.sqrt())], y0: vec![S::zero()] },
    })
}

fn rotation<S: Scalar>(p: &mut Params) -> Result<ModelSpec<S>, ModelError> {
    let rate = p.finite("rate")?;
    let sigma = p.finite("sigma")?;
    let jump_rate = p.nonneg("jump_rate")?;
    let eta_rate = p.nonneg("eta_rate")?;
    let eta_std = p.positive("eta_std")?;
    let nu1 = LevyMeasure::density(S::lit(jump_rate), MarkLaw::Uniform { low: vec![S::lit(0.5)], high: vec![S::lit(1.5)] })?;
    let nu0 =
        LevyMeasure::density(S::lit(eta_rate), MarkLaw::Gaussian { mean: vec![S::zero(), S::zero()], std: vec![S::lit(eta_std); 2] })?;
    // ∫ m² over U[0.5, 1.5] = 13/12
    let nu1_m2 = jump_rate * 13.0 / 12.0;
    let jump_l2 = eta_rate * 2.0 * eta_std * eta_std + nu1_m2;
    let k0 = (2.0 * sigma * sigma + 1.0).max(jump_l2).max(nu1_m2);
    Ok(ModelSpec {
        name: "rotation".into(),
        dim_x: 2,
        dim_y: 1,
        dim_w: 2,
        drift: VectorField::Rotation { rate: S::lit(rate) },
        sigma: MatrixField::Constant(Matrix::identity(2).scale(S::lit(sigma))),
        rho: MatrixField::zero(2, 1),
        obs_drift: VectorField::BoundedTanh {
            scale: vec![S::one()],
            matrix: Matrix::from_f64(1, 3, &[1.0, 0.0, 0.0]),
            offset: vec![S::zero()],
        },
        eta: JumpField::MarkProportional { matrix: Matrix::identity(2) },
        xi: JumpField::MarkProportional { matrix: Matrix::from_f64(2, 1, &[1.0, 0.0]) },
        nu0,
        nu1,
        horizon: S::one(),
        growth: GrowthConstants { k0: S::lit(k0), k1: S::lit(rate * rate), k2: S::zero(), k: S::zero() },
        initial: InitialLaw { x_mean: vec![S::one(), S::zero()], x_std: vec![S::lit(0.5), S::lit(0.5)], y0: vec![S::zero()] },
    })
}
