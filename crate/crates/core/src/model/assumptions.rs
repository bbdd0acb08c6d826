//! Sampling-based check of the growth conditions.
//!
//! The inequalities are evaluated on quasi-random points `(t, z)` with
//! `|z| ≤ radius`; a pass is evidence, not a proof.

use serde::Serialize;

use crate::rng::halton;
use crate::scalar::{norm_sq, Scalar};

use super::{CoefficientValues, JumpKind, ModelSpec};

pub const RATIO_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub max_ratio: f64,
    /// `(t, z)` attaining `max_ratio`.
    pub witness: Option<(f64, Vec<f64>)>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub model: String,
    pub n_samples: usize,
    pub radius: f64,
    pub checks: Vec<InequalityCheck>,
    pub pass: bool,
}

impl AssumptionReport {
    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

struct Tracker {
    name: &'static str,
    max: f64,
    witness: Option<(f64, Vec<f64>)>,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self { name, max: f64::NEG_INFINITY, witness: None }
    }

    fn observe(&mut self, r: f64, t: f64, z: &[f64]) {
        // NaN ratios count as violations
        let r = if r.is_nan() { f64::INFINITY } else { r };
        if r > self.max {
            self.max = r;
            self.witness = Some((t, z.to_vec()));
        }
    }

    fn finish(self) -> InequalityCheck {
        InequalityCheck { name: self.name, max_ratio: self.max, witness: self.witness, pass: self.max <= 1.0 + RATIO_TOLERANCE }
    }
}

/// Maximum ratio `LHS / RHS` of every growth inequality over `n_samples`
/// Halton points in `[0, T] x {|z| ≤ radius}`. Points whose cube image falls
/// outside the ball are projected onto the sphere, so the boundary is sampled.
pub fn check_assumptions<S: Scalar>(spec: &ModelSpec<S>, n_samples: usize, radius: f64) -> AssumptionReport {
    assert!(n_samples >= 1, "n_samples must be at least 1");
    assert!(radius > 0.0, "radius must be positive");
    let dz = spec.dim_z();
    let g = &spec.growth;
    let (k0, k1, k2, k) = (g.k0.as_f64(), g.k1.as_f64(), g.k2.as_f64(), g.k.as_f64());

    let mut drift = Tracker::new("drift_growth");
    let mut diffusion = Tracker::new("diffusion_growth");
    let mut jumps = Tracker::new("jump_growth");
    let mut one_sided = Tracker::new("one_sided_growth");
    let mut coeffs = CoefficientValues::for_spec(spec);
    let mut u = vec![0.0; dz + 1];
    let mut zf = vec![0.0; dz];
    let mut zs = vec![S::zero(); dz];
    let mut scratch = vec![S::zero(); spec.dim_x];
    let horizon = spec.horizon.as_f64();

    for i in 0..n_samples {
        halton(i as u64 + 1, dz + 1, &mut u);
        let t = horizon * u[0];
        for (zk, &uk) in zf.iter_mut().zip(&u[1..]) {
            *zk = 2.0 * uk - 1.0;
        }
        let n = zf.iter().map(|v| v * v).sum::<f64>().sqrt();
        let shrink = if n > 1.0 { radius / n } else { radius };
        for (s, f) in zs.iter_mut().zip(zf.iter_mut()) {
            *f *= shrink;
            *s = S::lit(*f);
        }
        let ts = S::lit(t);
        let z2 = zf.iter().map(|v| v * v).sum::<f64>();
        if spec.eval_coefficients_into(ts, &zs, &mut coeffs).is_err() {
            for tr in [&mut drift, &mut diffusion, &mut one_sided] {
                tr.observe(f64::INFINITY, t, &zf);
            }
            continue;
        }
        drift.observe(ratio(norm_sq(&coeffs.b).as_f64(), k0 + k1 * z2), t, &zf);
        let diff = coeffs.sigma.frobenius_sq() + coeffs.rho.frobenius_sq() + norm_sq(&coeffs.obs_b);
        diffusion.observe(ratio(diff.as_f64(), k0 + k2 * z2), t, &zf);

        let mut jump_l2 = 0.0;
        for which in [JumpKind::Eta, JumpKind::Xi] {
            let field = spec.jump_field(which);
            let q = spec.levy(which).integrate(|m| {
                field.eval_into(ts, &zs, m, &mut scratch);
                norm_sq(&scratch)
            });
            jump_l2 += q.value.as_f64();
        }
        jumps.observe(ratio(jump_l2, k0 + k2 * z2), t, &zf);

        // -x_i ρ^{ik} B^k
        let mut lhs = 0.0;
        for i in 0..spec.dim_x {
            for kk in 0..spec.dim_y {
                lhs -= zf[i] * coeffs.rho.get(i, kk).as_f64() * coeffs.obs_b[kk].as_f64();
            }
        }
        one_sided.observe(ratio(lhs, k * (1.0 + z2)), t, &zf);
    }

    let m2 = spec.nu1.second_moment().as_f64();
    let nu1_moment = InequalityCheck {
        name: "nu1_second_moment",
        max_ratio: ratio(m2, k0),
        witness: None,
        pass: ratio(m2, k0) <= 1.0 + RATIO_TOLERANCE,
    };
    let checks = vec![drift.finish(), diffusion.finish(), jumps.finish(), nu1_moment, one_sided.finish()];
    let pass = checks.iter().all(|c| c.pass);
    AssumptionReport { model: spec.name.clone(), n_samples, radius, checks, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::{zoo, VectorField};
    use std::collections::BTreeMap;

    #[test]
    fn shipped_models_pass_except_quadratic() {
        for e in zoo::ZOO {
            let m = zoo::build::<f64>(e.name, &BTreeMap::new()).unwrap();
            let r = check_assumptions(&m, 2000, 10.0);
            if e.name == "quadratic_drift" {
                assert!(!r.pass);
                let c = r.check("drift_growth").unwrap();
                assert!(!c.pass);
                let (_, z) = c.witness.clone().unwrap();
                assert!(z[0].abs() > 1.0, "witness should sit at large |x|: {z:?}");
            } else {
                assert!(r.pass, "{}: {:?}", e.name, r.checks);
            }
        }
    }

    #[test]
    fn bounded_b_passes_with_k2_zero() {
        let mut p = BTreeMap::new();
        p.insert("sigma".into(), 0.0);
        p.insert("theta".into(), 0.0);
        let mut m = zoo::build::<f64>("bounded_obs", &p).unwrap();
        m.growth.k0 = 1.0;
        m.growth.k2 = 0.0;
        let r = check_assumptions(&m, 500, 50.0);
        assert!(r.pass);
    }

    #[test]
    fn zero_rho_gives_zero_one_sided_ratio() {
        let m = zoo::build::<f64>("linear_obs", &BTreeMap::new()).unwrap();
        let r = check_assumptions(&m, 200, 5.0);
        assert_eq!(r.check("one_sided_growth").unwrap().max_ratio, 0.0);
    }

    #[test]
    fn understated_constants_fail() {
        let mut m = zoo::build::<f64>("ou", &BTreeMap::new()).unwrap();
        m.drift = VectorField::linear(Matrix::from_f64(1, 2, &[-3.0, 0.0]));
        let r = check_assumptions(&m, 500, 3.0);
        assert!(!r.check("drift_growth").unwrap().pass);
    }
}
