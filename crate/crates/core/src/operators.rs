//! Random operators of the filtering equations, evaluated pointwise:
//!
//! ```text
//! 𝓛φ  = aⁱʲ Dᵢⱼφ + bⁱ Dᵢφ,   a = ½(σσᵀ + ρρᵀ)
//! 𝓜ᵏφ = ρⁱᵏ Dᵢφ + Bᵏ φ
//! Iφ  = φ(x + jump) − φ(x)
//! Jφ  = Iφ − jumpⁱ Dᵢφ
//! ```
//!
//! Coefficients are evaluated at `(t, x, y)` with `y` the current observation.
//! Derivatives come from the test function's analytic evaluators.

use thiserror::Error;

use crate::model::test_functions::TestFunction;
use crate::model::{CoefficientValues, JumpKind, ModelError, ModelSpec, Quadrature};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("observation component index {index} out of range (dimension {dim})")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("operator {op} produced a non-finite value at x={x:?}")]
    NonFinite { op: &'static str, x: Vec<f64> },
    #[error("jump coefficient is not finite at x={x:?}, mark={mark:?}")]
    NonFiniteJump { x: Vec<f64>, mark: Vec<f64> },
    #[error("mark has dimension {found}, the jump coefficient expects {expected}")]
    MarkDimension { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpOperator {
    I,
    J,
}

/// Where the random operators are evaluated: time and current observation.
#[derive(Clone, Copy, Debug)]
pub struct OperatorContext<'a, S> {
    pub spec: &'a ModelSpec<S>,
    pub t: S,
    pub y: &'a [S],
}

impl<'a, S: Scalar> OperatorContext<'a, S> {
    pub fn new(spec: &'a ModelSpec<S>, t: S, y: &'a [S]) -> Self {
        Self { spec, t, y }
    }
}

/// Coefficients at one `(t, x, y)` plus scratch buffers, reused across many
/// test functions. This is the hot-path form of the `apply_*` functions.
#[derive(Clone, Debug)]
pub struct PointOperators<S> {
    d: usize,
    t: S,
    z: Vec<S>,
    pub coeffs: CoefficientValues<S>,
    a: Vec<S>,
    grad: Vec<S>,
    hess: Vec<S>,
    jump: Vec<S>,
    shifted: Vec<S>,
}

impl<S: Scalar> PointOperators<S> {
    pub fn new(spec: &ModelSpec<S>) -> Self {
        let d = spec.dim_x;
        Self {
            d,
            t: S::zero(),
            z: vec![S::zero(); spec.dim_z()],
            coeffs: CoefficientValues::for_spec(spec),
            a: vec![S::zero(); d * d],
            grad: vec![S::zero(); d],
            hess: vec![S::zero(); d * d],
            jump: vec![S::zero(); d],
            shifted: vec![S::zero(); d],
        }
    }

    pub fn x(&self) -> &[S] {
        &self.z[..self.d]
    }

    pub fn z(&self) -> &[S] {
        &self.z
    }

    /// Evaluates the coefficients at `(t, x, y)`.
    pub fn at(&mut self, spec: &ModelSpec<S>, t: S, x: &[S], y: &[S]) -> Result<(), ModelError> {
        let d = self.d;
        self.t = t;
        self.z[..d].copy_from_slice(x);
        self.z[d..].copy_from_slice(y);
        spec.eval_coefficients_into(t, &self.z, &mut self.coeffs)?;
        let half = S::lit(0.5);
        let (sig, rho) = (&self.coeffs.sigma, &self.coeffs.rho);
        for i in 0..d {
            for j in 0..d {
                let mut s = S::zero();
                for k in 0..sig.cols {
                    s += sig.get(i, k) * sig.get(j, k);
                }
                for l in 0..rho.cols {
                    s += rho.get(i, l) * rho.get(j, l);
                }
                self.a[i * d + j] = half * s;
            }
        }
        Ok(())
    }

    /// Diffusion matrix `a = ½(σσᵀ + ρρᵀ)` at the current point, row-major.
    pub fn diffusion(&self) -> &[S] {
        &self.a
    }

    #[inline]
    pub fn l<F: TestFunction<S> + ?Sized>(&mut self, phi: &F) -> S {
        let d = self.d;
        phi.gradient(&self.z[..d], &mut self.grad);
        phi.hessian(&self.z[..d], &mut self.hess);
        let second: S = self.a.iter().zip(&self.hess).map(|(&a, &h)| a * h).sum();
        second + crate::scalar::dot(&self.coeffs.b, &self.grad)
    }

    /// `𝓜ᵏφ` for every `k`, written into `out`.
    #[inline]
    pub fn m_all<F: TestFunction<S> + ?Sized>(&mut self, phi: &F, out: &mut [S]) {
        let d = self.d;
        let v = phi.value(&self.z[..d]);
        phi.gradient(&self.z[..d], &mut self.grad);
        let rho = &self.coeffs.rho;
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = self.coeffs.obs_b[k] * v;
            for i in 0..d {
                s += rho.get(i, k) * self.grad[i];
            }
            *o = s;
        }
    }

    #[inline]
    pub fn m<F: TestFunction<S> + ?Sized>(&mut self, phi: &F, k: usize) -> S {
        let d = self.d;
        let v = phi.value(&self.z[..d]);
        phi.gradient(&self.z[..d], &mut self.grad);
        let mut s = self.coeffs.obs_b[k] * v;
        for i in 0..d {
            s += self.coeffs.rho.get(i, k) * self.grad[i];
        }
        s
    }

    /// Jump vector `η(t, z, mark)` or `ξ(t, z, mark)` at the current point.
    #[inline]
    pub fn jump_vector(&mut self, spec: &ModelSpec<S>, which: JumpKind, mark: &[S]) -> &[S] {
        spec.jump_field(which).eval_into(self.t, &self.z, mark, &mut self.jump);
        &self.jump
    }

    /// `Iφ` (and `Jφ` when `op == J`) at the current point for one mark.
    #[inline]
    pub fn jump_op<F: TestFunction<S> + ?Sized>(
        &mut self,
        spec: &ModelSpec<S>,
        phi: &F,
        mark: &[S],
        which: JumpKind,
        op: JumpOperator,
    ) -> S {
        let d = self.d;
        spec.jump_field(which).eval_into(self.t, &self.z, mark, &mut self.jump);
        for i in 0..d {
            self.shifted[i] = self.z[i] + self.jump[i];
        }
        let i_val = phi.increment(&self.z[..d], &self.shifted, &self.jump);
        match op {
            JumpOperator::I => i_val,
            JumpOperator::J => {
                phi.gradient(&self.z[..d], &mut self.grad);
                i_val - crate::scalar::dot(&self.jump, &self.grad)
            }
        }
    }

    /// Every pointwise term of the filtering equations for `φ` at the current
    /// point, sharing one value/gradient/Hessian evaluation.
    pub fn residual_terms<F: TestFunction<S> + ?Sized>(&mut self, spec: &ModelSpec<S>, phi: &F, out: &mut PointTerms<S>) {
        let d = self.d;
        let v = phi.value_grad_hess(&self.z[..d], &mut self.grad, &mut self.hess);
        out.value = v;
        let second: S = self.a.iter().zip(&self.hess).map(|(&a, &h)| a * h).sum();
        out.l = second + crate::scalar::dot(&self.coeffs.b, &self.grad);
        let rho = &self.coeffs.rho;
        for (k, m) in out.m.iter_mut().enumerate() {
            let mut s = self.coeffs.obs_b[k] * v;
            for i in 0..d {
                s += rho.get(i, k) * self.grad[i];
            }
            *m = s;
        }
        out.j_eta = S::zero();
        out.j_xi = S::zero();
        out.i_xi = S::zero();
        for which in [JumpKind::Eta, JumpKind::Xi] {
            let field = spec.jump_field(which);
            if field.is_identically_zero() {
                continue;
            }
            let rule = spec.levy(which).rule();
            for n in 0..rule.len() {
                field.eval_into(self.t, &self.z, rule.node(n), &mut self.jump);
                for i in 0..d {
                    self.shifted[i] = self.z[i] + self.jump[i];
                }
                let inc = phi.increment(&self.z[..d], &self.shifted, &self.jump);
                let j = inc - crate::scalar::dot(&self.jump, &self.grad);
                let w = rule.weights[n];
                match which {
                    JumpKind::Eta => out.j_eta += w * j,
                    JumpKind::Xi => {
                        out.j_xi += w * j;
                        out.i_xi += w * inc;
                    }
                }
            }
        }
    }

    /// `∫ (I or J)φ(x, mark) ν(dmark)` with the measure's quadrature rule.
    pub fn integrated<F: TestFunction<S> + ?Sized>(
        &mut self,
        spec: &ModelSpec<S>,
        phi: &F,
        which: JumpKind,
        op: JumpOperator,
    ) -> Quadrature<S> {
        if spec.jump_field(which).is_identically_zero() {
            return Quadrature { value: S::zero(), std_error: S::zero() };
        }
        let nu = spec.levy(which);
        let rule = nu.rule();
        if rule.exact {
            let mut value = S::zero();
            for i in 0..rule.len() {
                value += rule.weights[i] * self.jump_op(spec, phi, rule.node(i), which, op);
            }
            return Quadrature { value, std_error: S::zero() };
        }
        // Same estimator as LevyMeasure::integrate, without a closure borrow of self.
        let n = S::from_usize_lossy(rule.len());
        let mut sum = S::zero();
        let mut sum_sq = S::zero();
        for i in 0..rule.len() {
            let v = self.jump_op(spec, phi, rule.node(i), which, op);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - S::one())).max(S::zero());
        let mass = nu.total_mass();
        Quadrature { value: mass * mean, std_error: mass * (var / n).sqrt() }
    }
}

/// Pointwise terms for one test function: `φ`, `𝓛φ`, `𝓜ᵏφ`,
/// `∫Jφ dν₀` (η), `∫Jφ dν₁` and `∫Iφ dν₁` (ξ).
#[derive(Clone, Debug, PartialEq)]
pub struct PointTerms<S> {
    pub value: S,
    pub l: S,
    pub m: Vec<S>,
    pub j_eta: S,
    pub j_xi: S,
    pub i_xi: S,
}

impl<S: Scalar> PointTerms<S> {
    pub fn new(dim_y: usize) -> Self {
        Self { value: S::zero(), l: S::zero(), m: vec![S::zero(); dim_y], j_eta: S::zero(), j_xi: S::zero(), i_xi: S::zero() }
    }
}

fn finite_or<S: Scalar>(v: S, op: &'static str, x: &[S]) -> Result<S, OperatorError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OperatorError::NonFinite { op, x: x.iter().map(|v| v.as_f64()).collect() })
    }
}

fn prepared<S: Scalar>(ctx: &OperatorContext<'_, S>, x: &[S]) -> Result<PointOperators<S>, OperatorError> {
    let mut p = PointOperators::new(ctx.spec);
    if x.len() != ctx.spec.dim_x {
        return Err(ModelError::Dimension { what: "x".into(), expected: ctx.spec.dim_x, found: x.len() }.into());
    }
    p.at(ctx.spec, ctx.t, x, ctx.y)?;
    Ok(p)
}

fn check_mark<S: Scalar>(ctx: &OperatorContext<'_, S>, which: JumpKind, mark: &[S]) -> Result<(), OperatorError> {
    let expected = ctx.spec.levy(which).mark_dim();
    if mark.len() != expected {
        return Err(OperatorError::MarkDimension { expected, found: mark.len() });
    }
    Ok(())
}

pub fn apply_l<S: Scalar, F: TestFunction<S> + ?Sized>(ctx: &OperatorContext<'_, S>, phi: &F, x: &[S]) -> Result<S, OperatorError> {
    let mut p = prepared(ctx, x)?;
    finite_or(p.l(phi), "L", x)
}

/// `𝓜ᵏφ(x)` with a zero-based component index `k < d'`.
pub fn apply_m<S: Scalar, F: TestFunction<S> + ?Sized>(
    ctx: &OperatorContext<'_, S>,
    phi: &F,
    x: &[S],
    k: usize,
) -> Result<S, OperatorError> {
    if k >= ctx.spec.dim_y {
        return Err(OperatorError::IndexOutOfRange { index: k, dim: ctx.spec.dim_y });
    }
    let mut p = prepared(ctx, x)?;
    finite_or(p.m(phi, k), "M", x)
}

fn apply_jump<S: Scalar, F: TestFunction<S> + ?Sized>(
    ctx: &OperatorContext<'_, S>,
    phi: &F,
    x: &[S],
    mark: &[S],
    which: JumpKind,
    op: JumpOperator,
) -> Result<S, OperatorError> {
    check_mark(ctx, which, mark)?;
    let mut p = prepared(ctx, x)?;
    let jump = p.jump_vector(ctx.spec, which, mark);
    if !crate::scalar::all_finite(jump) {
        return Err(OperatorError::NonFiniteJump {
            x: x.iter().map(|v| v.as_f64()).collect(),
            mark: mark.iter().map(|v| v.as_f64()).collect(),
        });
    }
    let name = if op == JumpOperator::I { "I" } else { "J" };
    finite_or(p.jump_op(ctx.spec, phi, mark, which, op), name, x)
}

pub fn apply_i<S: Scalar, F: TestFunction<S> + ?Sized>(
    ctx: &OperatorContext<'_, S>,
    phi: &F,
    x: &[S],
    mark: &[S],
    which: JumpKind,
) -> Result<S, OperatorError> {
    apply_jump(ctx, phi, x, mark, which, JumpOperator::I)
}

pub fn apply_j<S: Scalar, F: TestFunction<S> + ?Sized>(
    ctx: &OperatorContext<'_, S>,
    phi: &F,
    x: &[S],
    mark: &[S],
    which: JumpKind,
) -> Result<S, OperatorError> {
    apply_jump(ctx, phi, x, mark, which, JumpOperator::J)
}

/// `∫ (Iφ or Jφ)(x, mark) ν(dmark)` for `ν = ν₀` (η) or `ν₁` (ξ).
pub fn integrate_jump_operator<S: Scalar, F: TestFunction<S> + ?Sized>(
    ctx: &OperatorContext<'_, S>,
    phi: &F,
    x: &[S],
    which: JumpKind,
    op: JumpOperator,
) -> Result<Quadrature<S>, OperatorError> {
    let mut p = prepared(ctx, x)?;
    let q = p.integrated(ctx.spec, phi, which, op);
    finite_or(q.value, "jump integral", x)?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::test_functions::{builtin_test_functions, Builtin};
    use crate::model::{zoo, Atom, JumpField, LevyMeasure, MatrixField, VectorField};
    use crate::rng::{Purpose, StreamKey};
    use rand::Rng;
    use std::collections::BTreeMap;

    fn scalar_spec(b: VectorField<f64>, sigma: f64, rho: f64, big_b: VectorField<f64>) -> ModelSpec<f64> {
        let mut m = zoo::build::<f64>("zero", &BTreeMap::new()).unwrap();
        m.drift = b;
        m.sigma = MatrixField::Constant(Matrix::scalar(sigma));
        m.rho = MatrixField::Constant(Matrix::scalar(rho));
        m.obs_drift = big_b;
        m
    }

    fn x_pow(p: u8) -> Builtin<f64> {
        Builtin::Monomial { dim: 1, coord: 0, power: p }
    }

    #[test]
    fn l_examples() {
        let y = [0.0];
        let spec = scalar_spec(VectorField::constant(vec![2.0], 2), 0.0, 0.0, VectorField::zero(1, 2));
        let ctx = OperatorContext::new(&spec, 0.0, &y);
        assert_eq!(apply_l(&ctx, &x_pow(1), &[0.7]).unwrap(), 2.0);

        let spec = scalar_spec(VectorField::zero(1, 2), 1.0, 1.0, VectorField::zero(1, 2));
        let ctx = OperatorContext::new(&spec, 0.0, &y);
        assert_eq!(apply_l(&ctx, &x_pow(2), &[0.7]).unwrap(), 2.0);

        // φ = sin, b(x) = x, σ = √2: a = 1 so 𝓛φ = -sin x + x cos x
        let spec = scalar_spec(VectorField::linear(Matrix::from_f64(1, 2, &[1.0, 0.0])), 2f64.sqrt(), 0.0, VectorField::zero(1, 2));
        let ctx = OperatorContext::new(&spec, 0.0, &y);
        let sin = Builtin::Sine { dim: 1, coord: 0, freq: 1.0 };
        for &x in &[-1.3, 0.0, 0.4, 2.2] {
            let got = apply_l(&ctx, &sin, &[x]).unwrap();
            let expected = -f64::sin(x) + x * f64::cos(x);
            assert!((got - expected).abs() < 1e-12);
            // finite-difference cross-check of the same expression
            let h = 1e-4;
            let fd2 = (f64::sin(x + h) - 2.0 * f64::sin(x) + f64::sin(x - h)) / (h * h);
            let fd1 = (f64::sin(x + h) - f64::sin(x - h)) / (2.0 * h);
            assert!((got - (fd2 + x * fd1)).abs() < 1e-6);
        }
    }

    #[test]
    fn m_examples() {
        let y = [0.0];
        let spec = scalar_spec(VectorField::zero(1, 2), 1.0, 0.0, VectorField::zero(1, 2));
        let ctx = OperatorContext::new(&spec, 0.0, &y);
        for f in builtin_test_functions::<f64>(1) {
            assert_eq!(apply_m(&ctx, &f, &[0.3], 0).unwrap(), 0.0);
        }
        let spec = scalar_spec(VectorField::zero(1, 2), 1.0, -3.0, VectorField::linear(Matrix::from_f64(1, 2, &[1.0, 0.0])));
        let ctx = OperatorContext::new(&spec, 0.0, &y);
        assert_eq!(apply_m(&ctx, &Builtin::one(1), &[0.8], 0).unwrap(), 0.8);

        let spec = scalar_spec(VectorField::zero(1, 2), 0.0, 0.5, VectorField::constant(vec![1.0], 2));
        let ctx = OperatorContext::new(&spec, 0.0, &y);
        assert_eq!(apply_m(&ctx, &x_pow(1), &[1.5], 0).unwrap(), 0.5 + 1.5);
        assert!(matches!(apply_m(&ctx, &x_pow(1), &[1.5], 1), Err(OperatorError::IndexOutOfRange { .. })));
    }

    fn with_xi(xi: JumpField<f64>, nu1: LevyMeasure<f64>) -> ModelSpec<f64> {
        let mut m = zoo::build::<f64>("zero", &BTreeMap::new()).unwrap();
        m.xi = xi;
        m.nu1 = nu1;
        m
    }

    #[test]
    fn jump_examples() {
        let y = [0.0];
        let zero = with_xi(JumpField::Zero { dim: 1 }, LevyMeasure::empty(1));
        let ctx = OperatorContext::new(&zero, 0.0, &y);
        assert_eq!(apply_i(&ctx, &x_pow(2), &[1.0], &[0.4], JumpKind::Xi).unwrap(), 0.0);
        assert_eq!(apply_j(&ctx, &x_pow(2), &[1.0], &[0.4], JumpKind::Xi).unwrap(), 0.0);

        let ident = with_xi(JumpField::MarkProportional { matrix: Matrix::scalar(1.0) }, LevyMeasure::empty(1));
        let ctx = OperatorContext::new(&ident, 0.0, &y);
        assert_eq!(apply_i(&ctx, &x_pow(1), &[1.0], &[0.4], JumpKind::Xi).unwrap(), 0.4);
        assert_eq!(apply_j(&ctx, &x_pow(1), &[1.0], &[0.4], JumpKind::Xi).unwrap(), 0.0);

        let c = 0.75;
        let konst = with_xi(JumpField::Constant { value: vec![c] }, LevyMeasure::empty(1));
        let ctx = OperatorContext::new(&konst, 0.0, &y);
        let x = 1.25;
        let i = apply_i(&ctx, &x_pow(2), &[x], &[9.0], JumpKind::Xi).unwrap();
        assert!((i - (2.0 * c * x + c * c)).abs() < 1e-14);
        let j = apply_j(&ctx, &x_pow(2), &[x], &[9.0], JumpKind::Xi).unwrap();
        assert!((j - c * c).abs() < 1e-14);
        assert!(matches!(apply_i(&ctx, &x_pow(2), &[x], &[9.0, 1.0], JumpKind::Xi), Err(OperatorError::MarkDimension { .. })));
    }

    #[test]
    fn integrated_examples() {
        let y = [0.0];
        let empty = with_xi(JumpField::MarkProportional { matrix: Matrix::scalar(1.0) }, LevyMeasure::empty(1));
        let ctx = OperatorContext::new(&empty, 0.0, &y);
        let q = integrate_jump_operator(&ctx, &x_pow(2), &[0.3], JumpKind::Xi, JumpOperator::J).unwrap();
        assert_eq!(q.value, 0.0);

        let nu = LevyMeasure::atomic(1, vec![Atom { mark: vec![1.0], mass: 2.0 }]).unwrap();
        let spec = with_xi(JumpField::MarkProportional { matrix: Matrix::scalar(1.0) }, nu);
        let ctx = OperatorContext::new(&spec, 0.0, &y);
        let q = integrate_jump_operator(&ctx, &x_pow(2), &[0.3], JumpKind::Xi, JumpOperator::J).unwrap();
        assert_eq!(q.value, 2.0);
        let q = integrate_jump_operator(&ctx, &Builtin::one(1), &[0.3], JumpKind::Xi, JumpOperator::I).unwrap();
        assert_eq!(q.value, 0.0);

        let rot = zoo::build::<f64>("rotation", &BTreeMap::new()).unwrap();
        let y = [0.0];
        let ctx = OperatorContext::new(&rot, 0.0, &y);
        let phi = Builtin::Gaussian { center: vec![0.0, 0.0], width: 1.0 };
        let q = integrate_jump_operator(&ctx, &phi, &[0.2, -0.1], JumpKind::Eta, JumpOperator::J).unwrap();
        assert!(q.std_error > 0.0 && q.value.is_finite());
    }

    #[test]
    fn random_point_properties() {
        let mut rng = StreamKey::new(11, Purpose::Fixture, 0, 0).rng();
        let d = 2;
        let mut spec = zoo::build::<f64>("rotation", &BTreeMap::new()).unwrap();
        spec.rho = MatrixField::Modulated { base: Matrix::from_f64(2, 1, &[0.3, -0.2]), gain: vec![0.5, 0.1, 0.2] };
        spec.xi = JumpField::Affine {
            state: Matrix::from_f64(2, 3, &[0.1, 0.0, 0.0, 0.0, -0.2, 0.05]),
            mark: Matrix::from_f64(2, 1, &[1.0, 0.5]),
            offset: vec![0.0, 0.1],
        };
        let mut flipped = spec.clone();
        flipped.sigma = MatrixField::Constant(Matrix::identity(2).scale(-0.5));
        flipped.rho = MatrixField::Modulated { base: Matrix::from_f64(2, 1, &[-0.3, 0.2]), gain: vec![0.5, 0.1, 0.2] };
        let fs = builtin_test_functions::<f64>(d);
        let one = Builtin::one(d);
        let lin = Builtin::coordinate(d, 1);
        for _ in 0..1000 {
            let t: f64 = rng.random_range(0.0..1.0);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = [rng.random_range(-2.0..2.0)];
            let mark = [rng.random_range(-2.0..2.0)];
            let ctx = OperatorContext::new(&spec, t, &y);
            let fctx = OperatorContext::new(&flipped, t, &y);
            let mut pts = PointOperators::new(&spec);
            pts.at(&spec, t, &x, &y).unwrap();
            let jump = pts.jump_vector(&spec, JumpKind::Xi, &mark).to_vec();
            let jump2: f64 = jump.iter().map(|v| v * v).sum();
            for f in &fs {
                let j = apply_j(&ctx, f, &x, &mark, JumpKind::Xi).unwrap();
                assert!(j.abs() <= 0.5 * (d * d) as f64 * f.bound() * jump2 + 1e-12);
                let l = apply_l(&ctx, f, &x).unwrap();
                let lf = apply_l(&fctx, f, &x).unwrap();
                assert!((l - lf).abs() <= 1e-12 * l.abs().max(1.0));
            }
            assert_eq!(apply_i(&ctx, &one, &x, &mark, JumpKind::Xi).unwrap(), 0.0);
            assert_eq!(apply_j(&ctx, &lin, &x, &mark, JumpKind::Xi).unwrap(), 0.0);
            let c = evaluate(&spec, t, &x, &y);
            assert_eq!(apply_m(&ctx, &one, &x, 0).unwrap(), c);
        }
    }

    #[test]
    fn fused_terms_match_individual_operators() {
        let spec = zoo::build::<f64>("ou_jumps", &BTreeMap::new()).unwrap();
        let mut pts = PointOperators::new(&spec);
        let mut terms = PointTerms::new(1);
        let y = [0.3];
        for &x in &[-1.0, 0.2, 1.7] {
            let ctx = OperatorContext::new(&spec, 0.1, &y);
            pts.at(&spec, 0.1, &[x], &y).unwrap();
            for f in builtin_test_functions::<f64>(1) {
                pts.residual_terms(&spec, &f, &mut terms);
                let close = |a: f64, b: f64| (a - b).abs() < 1e-13;
                assert!(close(terms.value, f.value(&[x])));
                assert!(close(terms.l, apply_l(&ctx, &f, &[x]).unwrap()));
                assert!(close(terms.m[0], apply_m(&ctx, &f, &[x], 0).unwrap()));
                let q = |which, op| integrate_jump_operator(&ctx, &f, &[x], which, op).unwrap().value;
                assert!(close(terms.j_eta, q(JumpKind::Eta, JumpOperator::J)));
                assert!(close(terms.j_xi, q(JumpKind::Xi, JumpOperator::J)));
                assert!(close(terms.i_xi, q(JumpKind::Xi, JumpOperator::I)));
            }
        }
    }

    fn evaluate(spec: &ModelSpec<f64>, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().chain(y).copied().collect();
        crate::model::evaluate_coefficients(spec, t, &z).unwrap().obs_b[0]
    }
}
