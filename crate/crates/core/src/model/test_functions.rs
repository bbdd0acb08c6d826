//! Smooth bounded test functions with analytic derivatives.

use crate::scalar::Scalar;

/// A `C²_b` function on `R^d`. `hessian` writes a row-major `d x d` matrix.
pub trait TestFunction<S: Scalar>: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn value(&self, x: &[S]) -> S;
    fn gradient(&self, x: &[S], out: &mut [S]);
    fn hessian(&self, x: &[S], out: &mut [S]);
    /// Value, gradient and Hessian in one call.
    fn value_grad_hess(&self, x: &[S], grad: &mut [S], hess: &mut [S]) -> S {
        self.gradient(x, grad);
        self.hessian(x, hess);
        self.value(x)
    }
    /// `φ(x + h) − φ(x)`, where `shifted = x + h` is precomputed.
    /// Implementations may use `h` to make the difference exact.
    fn increment(&self, x: &[S], shifted: &[S], h: &[S]) -> S {
        let _ = h;
        self.value(shifted) - self.value(x)
    }
    /// Sup-norm bound on the value and every gradient and Hessian entry;
    /// infinite for the unbounded moment functions.
    fn bound(&self) -> S;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Builtin<S> {
    Constant {
        dim: usize,
        value: S,
    },
    Sine {
        dim: usize,
        coord: usize,
        freq: S,
    },
    Cosine {
        dim: usize,
        coord: usize,
        freq: S,
    },
    /// `1 / (1 + exp(-(w . x + c)))`.
    Sigmoid {
        weights: Vec<S>,
        offset: S,
    },
    /// `exp(-|x - c|² / (2 s²))`.
    Gaussian {
        center: Vec<S>,
        width: S,
    },
    /// `x_coord^power` for power 1 or 2. Unbounded, for moments and examples only.
    Monomial {
        dim: usize,
        coord: usize,
        power: u8,
    },
}

impl<S: Scalar> Builtin<S> {
    pub fn one(dim: usize) -> Self {
        Self::Constant { dim, value: S::one() }
    }

    pub fn coordinate(dim: usize, coord: usize) -> Self {
        Self::Monomial { dim, coord, power: 1 }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Constant { .. } | Self::Monomial { power: 1, .. })
    }
}

#[inline]
fn logistic<S: Scalar>(u: S) -> S {
    S::one() / (S::one() + (-u).exp())
}

impl<S: Scalar> TestFunction<S> for Builtin<S> {
    fn name(&self) -> String {
        match self {
            Self::Constant { value, .. } => format!("const_{value}"),
            Self::Sine { coord, freq, .. } => format!("sin_{freq}x{}", coord + 1),
            Self::Cosine { coord, freq, .. } => format!("cos_{freq}x{}", coord + 1),
            Self::Sigmoid { weights, offset } => {
                let w: Vec<String> = weights.iter().map(|w| w.to_string()).collect();
                format!("sigmoid_[{}]_{offset}", w.join(","))
            }
            Self::Gaussian { center, width } => {
                let c: Vec<String> = center.iter().map(|w| w.to_string()).collect();
                format!("gauss_[{}]_{width}", c.join(","))
            }
            Self::Monomial { coord, power, .. } => format!("x{}^{power}", coord + 1),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Self::Constant { dim, .. } | Self::Sine { dim, .. } | Self::Cosine { dim, .. } | Self::Monomial { dim, .. } => *dim,
            Self::Sigmoid { weights, .. } => weights.len(),
            Self::Gaussian { center, .. } => center.len(),
        }
    }

    #[inline]
    fn value(&self, x: &[S]) -> S {
        match self {
            Self::Constant { value, .. } => *value,
            Self::Sine { coord, freq, .. } => (*freq * x[*coord]).sin(),
            Self::Cosine { coord, freq, .. } => (*freq * x[*coord]).cos(),
            Self::Sigmoid { weights, offset } => logistic(crate::scalar::dot(weights, x) + *offset),
            Self::Gaussian { center, width } => {
                let r2: S = x.iter().zip(center).map(|(&a, &c)| (a - c) * (a - c)).sum();
                (-r2 / (S::lit(2.0) * *width * *width)).exp()
            }
            Self::Monomial { coord, power, .. } => x[*coord].powi(*power as i32),
        }
    }

    #[inline]
    fn gradient(&self, x: &[S], out: &mut [S]) {
        out.iter_mut().for_each(|o| *o = S::zero());
        match self {
            Self::Constant { .. } => {}
            Self::Sine { coord, freq, .. } => out[*coord] = *freq * (*freq * x[*coord]).cos(),
            Self::Cosine { coord, freq, .. } => out[*coord] = -*freq * (*freq * x[*coord]).sin(),
            Self::Sigmoid { weights, offset } => {
                let s = logistic(crate::scalar::dot(weights, x) + *offset);
                let ds = s * (S::one() - s);
                for (o, &w) in out.iter_mut().zip(weights) {
                    *o = w * ds;
                }
            }
            Self::Gaussian { center, width } => {
                let g = self.value(x);
                let s2 = *width * *width;
                for ((o, &a), &c) in out.iter_mut().zip(x).zip(center) {
                    *o = -(a - c) / s2 * g;
                }
            }
            Self::Monomial { coord, power, .. } => {
                out[*coord] = if *power == 1 { S::one() } else { S::lit(2.0) * x[*coord] };
            }
        }
    }

    #[inline]
    fn hessian(&self, x: &[S], out: &mut [S]) {
        out.iter_mut().for_each(|o| *o = S::zero());
        let d = self.dim();
        match self {
            Self::Constant { .. } => {}
            Self::Sine { coord, freq, .. } => out[coord * d + coord] = -*freq * *freq * (*freq * x[*coord]).sin(),
            Self::Cosine { coord, freq, .. } => out[coord * d + coord] = -*freq * *freq * (*freq * x[*coord]).cos(),
            Self::Sigmoid { weights, offset } => {
                let s = logistic(crate::scalar::dot(weights, x) + *offset);
                let d2 = s * (S::one() - s) * (S::one() - S::lit(2.0) * s);
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = weights[i] * weights[j] * d2;
                    }
                }
            }
            Self::Gaussian { center, width } => {
                let g = self.value(x);
                let s2 = *width * *width;
                for i in 0..d {
                    for j in 0..d {
                        let ui = x[i] - center[i];
                        let uj = x[j] - center[j];
                        let delta = if i == j { S::one() / s2 } else { S::zero() };
                        out[i * d + j] = (ui * uj / (s2 * s2) - delta) * g;
                    }
                }
            }
            Self::Monomial { coord, power, .. } => {
                if *power == 2 {
                    out[coord * d + coord] = S::lit(2.0);
                }
            }
        }
    }

    fn value_grad_hess(&self, x: &[S], grad: &mut [S], hess: &mut [S]) -> S {
        grad.iter_mut().for_each(|o| *o = S::zero());
        hess.iter_mut().for_each(|o| *o = S::zero());
        let d = self.dim();
        match self {
            Self::Sine { coord, freq, .. } | Self::Cosine { coord, freq, .. } => {
                let (s, c) = (*freq * x[*coord]).sin_cos();
                let f = *freq;
                let (v, dv) = if matches!(self, Self::Sine { .. }) { (s, c) } else { (c, -s) };
                grad[*coord] = f * dv;
                hess[coord * d + coord] = -f * f * v;
                v
            }
            Self::Sigmoid { weights, offset } => {
                let s = logistic(crate::scalar::dot(weights, x) + *offset);
                let d1 = s * (S::one() - s);
                let d2 = d1 * (S::one() - S::lit(2.0) * s);
                for i in 0..d {
                    grad[i] = weights[i] * d1;
                    for j in 0..d {
                        hess[i * d + j] = weights[i] * weights[j] * d2;
                    }
                }
                s
            }
            Self::Gaussian { center, width } => {
                let s2 = *width * *width;
                let r2: S = x.iter().zip(center).map(|(&a, &c)| (a - c) * (a - c)).sum();
                let g = (-r2 / (S::lit(2.0) * s2)).exp();
                for i in 0..d {
                    let ui = x[i] - center[i];
                    grad[i] = -ui / s2 * g;
                    for j in 0..d {
                        let uj = x[j] - center[j];
                        let delta = if i == j { S::one() / s2 } else { S::zero() };
                        hess[i * d + j] = (ui * uj / (s2 * s2) - delta) * g;
                    }
                }
                g
            }
            _ => {
                self.gradient(x, grad);
                self.hessian(x, hess);
                self.value(x)
            }
        }
    }

    #[inline]
    fn increment(&self, x: &[S], shifted: &[S], h: &[S]) -> S {
        match self {
            Self::Constant { .. } => S::zero(),
            Self::Monomial { coord, power: 1, .. } => h[*coord],
            Self::Monomial { coord, .. } => h[*coord] * (S::lit(2.0) * x[*coord] + h[*coord]),
            _ => self.value(shifted) - self.value(x),
        }
    }

    fn bound(&self) -> S {
        match self {
            Self::Constant { value, .. } => value.abs(),
            Self::Sine { freq, .. } | Self::Cosine { freq, .. } => {
                let f = freq.abs();
                S::one().max(f).max(f * f)
            }
            Self::Sigmoid { weights, .. } => {
                let w = weights.iter().fold(S::zero(), |m, &v| m.max(v.abs()));
                // max |s'| = 1/4, max |s''| = 1/(6 sqrt 3)
                S::one().max(w / S::lit(4.0)).max(w * w * S::lit(1.0 / (6.0 * 3f64.sqrt())))
            }
            Self::Gaussian { width, .. } => {
                let s = width.abs();
                S::one().max(S::lit((-0.5f64).exp()) / s).max(S::one() / (s * s))
            }
            Self::Monomial { .. } => S::infinity(),
        }
    }
}

/// Fixture basis used for measure evaluation: the constant 1, `sin`/`cos`
/// of every coordinate at frequencies 1 and 2, two logistic sigmoids and two
/// Gaussian bumps.
pub fn builtin_test_functions<S: Scalar>(dim: usize) -> Vec<Builtin<S>> {
    assert!(dim >= 1);
    let mut out = vec![Builtin::one(dim)];
    for coord in 0..dim {
        for freq in [1.0, 2.0] {
            out.push(Builtin::Sine { dim, coord, freq: S::lit(freq) });
            out.push(Builtin::Cosine { dim, coord, freq: S::lit(freq) });
        }
    }
    let inv = S::lit(1.0 / (dim as f64).sqrt());
    out.push(Builtin::Sigmoid { weights: vec![inv; dim], offset: S::zero() });
    let mut w = vec![S::zero(); dim];
    w[0] = S::lit(2.0);
    out.push(Builtin::Sigmoid { weights: w, offset: S::lit(-1.0) });
    out.push(Builtin::Gaussian { center: vec![S::zero(); dim], width: S::one() });
    out.push(Builtin::Gaussian { center: vec![S::lit(0.5); dim], width: S::lit(0.7) });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};
    use rand::Rng;

    fn fd_check(f: &Builtin<f64>, x: &[f64]) {
        let d = x.len();
        let h = 1e-5;
        let mut g = vec![0.0; d];
        f.gradient(x, &mut g);
        let mut hess = vec![0.0; d * d];
        f.hessian(x, &mut hess);
        let mut xp = x.to_vec();
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for i in 0..d {
            xp[i] = x[i] + h;
            let fp = f.value(&xp);
            f.gradient(&xp, &mut gp);
            xp[i] = x[i] - h;
            let fm = f.value(&xp);
            f.gradient(&xp, &mut gm);
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{}: grad {fd} vs {}", f.name(), g[i]);
            for j in 0..d {
                let fdh = (gp[j] - gm[j]) / (2.0 * h);
                let exact = hess[j * d + i];
                assert!((fdh - exact).abs() <= 1e-4 * exact.abs().max(1.0), "{}: hess {fdh} vs {exact}", f.name());
            }
        }
        let b = f.bound();
        assert!(f.value(x).abs() <= b);
        assert!(g.iter().all(|v| v.abs() <= b), "{} gradient exceeds bound", f.name());
        assert!(hess.iter().all(|v| v.abs() <= b), "{} hessian exceeds bound", f.name());
    }

    #[test]
    fn builtins_pass_finite_difference_checks() {
        for d in [1usize, 2, 3] {
            let fs = builtin_test_functions::<f64>(d);
            assert!(fs.len() >= 8);
            let mut rng = StreamKey::new(3, Purpose::Fixture, d as u64, 0).rng();
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                for f in &fs {
                    fd_check(f, &x);
                }
            }
        }
    }

    #[test]
    fn named_examples() {
        let one = Builtin::<f64>::one(2);
        let mut g = [9.0; 2];
        let mut h = [9.0; 4];
        one.gradient(&[0.3, 1.0], &mut g);
        one.hessian(&[0.3, 1.0], &mut h);
        assert_eq!(one.value(&[0.3, 1.0]), 1.0);
        assert_eq!(g, [0.0; 2]);
        assert_eq!(h, [0.0; 4]);

        let s = Builtin::<f64>::Sine { dim: 1, coord: 0, freq: 1.0 };
        let mut g1 = [0.0];
        let mut h1 = [0.0];
        s.gradient(&[0.0], &mut g1);
        s.hessian(&[0.0], &mut h1);
        assert_eq!((s.value(&[0.0]), g1[0], h1[0]), (0.0, 1.0, 0.0));

        // d²/dx² exp(-x²/2) = (x² - 1) exp(-x²/2) = -1 at 0
        let gauss = Builtin::<f64>::Gaussian { center: vec![0.0], width: 1.0 };
        gauss.gradient(&[0.0], &mut g1);
        gauss.hessian(&[0.0], &mut h1);
        assert_eq!((gauss.value(&[0.0]), g1[0], h1[0]), (1.0, 0.0, -1.0));
    }

    #[test]
    fn fused_evaluators_agree() {
        let mut rng = StreamKey::new(4, Purpose::Fixture, 0, 0).rng();
        for d in [1usize, 2] {
            let mut fs = builtin_test_functions::<f64>(d);
            fs.push(Builtin::Monomial { dim: d, coord: 0, power: 2 });
            for _ in 0..50 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                let h: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let shifted: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
                for f in &fs {
                    let (mut g, mut hs, mut g2, mut h2) = (vec![0.0; d], vec![0.0; d * d], vec![0.0; d], vec![0.0; d * d]);
                    let v = f.value_grad_hess(&x, &mut g, &mut hs);
                    f.gradient(&x, &mut g2);
                    f.hessian(&x, &mut h2);
                    assert!((v - f.value(&x)).abs() < 1e-15);
                    assert!(g.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-15));
                    assert!(hs.iter().zip(&h2).all(|(a, b)| (a - b).abs() < 1e-15));
                    let inc = f.increment(&x, &shifted, &h);
                    assert!((inc - (f.value(&shifted) - f.value(&x))).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let fs = builtin_test_functions::<f32>(1);
        for f in &fs {
            assert!(f.value(&[0.25]).is_finite());
            assert!(f.value(&[0.25]).abs() <= f.bound());
        }
    }
}
