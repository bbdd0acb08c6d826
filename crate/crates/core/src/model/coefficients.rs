//! Parametric coefficient families.
//!
//! Coefficients are drawn from a small registry of named families instead of
//! arbitrary closures so every model can be described by a text config. All
//! families are autonomous; `t` is accepted for interface symmetry only.

use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// An `R^{d+d'} -> R^n` coefficient such as `b` or `B`.
#[derive(Clone, Debug, PartialEq)]
pub enum VectorField<S> {
    /// `M z + c`.
    Affine { matrix: Matrix<S>, offset: Vec<S> },
    /// `scale_i * tanh((M z + c)_i)`, bounded by `|scale_i|`.
    BoundedTanh { scale: Vec<S>, matrix: Matrix<S>, offset: Vec<S> },
    /// Planar rotation of the first two coordinates, `rate * (-z_1, z_0)`.
    Rotation { rate: S },
    /// `coef * z_i^2` for `i < dim`. Violates linear growth; used to exercise
    /// the assumption checker.
    Quadratic { coef: S, dim: usize },
}

impl<S: Scalar> VectorField<S> {
    pub fn zero(out: usize, input: usize) -> Self {
        Self::Affine { matrix: Matrix::zeros(out, input), offset: vec![S::zero(); out] }
    }

    pub fn constant(value: Vec<S>, input: usize) -> Self {
        Self::Affine { matrix: Matrix::zeros(value.len(), input), offset: value }
    }

    pub fn linear(matrix: Matrix<S>) -> Self {
        let out = matrix.rows;
        Self::Affine { matrix, offset: vec![S::zero(); out] }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Self::Affine { matrix, .. } | Self::BoundedTanh { matrix, .. } => matrix.rows,
            Self::Rotation { .. } => 2,
            Self::Quadratic { dim, .. } => *dim,
        }
    }

    /// Required input dimension, if the family fixes one.
    pub fn in_dim(&self) -> Option<usize> {
        match self {
            Self::Affine { matrix, .. } | Self::BoundedTanh { matrix, .. } => Some(matrix.cols),
            _ => None,
        }
    }

    #[inline]
    pub fn eval_into(&self, _t: S, z: &[S], out: &mut [S]) {
        match self {
            Self::Affine { matrix, offset } => {
                out.copy_from_slice(offset);
                matrix.mul_vec_add(z, out);
            }
            Self::BoundedTanh { scale, matrix, offset } => {
                out.copy_from_slice(offset);
                matrix.mul_vec_add(z, out);
                for (o, &s) in out.iter_mut().zip(scale) {
                    *o = s * o.tanh();
                }
            }
            Self::Rotation { rate } => {
                out[0] = -*rate * z[1];
                out[1] = *rate * z[0];
            }
            Self::Quadratic { coef, dim } => {
                for i in 0..*dim {
                    out[i] = *coef * z[i] * z[i];
                }
            }
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            Self::Affine { matrix, offset } => matrix.is_zero() && offset.iter().all(|v| v.is_zero()),
            Self::BoundedTanh { scale, .. } => scale.iter().all(|v| v.is_zero()),
            Self::Rotation { rate } => rate.is_zero(),
            Self::Quadratic { coef, .. } => coef.is_zero(),
        }
    }
}

/// A matrix-valued coefficient such as `sigma` or `rho`.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixField<S> {
    Constant(Matrix<S>),
    /// `base * (1 + tanh(gain . z) / 2)`; state dependent but bounded.
    Modulated {
        base: Matrix<S>,
        gain: Vec<S>,
    },
}

impl<S: Scalar> MatrixField<S> {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self::Constant(Matrix::zeros(rows, cols))
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Constant(m) | Self::Modulated { base: m, .. } => (m.rows, m.cols),
        }
    }

    #[inline]
    pub fn eval_into(&self, _t: S, z: &[S], out: &mut Matrix<S>) {
        match self {
            Self::Constant(m) => out.data.copy_from_slice(&m.data),
            Self::Modulated { base, gain } => {
                let g: S = gain.iter().zip(z).map(|(&a, &b)| a * b).sum();
                let f = S::one() + g.tanh() * S::lit(0.5);
                for (o, &b) in out.data.iter_mut().zip(&base.data) {
                    *o = b * f;
                }
            }
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            Self::Constant(m) | Self::Modulated { base: m, .. } => m.is_zero(),
        }
    }

    /// The constant value, if the field does not depend on the state.
    pub fn as_constant(&self) -> Option<&Matrix<S>> {
        match self {
            Self::Constant(m) => Some(m),
            Self::Modulated { base, gain } if gain.iter().all(|g| g.is_zero()) => Some(base),
            Self::Modulated { .. } => None,
        }
    }
}

/// A jump coefficient `eta(t, z, mark)` or `xi(t, z, mark)` with values in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub enum JumpField<S> {
    Zero {
        dim: usize,
    },
    Constant {
        value: Vec<S>,
    },
    /// `K mark`, the mark-proportional family. `xi(z, m) = m` is `K = I`.
    MarkProportional {
        matrix: Matrix<S>,
    },
    /// `A z + K mark + c`; the only family whose jump depends on the state.
    Affine {
        state: Matrix<S>,
        mark: Matrix<S>,
        offset: Vec<S>,
    },
}

impl<S: Scalar> JumpField<S> {
    pub fn out_dim(&self) -> usize {
        match self {
            Self::Zero { dim } => *dim,
            Self::Constant { value } => value.len(),
            Self::MarkProportional { matrix } => matrix.rows,
            Self::Affine { offset, .. } => offset.len(),
        }
    }

    pub fn mark_dim(&self) -> Option<usize> {
        match self {
            Self::MarkProportional { matrix } => Some(matrix.cols),
            Self::Affine { mark, .. } => Some(mark.cols),
            _ => None,
        }
    }

    #[inline]
    pub fn eval_into(&self, _t: S, z: &[S], mark: &[S], out: &mut [S]) {
        match self {
            Self::Zero { .. } => out.iter_mut().for_each(|o| *o = S::zero()),
            Self::Constant { value } => out.copy_from_slice(value),
            Self::MarkProportional { matrix } => matrix.mul_vec_into(mark, out),
            Self::Affine { state, mark: km, offset } => {
                out.copy_from_slice(offset);
                state.mul_vec_add(z, out);
                km.mul_vec_add(mark, out);
            }
        }
    }

    /// Adds `∫ field(z, mark) ν(dmark)` into `out`. Exact: every family is affine in the mark.
    pub fn add_integral(&self, z: &[S], nu: &crate::model::LevyMeasure<S>, out: &mut [S]) {
        let mass = nu.total_mass();
        let moment = nu.first_moment_ref();
        match self {
            Self::Zero { .. } => {}
            Self::Constant { value } => out.iter_mut().zip(value).for_each(|(o, &v)| *o += mass * v),
            Self::MarkProportional { matrix } => matrix.mul_vec_add(moment, out),
            Self::Affine { state, mark, offset } => {
                for (r, o) in out.iter_mut().enumerate() {
                    let mut at_zero = offset[r];
                    for (c, &zc) in z.iter().enumerate().take(state.cols) {
                        at_zero += state.get(r, c) * zc;
                    }
                    *o += mass * at_zero;
                }
                mark.mul_vec_add(moment, out);
            }
        }
    }

    /// True when the jump does not depend on the first `dim_x` state coordinates.
    pub fn is_x_independent(&self, dim_x: usize) -> bool {
        match self {
            Self::Affine { state, .. } => (0..state.rows).all(|r| (0..dim_x).all(|c| state.get(r, c).is_zero())),
            _ => true,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            Self::Zero { .. } => true,
            Self::Constant { value } => value.iter().all(|v| v.is_zero()),
            Self::MarkProportional { matrix } => matrix.is_zero(),
            Self::Affine { state, mark, offset } => state.is_zero() && mark.is_zero() && offset.iter().all(|v| v.is_zero()),
        }
    }
}
