//! Spectro-temporal decomposition of spectrograms.
//!
//! A `C x T` spectrogram factors as `S = U Σ Vᵀ`. The columns of `U` are
//! time-invariant spectral bases, the rows of `Vᵀ` time-varying temporal
//! bases. Augmentation perturbs `U` and recomposes with the original `Σ`
//! and `Vᵀ`, so the utterance keeps its duration and temporal structure.

mod svd;

pub use svd::{canonicalize_signs, svd_decompose, svd_matrix};

use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SubspaceError {
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("perturbation entries must lie in [-1, 1]")]
    DeltaOutOfRange,
}

pub type Result<T> = std::result::Result<T, SubspaceError>;

/// Full SVD of a `C x T` matrix.
///
/// `u` is `C x C`, `vt` is `T x T` and `sigma` holds the `min(C, T)`
/// singular values in descending order. Singular vectors are sign
/// canonical: the largest-magnitude entry of every column of `u` is
/// positive, and paired rows of `vt` follow their column of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub vt: Matrix<T>,
}

impl<T: Scalar> SvdTriple<T> {
    /// `(C, T)` of the decomposed matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.rows(), self.vt.rows())
    }

    /// `Σ` as a `C x T` rectangular diagonal matrix.
    pub fn sigma_matrix(&self) -> Matrix<T> {
        let (c, t) = self.shape();
        let mut m = Matrix::zeros(c, t);
        for (i, &s) in self.sigma.iter().enumerate() {
            m[(i, i)] = s;
        }
        m
    }

    pub fn recompose(&self) -> Matrix<T> {
        recompose(&self.u, &self.sigma, &self.vt).expect("triple is self-consistent")
    }
}

/// `U · Σ · Vᵀ` for a `C x C` `u`, `min(C, T)` singular values and a `T x T` `vt`.
///
/// Only the first `min(C, T)` columns of `u` and rows of `vt` contribute.
pub fn recompose<T: Scalar>(u: &Matrix<T>, sigma: &[T], vt: &Matrix<T>) -> Result<Matrix<T>> {
    let (c, c2) = u.shape();
    let (t, t2) = vt.shape();
    if c != c2 || t != t2 {
        return Err(SubspaceError::ShapeMismatch(format!("u {c}x{c2} and vt {t}x{t2} must be square")));
    }
    if sigma.len() != c.min(t) {
        return Err(SubspaceError::ShapeMismatch(format!("sigma has {} values, expected min({c}, {t})", sigma.len())));
    }
    let mut out = Matrix::zeros(c, t);
    for (k, &s) in sigma.iter().enumerate() {
        if s == T::zero() {
            continue;
        }
        let vrow = vt.row(k);
        for i in 0..c {
            let a = u[(i, k)] * s;
            if a == T::zero() {
                continue;
            }
            for (j, &v) in vrow.iter().enumerate() {
                out[(i, j)] += a * v;
            }
        }
    }
    Ok(out)
}

/// `U + lambda · delta_raw` where `delta_raw` is a bounded generator output.
///
/// The result is not re-orthogonalized.
pub fn apply_perturbation<T: Scalar>(u: &Matrix<T>, delta_raw: &Matrix<T>, lambda: T) -> Result<Matrix<T>> {
    if u.shape() != delta_raw.shape() {
        return Err(SubspaceError::ShapeMismatch(format!(
            "bases {:?} vs perturbation {:?}",
            u.shape(),
            delta_raw.shape()
        )));
    }
    if delta_raw.as_slice().iter().any(|d| !(d.abs() <= T::one())) {
        return Err(SubspaceError::DeltaOutOfRange);
    }
    let bound = lambda.abs();
    let data =
        u.as_slice().iter().zip(delta_raw.as_slice()).map(|(&a, &d)| bounded_step(a, lambda * d, bound)).collect();
    Ok(Matrix::from_vec(u.rows(), u.cols(), data))
}

/// `a + step`, pulled back toward `a` until the rounded difference is within `bound`.
fn bounded_step<T: Scalar>(a: T, step: T, bound: T) -> T {
    let mut v = a + step;
    let ulp = |x: T| (x.abs() * T::epsilon()).max(T::min_positive_value());
    while (v - a).abs() > bound {
        v = if v > a { v - ulp(v) } else { v + ulp(v) };
    }
    v
}

/// Spectral bases after perturbation, with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedBases<T> {
    pub u_prime: Matrix<T>,
    pub lambda: T,
    pub source_utt: String,
    pub target_speaker: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lambda_is_exact() {
        let u = Matrix::from_fn(4, 4, |i, j| (i as f64 - j as f64) * 0.1);
        let d = Matrix::from_fn(4, 4, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -0.5 });
        assert_eq!(apply_perturbation(&u, &d, 0.0).unwrap(), u);
    }

    #[test]
    fn perturbation_respects_lambda_bound() {
        let u = Matrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.2 - 0.4);
        let d = Matrix::from_fn(5, 5, |i, j| if i == j { 1.0 } else { -1.0 });
        for lambda in [0.1, 0.2] {
            let up = apply_perturbation(&u, &d, lambda).unwrap();
            assert!(up.max_abs_diff(&u) <= lambda);
        }
    }

    #[test]
    fn perturbation_errors() {
        let u = Matrix::<f64>::identity(3);
        assert!(matches!(apply_perturbation(&u, &Matrix::zeros(3, 2), 0.1), Err(SubspaceError::ShapeMismatch(_))));
        let mut d = Matrix::zeros(3, 3);
        d[(1, 1)] = 1.5;
        assert_eq!(apply_perturbation(&u, &d, 0.1), Err(SubspaceError::DeltaOutOfRange));
    }

    #[test]
    fn zero_sigma_recomposes_to_zero() {
        let u = Matrix::<f64>::identity(3);
        let vt = Matrix::<f64>::identity(5);
        let s = recompose(&u, &[0.0; 3], &vt).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(recompose(&u, &[0.0; 2], &vt), Err(SubspaceError::ShapeMismatch(_))));
    }
}
