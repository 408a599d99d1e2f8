//! One-sided Jacobi SVD producing full `U` and `Vᵀ`.
//!
//! Rotations orthogonalize the columns of `Sᵀ` (one per channel). The
//! accumulated rotation is `U`; the rotated columns are `σ_i v_i`. Rows of
//! `Vᵀ` beyond the numerical rank are completed from a Householder basis of
//! the orthogonal complement.

use super::{Result, SubspaceError, SvdTriple};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::signal::Spectrogram;

const MAX_SWEEPS: usize = 80;

pub fn svd_decompose<T: Scalar>(spec: &Spectrogram<T>) -> Result<SvdTriple<T>> {
    svd_matrix(&spec.values)
}

pub fn svd_matrix<T: Scalar>(s: &Matrix<T>) -> Result<SvdTriple<T>> {
    if !s.is_finite() {
        return Err(SubspaceError::NonFiniteInput);
    }
    let (c, t) = s.shape();
    if c == 0 || t == 0 {
        return Err(SubspaceError::ShapeMismatch("empty matrix".into()));
    }

    // cols[j] is row j of S, i.e. column j of Sᵀ.
    let mut cols: Vec<Vec<T>> = (0..c).map(|i| s.row(i).to_vec()).collect();
    let mut rot: Vec<Vec<T>> =
        (0..c).map(|j| (0..c).map(|i| if i == j { T::one() } else { T::zero() }).collect()).collect();

    let eps = T::epsilon();
    let norm2: T = s.as_slice().iter().map(|&v| v * v).sum();
    let negligible = norm2 * eps * eps;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let (a, b, g) = dots(&cols[p], &cols[q]);
                if a <= negligible || b <= negligible {
                    continue;
                }
                if g.abs() <= eps * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (T::of(2.0) * g);
                let tan = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cos = T::one() / (T::one() + tan * tan).sqrt();
                let sin = cos * tan;
                rotate(&mut cols, p, q, cos, sin);
                rotate(&mut rot, p, q, cos, sin);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = cols.iter().map(|col| col.iter().map(|&v| v * v).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let k = c.min(t);
    let u = Matrix::from_fn(c, c, |i, j| rot[order[j]][i]);
    let sigma: Vec<T> = order[..k].iter().map(|&i| norms[i]).collect();

    let smax = sigma.first().copied().unwrap_or(T::zero());
    let rank_tol = smax * T::of_usize(c.max(t)) * eps;
    let mut vcols: Vec<Vec<T>> = Vec::with_capacity(t);
    for (&idx, &sv) in order[..k].iter().zip(&sigma) {
        if sv <= rank_tol || sv <= T::tiny() {
            break;
        }
        vcols.push(cols[idx].iter().map(|&v| v / sv).collect());
    }
    complete_basis(&mut vcols, t);

    let mut triple = SvdTriple { u, sigma, vt: Matrix::from_fn(t, t, |i, j| vcols[i][j]) };
    canonicalize_signs(&mut triple);
    Ok(triple)
}

/// Flips singular vector pairs so the largest-magnitude entry of every
/// column of `u` is positive; unpaired rows of `vt` are canonicalized alone.
pub fn canonicalize_signs<T: Scalar>(svd: &mut SvdTriple<T>) {
    let (c, t) = svd.shape();
    let k = c.min(t);
    for j in 0..c {
        let col = svd.u.column(j);
        if leading_is_negative(&col) {
            for i in 0..c {
                svd.u[(i, j)] = -svd.u[(i, j)];
            }
            if j < k {
                for x in 0..t {
                    svd.vt[(j, x)] = -svd.vt[(j, x)];
                }
            }
        }
    }
    for r in k..t {
        if leading_is_negative(svd.vt.row(r)) {
            for x in 0..t {
                svd.vt[(r, x)] = -svd.vt[(r, x)];
            }
        }
    }
}

fn leading_is_negative<T: Scalar>(v: &[T]) -> bool {
    let mut best = T::zero();
    let mut neg = false;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            neg = x < T::zero();
        }
    }
    neg
}

#[inline]
fn dots<T: Scalar>(x: &[T], y: &[T]) -> (T, T, T) {
    let (mut a, mut b, mut g) = (T::zero(), T::zero(), T::zero());
    for (&xi, &yi) in x.iter().zip(y) {
        a += xi * xi;
        b += yi * yi;
        g += xi * yi;
    }
    (a, b, g)
}

#[inline]
fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, cos: T, sin: T) {
    let (lo, hi) = cols.split_at_mut(q);
    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = cos * a - sin * b;
        *xq = sin * a + cos * b;
    }
}

/// Extends orthonormal `basis` (vectors of length `n`) to a full basis of `n` vectors.
fn complete_basis<T: Scalar>(basis: &mut Vec<Vec<T>>, n: usize) {
    let r = basis.len();
    if r >= n {
        return;
    }
    // Householder QR of the n x r matrix whose columns are `basis`.
    let mut a: Vec<Vec<T>> = basis.clone();
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(r);
    for j in 0..r {
        let x: Vec<T> = a[j][j..].to_vec();
        let xnorm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
        let alpha = if x[0] > T::zero() { -xnorm } else { xnorm };
        let mut w = x;
        w[0] -= alpha;
        let wnorm = w.iter().map(|&v| v * v).sum::<T>().sqrt();
        if wnorm > T::tiny() {
            for v in w.iter_mut() {
                *v /= wnorm;
            }
        }
        for col in a.iter_mut().skip(j) {
            reflect(&mut col[j..], &w);
        }
        reflectors.push(w);
    }
    // Q = H_0 H_1 ... H_{r-1}; its trailing columns span the complement.
    let mut q: Vec<Vec<T>> =
        (r..n).map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect()).collect();
    for (j, w) in reflectors.iter().enumerate().rev() {
        for col in q.iter_mut() {
            reflect(&mut col[j..], w);
        }
    }
    basis.extend(q);
}

#[inline]
fn reflect<T: Scalar>(x: &mut [T], w: &[T]) {
    let d: T = x.iter().zip(w).map(|(&a, &b)| a * b).sum();
    let d2 = d + d;
    for (xi, &wi) in x.iter_mut().zip(w) {
        *xi -= d2 * wi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(m: &Matrix<f64>) -> f64 {
        let g = m.transpose().matmul(m);
        g.frobenius_distance(&Matrix::identity(m.rows()))
    }

    fn rel_err(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        a.frobenius_distance(b) / b.frobenius_norm()
    }

    #[test]
    fn padded_diagonal() {
        let mut s = Matrix::<f64>::zeros(3, 5);
        s[(0, 0)] = 3.0;
        s[(1, 1)] = 2.0;
        s[(2, 2)] = 1.0;
        let svd = svd_matrix(&s).unwrap();
        assert_eq!(svd.sigma, vec![3.0, 2.0, 1.0]);
        assert!(svd.u.max_abs_diff(&Matrix::identity(3)) < 1e-15);
        assert!(svd.vt.max_abs_diff(&Matrix::identity(5)) < 1e-15);
    }

    #[test]
    fn unsorted_diagonal_is_permuted() {
        let mut s = Matrix::<f64>::zeros(3, 4);
        s[(0, 0)] = 1.0;
        s[(1, 1)] = -3.0;
        s[(2, 2)] = 2.0;
        let svd = svd_matrix(&s).unwrap();
        assert_eq!(svd.sigma, vec![3.0, 2.0, 1.0]);
        assert_eq!(svd.u[(1, 0)], 1.0);
        assert_eq!(svd.vt[(0, 1)], -1.0);
        assert!(rel_err(&svd.recompose(), &s) < 1e-15);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, 0.1, -0.7, 0.2, 0.9, -0.4];
        let s = Matrix::from_fn(4, 6, |i, j| u[i] * v[j]);
        let svd = svd_matrix(&s).unwrap();
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((svd.sigma[0] - nu * nv).abs() < 1e-12);
        assert!(svd.sigma[1..].iter().all(|&x| x.abs() < 1e-12));
        assert!(orthonormality_error(&svd.u) < 1e-12);
        assert!(orthonormality_error(&svd.vt.transpose()) < 1e-12);
        assert!(rel_err(&svd.recompose(), &s) < 1e-12);
    }

    #[test]
    fn short_and_wide_inputs() {
        for &(c, t) in &[(6, 3), (3, 6), (5, 5), (1, 4), (4, 1)] {
            let s = Matrix::from_fn(c, t, |i, j| ((i * 31 + j * 17) % 11) as f64 - 5.0 + 0.1 * i as f64);
            let svd = svd_matrix(&s).unwrap();
            assert_eq!(svd.u.shape(), (c, c));
            assert_eq!(svd.vt.shape(), (t, t));
            assert_eq!(svd.sigma.len(), c.min(t));
            assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
            assert!(orthonormality_error(&svd.u) < 1e-12, "{c}x{t}");
            assert!(orthonormality_error(&svd.vt.transpose()) < 1e-12, "{c}x{t}");
            assert!(rel_err(&svd.recompose(), &s) < 1e-12, "{c}x{t}");
        }
    }

    #[test]
    fn sign_convention_holds() {
        let s = Matrix::from_fn(5, 7, |i, j| ((i + 2 * j) as f64).sin() - 0.3 * i as f64);
        let svd = svd_matrix(&s).unwrap();
        for j in 0..5 {
            assert!(!leading_is_negative(&svd.u.column(j)));
        }
        for r in 5..7 {
            assert!(!leading_is_negative(svd.vt.row(r)));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = Matrix::<f64>::zeros(2, 2);
        s[(0, 1)] = f64::NAN;
        assert_eq!(svd_matrix(&s), Err(SubspaceError::NonFiniteInput));
    }

    #[test]
    fn zero_matrix_gives_full_bases() {
        let svd = svd_matrix(&Matrix::<f64>::zeros(3, 4)).unwrap();
        assert_eq!(svd.sigma, vec![0.0; 3]);
        assert!(orthonormality_error(&svd.vt.transpose()) < 1e-15);
    }
}
