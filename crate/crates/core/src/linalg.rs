//! Dense complex linear algebra helpers shared by the state and solver modules.

use nalgebra::DMatrix;
use ndarray::{Array2, Zip};

use crate::{CMatrix, C64};

pub fn zeros(n: usize) -> CMatrix {
    Array2::zeros((n, n))
}

pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.t().mapv(|v| v.conj())
}

/// `(A + A*)/2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    let mut out = a.clone();
    Zip::from(&mut out).and(&a.t()).for_each(|o, &b| *o = (*o + b.conj()) * 0.5);
    out
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    Zip::from(a).and(&a.t()).for_each(|&x, &y| worst = worst.max((x - y.conj()).norm()));
    worst
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.norm()))
}

pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diag().sum()
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Columns of the returned matrix are the orthonormal eigenvectors.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| (a[[i, j]] + a[[j, i]].conj()) * 0.5);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, col]] = eig.eigenvectors[(row, k)];
        }
    }
    (vals, vecs)
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| (a[[i, j]] + a[[j, i]].conj()) * 0.5);
    let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Singular values of a general complex matrix.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, a.ncols(), |i, j| a[[i, j]]);
    m.singular_values().iter().copied().collect()
}

/// `V diag(w) V*`.
pub fn reconstruct(vals: &[f64], vecs: &CMatrix) -> CMatrix {
    let mut scaled = vecs.clone();
    for (mut col, &w) in scaled.columns_mut().into_iter().zip(vals) {
        col.mapv_inplace(|v| v * w);
    }
    scaled.dot(&adjoint(vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs() {
        let n = 6;
        let a = Array2::from_shape_fn((n, n), |(i, j)| {
            C64::new((i * 7 + j * 3) as f64 % 5.0, (i as f64 - j as f64) * 0.3)
        });
        let h = hermitian_part(&a);
        let (vals, vecs) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let back = reconstruct(&vals, &vecs);
        assert!(max_abs(&(&back - &h)) < 1e-12);
        let only = hermitian_eigenvalues(&h);
        for (a, b) in only.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_values_of_diagonal() {
        let mut a = zeros(3);
        a[[0, 0]] = C64::new(-2.0, 0.0);
        a[[1, 1]] = C64::new(0.0, 3.0);
        a[[2, 2]] = C64::new(1.0, 0.0);
        let mut s = singular_values(&a);
        s.sort_by(f64::total_cmp);
        assert!((s[0] - 1.0).abs() < 1e-14 && (s[1] - 2.0).abs() < 1e-14 && (s[2] - 3.0).abs() < 1e-14);
    }
}
