//! Thin wrappers over faer used across the crate.

use faer::c64;
use faer::prelude::*;
use faer::Mat;

use crate::error::{LabError, Result};

pub(crate) fn czero() -> c64 {
    c64::new(0.0, 0.0)
}

pub(crate) fn cone() -> c64 {
    c64::new(1.0, 0.0)
}

/// Singular values in nonincreasing order.
pub fn singular_values(a: &Mat<c64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    let s = a
        .singular_values()
        .map_err(|e| LabError::Backend(format!("svd: {e:?}")))?;
    Ok(s)
}

pub fn spectral_norm(a: &Mat<c64>) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Thin SVD factors `(U, s, V)`.
pub fn thin_svd(a: &Mat<c64>) -> Result<(Mat<c64>, Vec<f64>, Mat<c64>)> {
    let svd = a
        .thin_svd()
        .map_err(|e| LabError::Backend(format!("thin svd: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((svd.U().to_owned(), s, svd.V().to_owned()))
}

/// Full SVD factors `(U, s, V)` with square `U` and `V`.
pub fn full_svd(a: &Mat<c64>) -> Result<(Mat<c64>, Vec<f64>, Mat<c64>)> {
    let svd = a.svd().map_err(|e| LabError::Backend(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((svd.U().to_owned(), s, svd.V().to_owned()))
}

/// Number of singular values strictly above `cut`.
pub fn rank_above(s: &[f64], cut: f64) -> usize {
    s.iter().filter(|&&x| x > cut).count()
}

/// Orthonormal basis of the orthogonal complement of the column span of an
/// orthonormal `q` (`dim x k`), returned as `dim x (dim - k)`.
pub fn orthonormal_complement(q: &Mat<c64>) -> Mat<c64> {
    let (n, k) = (q.nrows(), q.ncols());
    if k == 0 {
        return Mat::identity(n, n);
    }
    let full = q.qr().compute_Q();
    full.subcols(k, n - k).to_owned()
}

/// Orthonormal basis for the column span of `a`, keeping singular values
/// above `rel_cut * sigma_1` (and above `abs_floor`).
pub fn orthonormal_range(a: &Mat<c64>, rel_cut: f64, abs_floor: f64) -> Result<Mat<c64>> {
    if a.ncols() == 0 {
        return Ok(Mat::zeros(a.nrows(), 0));
    }
    let (u, s, _) = thin_svd(a)?;
    let cut = (rel_cut * s.first().copied().unwrap_or(0.0)).max(abs_floor);
    let r = rank_above(&s, cut);
    Ok(u.subcols(0, r).to_owned())
}

/// `A^T` without conjugation.
pub fn transpose(a: &Mat<c64>) -> Mat<c64> {
    a.transpose().to_owned()
}

pub fn adjoint(a: &Mat<c64>) -> Mat<c64> {
    a.adjoint().to_owned()
}

/// `s * a`
pub fn scale(a: &Mat<c64>, s: c64) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// Entrywise conjugate.
pub fn conj(a: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

pub fn frobenius(a: &Mat<c64>) -> f64 {
    a.norm_l2()
}

/// Largest entrywise modulus.
pub fn max_abs(a: &Mat<c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Column 2-norms.
pub fn column_norms(a: &Mat<c64>) -> Vec<f64> {
    (0..a.ncols()).map(|j| a.col(j).norm_l2()).collect()
}

/// Solves `a x = b` by partial-pivot LU.
pub fn lu_solve(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    a.partial_piv_lu().solve(b)
}

/// Max deviation of `q^H q` from the identity.
pub fn orthonormality_defect(q: &Mat<c64>) -> f64 {
    if q.ncols() == 0 {
        return 0.0;
    }
    let g = q.adjoint() * q;
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { cone() } else { czero() };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Eigenvalues of a square dense matrix.
pub fn eigenvalues(a: &Mat<c64>) -> Result<Vec<c64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.eigenvalues()
        .map_err(|e| LabError::Backend(format!("eigenvalues: {e:?}")))
}

/// Eigenvalues and right eigenvectors (as columns).
pub fn eigen(a: &Mat<c64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let evd = a.eigen().map_err(|e| LabError::Backend(format!("eigen: {e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

/// Principal-angle sines between two orthonormal bases of equal dimension:
/// the largest singular value of `(I - Q_a Q_a^H) Q_b`.
pub fn subspace_distance(qa: &Mat<c64>, qb: &Mat<c64>) -> Result<f64> {
    let proj = qa * (qa.adjoint() * qb);
    let resid = qb - &proj;
    spectral_norm(&resid)
}
