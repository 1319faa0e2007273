//! Coordinate vectors and the duality pairing.
//!
//! Vectors and functionals share one representation. A functional `f` acts
//! on a vector `x` through the bilinear pairing `f(x) = sum_k f_k x_k` with
//! no conjugation, so the matrix transpose is the Banach adjoint and
//! `(T^T f)(x) = f(T x)` holds exactly. Norms, orthogonality and projections
//! use the sesquilinear inner product `<x, y> = sum_k x_k conj(y_k)`, under
//! which the norm of `f` as a functional equals its coordinate 2-norm.

use std::ops::{Add, Index, IndexMut, Sub};

use faer::c64;
use faer::Mat;

use crate::error::{LabError, Result};

/// A vector (or functional) in the first `D` canonical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CVector(Vec<c64>);

impl CVector {
    /// Wraps `entries`, rejecting NaN and infinite coordinates.
    pub fn new(entries: Vec<c64>) -> Result<Self> {
        if let Some(k) = entries.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::InvalidSpec(format!("non-finite entry at coordinate {k}")));
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![c64::new(0.0, 0.0); dim])
    }

    /// The canonical basis vector with a one at zero-based `index`.
    pub fn unit(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[index] = c64::new(1.0, 0.0);
        v
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> c64) -> Self {
        Self((0..dim).map(f).collect())
    }

    /// Real coordinates `f(k)` for one-based `k = 1..=dim`.
    pub fn from_real_fn(dim: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        Self((1..=dim).map(|k| c64::new(f(k), 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[c64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [c64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<c64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, c64> {
        self.0.iter()
    }

    /// Bilinear pairing `self(x) = sum_k self_k x_k`.
    pub fn pair(&self, x: &CVector) -> c64 {
        debug_assert_eq!(self.dim(), x.dim());
        self.0.iter().zip(&x.0).map(|(a, b)| a * b).sum()
    }

    /// Sesquilinear inner product `<self, y> = sum_k self_k conj(y_k)`.
    pub fn inner(&self, y: &CVector) -> c64 {
        debug_assert_eq!(self.dim(), y.dim());
        self.0.iter().zip(&y.0).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn norm(&self) -> f64 {
        // scaled accumulation keeps large resolvent vectors from overflowing
        let scale = self.0.iter().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let ss: f64 = self
            .0
            .iter()
            .map(|z| {
                let (a, b) = (z.re / scale, z.im / scale);
                a * a + b * b
            })
            .sum();
        scale * ss.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn scaled(&self, s: c64) -> CVector {
        CVector(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scaled_real(&self, s: f64) -> CVector {
        CVector(self.0.iter().map(|z| z * s).collect())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: c64, x: &CVector) {
        debug_assert_eq!(self.dim(), x.dim());
        for (y, v) in self.0.iter_mut().zip(&x.0) {
            *y += a * v;
        }
    }

    pub fn conj(&self) -> CVector {
        CVector(self.0.iter().map(|z| z.conj()).collect())
    }

    /// Unit-norm copy; `None` for the zero vector.
    pub fn normalized(&self) -> Option<CVector> {
        let n = self.norm();
        (n > 0.0).then(|| self.scaled_real(1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn to_col_mat(&self) -> Mat<c64> {
        Mat::from_fn(self.dim(), 1, |i, _| self.0[i])
    }

    pub fn from_mat_col(m: &Mat<c64>, j: usize) -> CVector {
        CVector((0..m.nrows()).map(|i| m[(i, j)]).collect())
    }
}

impl Index<usize> for CVector {
    type Output = c64;
    fn index(&self, i: usize) -> &c64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut c64 {
        &mut self.0[i]
    }
}

impl Add for &CVector {
    type Output = CVector;
    fn add(self, rhs: &CVector) -> CVector {
        CVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &CVector {
    type Output = CVector;
    fn sub(self, rhs: &CVector) -> CVector {
        CVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl From<Vec<c64>> for CVector {
    fn from(v: Vec<c64>) -> Self {
        CVector(v)
    }
}

/// Stacks vectors as the columns of a `dim x len` matrix.
pub fn columns_to_mat(vectors: &[CVector], dim: usize) -> Mat<c64> {
    Mat::from_fn(dim, vectors.len(), |i, j| vectors[j][i])
}

/// Stacks functionals as the rows of a `len x dim` matrix, so that
/// `(rows * x)_i = f_i(x)` under the bilinear pairing.
pub fn functionals_to_rows(functionals: &[CVector], dim: usize) -> Mat<c64> {
    Mat::from_fn(functionals.len(), dim, |i, j| functionals[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn pairing_is_bilinear_inner_is_sesquilinear() {
        let f = CVector::from(vec![c(0.0, 1.0), c(2.0, 0.0)]);
        let x = CVector::from(vec![c(0.0, 1.0), c(1.0, 1.0)]);
        assert_eq!(f.pair(&x), c(-1.0, 0.0) + c(2.0, 2.0));
        assert_eq!(f.inner(&x), c(1.0, 0.0) + c(2.0, -2.0));
    }

    #[test]
    fn norm_survives_huge_entries() {
        let v = CVector::from(vec![c(1e200, 0.0), c(0.0, 1e200)]);
        assert!((v.norm() / 1e200 - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(CVector::new(vec![c(f64::NAN, 0.0)]).is_err());
        assert!(CVector::new(vec![c(0.0, f64::INFINITY)]).is_err());
    }
}
