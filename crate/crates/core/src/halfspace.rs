//! Subspaces cut out by functionals, and how far an operator is from
//! leaving them invariant.
//!
//! A [`HalfSpaceRep`] keeps an orthonormal basis `B` of the common null
//! space of its defining functionals together with an orthonormal basis `C`
//! of the orthogonal complement. Under the bilinear pairing, `f(x) = 0` for
//! all defining `f` exactly when `x` is orthogonal to every `conj(f)`, so
//! `C` spans the conjugated functionals.

use faer::c64;
use faer::Mat;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg;
use crate::operator::{operator_norm, OperatorRep};
use crate::perturbation::PerturbationRep;
use crate::vector::{functionals_to_rows, CVector};

/// Relative singular-value cut for the rank of a functional family.
pub const FUNCTIONAL_RANK_CUT: f64 = 1e-12;

/// Default tolerance for the defect precondition and invariance checks.
pub const TOL_INVARIANCE: f64 = 1e-8;

/// Columns processed at once when applying operators to a basis.
const BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceRep {
    pub defining_functionals: Vec<CVector>,
    /// `D x dim`, orthonormal.
    pub basis: Mat<c64>,
    /// `D x codim`, orthonormal, orthogonal to `basis`.
    pub complement: Mat<c64>,
    pub dim: usize,
    pub codim_in_truncation: usize,
    /// Set when a few functionals (at most `D/8`) stand in for infinite
    /// dimension and codimension.
    pub halfspace_proxy_flag: bool,
}

fn proxy_flag(codim: usize, ambient: usize) -> bool {
    codim >= 1 && codim <= ambient / 8
}

impl HalfSpaceRep {
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Column `j` of the basis.
    pub fn basis_vector(&self, j: usize) -> CVector {
        CVector::from_mat_col(&self.basis, j)
    }

    /// The span of `vectors`, with defining functionals the conjugated
    /// complement basis.
    pub fn from_span(vectors: &Mat<c64>) -> Result<Self> {
        let d = vectors.nrows();
        let basis = linalg::orthonormal_range(vectors, FUNCTIONAL_RANK_CUT, 0.0)?;
        let complement = linalg::orthonormal_complement(&basis);
        let defining_functionals = (0..complement.ncols())
            .map(|j| CVector::from_mat_col(&complement, j).conj())
            .collect();
        let dim = basis.ncols();
        Ok(Self {
            defining_functionals,
            dim,
            codim_in_truncation: d - dim,
            halfspace_proxy_flag: proxy_flag(d - dim, d),
            basis,
            complement,
        })
    }

    /// `max |f(b)| / |f|` over basis vectors and defining functionals.
    pub fn annihilation_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for f in &self.defining_functionals {
            let nf = f.norm();
            if nf == 0.0 {
                continue;
            }
            for j in 0..self.dim {
                let v: c64 = (0..self.ambient_dim()).map(|i| f[i] * self.basis[(i, j)]).sum();
                worst = worst.max(v.norm() / nf);
            }
        }
        worst
    }

    pub fn orthonormality_defect(&self) -> f64 {
        linalg::orthonormality_defect(&self.basis)
    }
}

/// The pre-annihilator of `functionals` inside the first `dim` coordinates.
pub fn preannihilator(functionals: &[CVector], dim: usize) -> Result<HalfSpaceRep> {
    if let Some(bad) = functionals.iter().find(|f| f.dim() != dim) {
        return Err(LabError::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let complement = if functionals.is_empty() {
        Mat::zeros(dim, 0)
    } else {
        let a = functionals_to_rows(functionals, dim);
        let (_, s, v) = linalg::thin_svd(&a)?;
        let cut = FUNCTIONAL_RANK_CUT * s.first().copied().unwrap_or(0.0);
        let r = if s.first().copied().unwrap_or(0.0) == 0.0 {
            0
        } else {
            linalg::rank_above(&s, cut)
        };
        v.subcols(0, r).to_owned()
    };
    let basis = linalg::orthonormal_complement(&complement);
    let rank = complement.ncols();
    Ok(HalfSpaceRep {
        defining_functionals: functionals.to_vec(),
        dim: dim - rank,
        codim_in_truncation: rank,
        halfspace_proxy_flag: proxy_flag(rank, dim),
        basis,
        complement,
    })
}

/// Singular values above `max(rel * sigma_1, abs)` count toward the rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankCut {
    pub rel: f64,
    pub abs: f64,
}

impl Default for RankCut {
    fn default() -> Self {
        Self { rel: 1e-8, abs: 1e-10 }
    }
}

impl RankCut {
    pub fn threshold(&self, s: &[f64]) -> f64 {
        (self.rel * s.first().copied().unwrap_or(0.0)).max(self.abs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectReport {
    pub defect: usize,
    pub residual_spectrum: Vec<f64>,
    pub threshold: f64,
}

impl DefectReport {
    /// `sigma_1 / sigma_2`, infinite when the second value is zero or absent.
    pub fn gap(&self) -> f64 {
        match self.residual_spectrum.as_slice() {
            [] => f64::NAN,
            [_] => f64::INFINITY,
            [a, b, ..] => {
                if *b == 0.0 {
                    f64::INFINITY
                } else {
                    a / b
                }
            }
        }
    }
}

/// `T^H` applied to every column of `m`.
fn apply_conj_transpose_mat(t: &OperatorRep, m: &Mat<c64>) -> Mat<c64> {
    linalg::conj(&t.apply_transpose_mat(&linalg::conj(m)))
}

/// `C^H T B`, whose singular values are those of `(I - P_Y) T B`.
fn compression(t: &OperatorRep, y: &HalfSpaceRep) -> Mat<c64> {
    if y.codim_in_truncation <= y.dim {
        let w = apply_conj_transpose_mat(t, &y.complement);
        w.adjoint() * &y.basis
    } else {
        y.complement.adjoint() * t.apply_mat(&y.basis)
    }
}

/// Numerical rank of the part of `T Y` that leaves `Y`.
pub fn defect_estimate(t: &OperatorRep, y: &HalfSpaceRep, cut: RankCut) -> Result<DefectReport> {
    if t.dim() != y.ambient_dim() {
        return Err(LabError::DimensionMismatch {
            expected: t.dim(),
            got: y.ambient_dim(),
        });
    }
    let s = linalg::singular_values(&compression(t, y))?;
    let threshold = cut.threshold(&s);
    Ok(DefectReport {
        defect: linalg::rank_above(&s, threshold),
        residual_spectrum: s,
        threshold,
    })
}

/// Calls `each` with consecutive column blocks `(start, B_blk, T B_blk)`.
fn for_image_blocks(t: &OperatorRep, basis: &Mat<c64>, mut each: impl FnMut(usize, Mat<c64>, Mat<c64>)) {
    let n = basis.ncols();
    let mut start = 0;
    while start < n {
        let w = BLOCK.min(n - start);
        let blk = basis.subcols(start, w).to_owned();
        let img = t.apply_mat(&blk);
        each(start, blk, img);
        start += w;
    }
}

/// `max |h((T+F) z)| / (|h| |T+F|)` over the orthonormal basis vectors `z`
/// and defining functionals `h`. Scaling by the operator norm rather than by
/// `|(T+F) z|` keeps vectors that `T+F` nearly annihilates from dominating.
pub fn invariance_residual(t_plus_f: &OperatorRep, z: &HalfSpaceRep) -> f64 {
    let fs: Vec<&CVector> = z.defining_functionals.iter().filter(|f| f.norm() > 0.0).collect();
    if fs.is_empty() || z.dim == 0 {
        return 0.0;
    }
    let d = z.ambient_dim();
    let rows = Mat::from_fn(fs.len(), d, |i, j| fs[i][j]);
    let fnorms: Vec<f64> = fs.iter().map(|f| f.norm()).collect();
    let scale = operator_norm(t_plus_f).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for_image_blocks(t_plus_f, &z.basis, |_, _, img| {
        let r = &rows * &img;
        for j in 0..r.ncols() {
            for i in 0..r.nrows() {
                let v = r[(i, j)].norm() / (fnorms[i] * scale);
                worst = worst.max(v);
            }
        }
    });
    worst
}

/// `max_z |C^H (T z - c(z) f)| / (|T z| + |c(z)| |f| + floor)` over the basis.
pub fn defect_precondition_residual(t: &OperatorRep, y: &HalfSpaceRep, f: &CVector, c: &CVector) -> f64 {
    let ch = y.complement.adjoint().to_owned();
    let chf = &ch * f.to_col_mat();
    let fnorm = f.norm();
    let mut worst = 0.0f64;
    for_image_blocks(t, &y.basis, |_, blk, img| {
        let coeffs = c.to_col_mat().transpose() * &blk;
        let proj = &ch * &img;
        let inorms = linalg::column_norms(&img);
        for j in 0..blk.ncols() {
            let a = coeffs[(0, j)];
            let mut ss = 0.0;
            for i in 0..proj.nrows() {
                ss += (proj[(i, j)] - a * chf[(i, 0)]).norm_sqr();
            }
            let denom = inorms[j] + a.norm() * fnorm + f64::MIN_POSITIVE;
            worst = worst.max(ss.sqrt() / denom);
        }
    });
    worst
}

/// `F = -c ⊗ f`, valid when `T y - c(y) f` stays in `Y` for every `y` in `Y`.
pub fn perturbation_from_defect(
    t: &OperatorRep,
    y: &HalfSpaceRep,
    f: &CVector,
    c: &CVector,
    tol: f64,
) -> Result<PerturbationRep> {
    let d = t.dim();
    if f.dim() != d || c.dim() != d || y.ambient_dim() != d {
        return Err(LabError::DimensionMismatch {
            expected: d,
            got: f.dim().min(c.dim()).min(y.ambient_dim()),
        });
    }
    let residual = defect_precondition_residual(t, y, f, c);
    if !(residual <= tol) {
        return Err(LabError::DefectMismatch {
            residual,
            tolerance: tol,
        });
    }
    Ok(PerturbationRep::rank_one(c.scaled_real(-1.0), f.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::RankOneTerm;

    fn unit_span(d: usize, coords: &[usize]) -> HalfSpaceRep {
        let m = Mat::from_fn(d, coords.len(), |i, j| {
            if i == coords[j] {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        HalfSpaceRep::from_span(&m).unwrap()
    }

    #[test]
    fn preannihilator_of_first_coordinate() {
        let z = preannihilator(&[CVector::unit(3, 0)], 3).unwrap();
        assert_eq!(z.dim, 2);
        assert_eq!(z.codim_in_truncation, 1);
        for j in 0..2 {
            assert!(z.basis[(0, j)].norm() < 1e-15);
        }
        let dup = preannihilator(&[CVector::unit(3, 0), CVector::unit(3, 0)], 3).unwrap();
        assert_eq!(dup.dim, 2);
        let all = preannihilator(&[], 3).unwrap();
        assert_eq!(all.dim, 3);
        assert!(!all.halfspace_proxy_flag);
    }

    #[test]
    fn complex_functionals_are_annihilated_bilinearly() {
        let f = CVector::from(vec![
            c64::new(0.0, 1.0),
            c64::new(2.0, -1.0),
            c64::new(0.5, 0.5),
            c64::new(1.0, 0.0),
        ]);
        let z = preannihilator(std::slice::from_ref(&f), 4).unwrap();
        assert_eq!(z.dim, 3);
        assert!(z.annihilation_residual() < 1e-14);
        assert!(z.orthonormality_defect() < 1e-14);
    }

    #[test]
    fn diagonal_keeps_coordinate_spans() {
        let t = OperatorRep::diagonal_real(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let y = unit_span(5, &[0, 3]);
        assert_eq!(defect_estimate(&t, &y, RankCut::default()).unwrap().defect, 0);
    }

    #[test]
    fn shift_leaks_one_direction() {
        let d = 12;
        let t = OperatorRep::unweighted_forward_shift(d).unwrap();
        let coords: Vec<usize> = (1..d - 1).collect();
        let y = unit_span(d, &coords);
        let rep = defect_estimate(&t, &y, RankCut::default()).unwrap();
        assert_eq!(rep.defect, 1);
        assert!((rep.residual_spectrum[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_and_shift_invariance_residuals() {
        let d = 16;
        let z = preannihilator(&[CVector::from_real_fn(d, |k| 1.0 / k as f64)], d).unwrap();
        assert!(invariance_residual(&OperatorRep::identity(d).unwrap(), &z) < 1e-14);
        let shift = OperatorRep::unweighted_forward_shift(d).unwrap();
        let e1 = unit_span(d, &[0]);
        assert!((invariance_residual(&shift, &e1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_defect_gives_zero_perturbation() {
        let d = 6;
        let t = OperatorRep::diagonal_real(&[1.0, -1.0, 2.0, 0.5, 3.0, 4.0]).unwrap();
        let y = unit_span(d, &[1, 2]);
        let f = perturbation_from_defect(&t, &y, &CVector::zeros(d), &CVector::zeros(d), TOL_INVARIANCE).unwrap();
        assert_eq!(f.norm, 0.0);
        assert!(invariance_residual(&f.perturb(&t).unwrap(), &y) < 1e-14);
    }

    #[test]
    fn rank_three_leak_is_rejected() {
        let d = 10;
        let base = OperatorRep::diagonal_real(&(1..=d).map(|k| k as f64).collect::<Vec<_>>()).unwrap();
        let y = unit_span(d, &[0, 1, 2, 3]);
        // three independent couplings out of Y
        let terms: Vec<RankOneTerm> = (0..3)
            .map(|k| RankOneTerm::new(CVector::unit(d, k), CVector::unit(d, 5 + k)))
            .collect();
        let t = base.with_rank_one_terms(&terms).unwrap();
        assert_eq!(defect_estimate(&t, &y, RankCut::default()).unwrap().defect, 3);
        let err =
            perturbation_from_defect(&t, &y, &CVector::unit(d, 5), &CVector::unit(d, 0), TOL_INVARIANCE).unwrap_err();
        assert!(matches!(err, LabError::DefectMismatch { .. }));
    }

    #[test]
    fn single_leak_is_repaired() {
        let d = 10;
        let base = OperatorRep::diagonal_real(&(1..=d).map(|k| k as f64).collect::<Vec<_>>()).unwrap();
        let y = unit_span(d, &[0, 1, 2, 3]);
        let c = CVector::from_real_fn(d, |k| if k <= 4 { k as f64 } else { 0.0 });
        let f = CVector::unit(d, 7);
        let t = base
            .with_rank_one_terms(&[RankOneTerm::new(c.clone(), f.clone())])
            .unwrap();
        assert!(invariance_residual(&t, &y) > 0.1);
        let p = perturbation_from_defect(&t, &y, &f, &c, TOL_INVARIANCE).unwrap();
        assert!(invariance_residual(&p.perturb(&t).unwrap(), &y) < 1e-14);
    }

    #[test]
    fn gap_edge_cases() {
        let r = DefectReport {
            defect: 1,
            residual_spectrum: vec![2.0, 0.0],
            threshold: 1e-10,
        };
        assert_eq!(r.gap(), f64::INFINITY);
    }
}
