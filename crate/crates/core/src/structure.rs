//! Structural diagnostics: orbit minimality, the iterated range chain,
//! invariant spans of eigenvectors, and Riesz projections onto isolated
//! parts of the spectrum.

use std::f64::consts::PI;

use faer::c64;
use faer::prelude::*;
use faer::Mat;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::halfspace::{defect_estimate, DefectReport, HalfSpaceRep, RankCut};
use crate::linalg;
use crate::operator::{operator_norm, OperatorRep};
use crate::vector::{columns_to_mat, CVector};

pub const ORBIT_DELTA: f64 = 1e-6;
pub const EIGENPAIR_TOL: f64 = 1e-8;
pub const CONTOUR_CLEARANCE: f64 = 1e-6;
pub const QUADRATURE_TOL: f64 = 1e-8;
pub const DEFAULT_NODES: usize = 64;
pub const MAX_NODES: usize = 4096;

/// Orbit vectors shorter than this times `|z|` count as zero.
const COLLAPSE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitReport {
    pub minimal: bool,
    /// Smallest `p` with `T^p z` within `delta |T^p z|` of the span of the others.
    pub failing_index: Option<usize>,
    /// `dist(T^p z, span{T^k z : k != p})`
    pub distances: Vec<f64>,
    pub orbit_norms: Vec<f64>,
    /// First `k <= K` with `T^k z = 0`; the orbit stops there.
    pub collapsed_at: Option<usize>,
    /// Relative distance of `T^p z` to the span of the later orbit vectors,
    /// at the failing index.
    pub refinement_residual: Option<f64>,
}

impl OrbitReport {
    pub fn relative_distances(&self) -> Vec<f64> {
        self.distances
            .iter()
            .zip(&self.orbit_norms)
            .map(|(d, n)| d / n)
            .collect()
    }
}

/// Distances of each orbit vector `T^k z`, `k = 0..=K`, to the span of the rest.
pub fn orbit_minimality(t: &OperatorRep, z: &CVector, horizon: usize, delta: f64) -> Result<OrbitReport> {
    let d = t.dim();
    if horizon > d {
        return Err(LabError::InvalidSpec(format!(
            "orbit horizon {horizon} exceeds dimension {d}"
        )));
    }
    let z_norm = z.norm();
    if z_norm == 0.0 {
        return Err(LabError::InvalidSpec("orbit start vector is zero".into()));
    }
    let mut units = Vec::with_capacity(horizon + 1);
    let mut orbit_norms = Vec::with_capacity(horizon + 1);
    let mut collapsed_at = None;
    let mut v = z.clone();
    for k in 0..=horizon {
        let n = v.norm();
        if n <= COLLAPSE_FLOOR * z_norm {
            collapsed_at = Some(k);
            break;
        }
        units.push(v.scaled_real(1.0 / n));
        orbit_norms.push(n);
        if k < horizon {
            v = t.apply(&v);
        }
    }
    let u = columns_to_mat(&units, d);
    let (_, s, vmat) = linalg::thin_svd(&u)?;
    let k = units.len();
    // more vectors than dimensions leaves a null direction the thin SVD does not show
    let deficient = s.len() < k || s.last().is_some_and(|&lo| lo <= 1e-12 * s[0]);
    let rel: Vec<f64> = if k == 1 {
        vec![1.0]
    } else if deficient {
        // singular vectors of a numerically zero block are unreliable; project instead
        (0..k).map(|p| distance_to_others(&u, p)).collect::<Result<_>>()?
    } else {
        // unit columns: dist_p^2 = 1 / sum_i |V_pi|^2 / s_i^2
        (0..k)
            .map(|p| {
                let inv: f64 = s
                    .iter()
                    .enumerate()
                    .map(|(i, &si)| vmat[(p, i)].norm_sqr() / (si * si))
                    .sum();
                (1.0 / inv).sqrt().min(1.0)
            })
            .collect()
    };
    let failing_index = rel.iter().position(|&r| r <= delta);
    let refinement_residual = match failing_index {
        Some(p) if p + 1 < units.len() => {
            let later = u.subcols(p + 1, units.len() - p - 1).to_owned();
            let q = linalg::orthonormal_range(&later, 1e-12, 0.0)?;
            let up = units[p].to_col_mat();
            let proj = &q * (q.adjoint() * &up);
            Some((&up - &proj).norm_l2())
        }
        Some(_) => Some(1.0),
        None => None,
    };
    Ok(OrbitReport {
        minimal: failing_index.is_none(),
        failing_index,
        distances: rel.iter().zip(&orbit_norms).map(|(r, n)| r * n).collect(),
        orbit_norms,
        collapsed_at,
        refinement_residual,
    })
}

fn distance_to_others(u: &Mat<c64>, p: usize) -> Result<f64> {
    let others = Mat::from_fn(u.nrows(), u.ncols() - 1, |i, j| u[(i, if j < p { j } else { j + 1 })]);
    let q = linalg::orthonormal_range(&others, 1e-12, 0.0)?;
    let up = u.subcols(p, 1).to_owned();
    let proj = &q * (q.adjoint() * &up);
    Ok((&up - &proj).norm_l2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    /// First `j` with `rank Y_{j+1} = rank Y_j`.
    pub stable_at: usize,
    /// `D - rank Y_j` for `j = 0..=stable_at`.
    pub codims: Vec<usize>,
    /// The chain stabilized at `{0}`.
    pub degenerate_zero_space: bool,
    /// `T` compressed to `Y_{stable_at}`, absent when that space is `{0}`.
    pub restriction: Option<OperatorRep>,
    /// Smallest singular value of the restriction's adjoint.
    pub adjoint_sigma_min: Option<f64>,
    pub adjoint_injective: bool,
}

/// Ranks of `Y_j`, the closure of `T^j X`, until `Y_{j+1} = Y_j`.
pub fn dense_range_chain(t: &OperatorRep, max_steps: usize) -> Result<ChainReport> {
    let d = t.dim();
    let cut = 1e-10 * operator_norm(t);
    let mut q: Mat<c64> = Mat::identity(d, d);
    let mut codims = vec![0usize];
    for step in 0..max_steps {
        let img = if q.ncols() == 0 {
            Mat::zeros(d, 0)
        } else {
            t.apply_mat(&q)
        };
        let next = if img.ncols() == 0 {
            img
        } else {
            linalg::orthonormal_range(&img, 0.0, cut.max(f64::MIN_POSITIVE))?
        };
        if next.ncols() == q.ncols() {
            let r = q.ncols();
            let (restriction, adjoint_sigma_min) = if r == 0 {
                (None, None)
            } else {
                let s_mat = q.adjoint() * t.apply_mat(&q);
                let sigma = linalg::singular_values(&s_mat)?.last().copied().unwrap_or(0.0);
                (Some(OperatorRep::dense(s_mat)?), Some(sigma))
            };
            return Ok(ChainReport {
                stable_at: step,
                codims,
                degenerate_zero_space: r == 0,
                adjoint_injective: adjoint_sigma_min.is_some_and(|s| s > cut),
                restriction,
                adjoint_sigma_min,
            });
        }
        q = next;
        codims.push(d - q.ncols());
    }
    let truncation_artifact = codims.len() > 1 && codims.windows(2).all(|w| w[1] == w[0] + 1);
    Err(LabError::NoStabilization {
        steps: max_steps,
        codims,
        truncation_artifact,
    })
}

/// Eigenvalues with unit right eigenvectors, from the dense eigensolver.
pub fn eigenpairs(t: &OperatorRep) -> Result<Vec<(c64, CVector)>> {
    let (vals, vecs) = linalg::eigen(t.matrix())?;
    Ok(vals
        .into_iter()
        .enumerate()
        .map(|(j, l)| {
            let v = CVector::from_mat_col(&vecs, j);
            (l, v.normalized().unwrap_or(v))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenHalfSpace {
    pub halfspace: HalfSpaceRep,
    pub defect: DefectReport,
    /// `|w_i(v_j)| / (|w_i| |v_j|)` for left eigenvectors `w_i` of the
    /// withheld eigenvalues against the selected right eigenvectors.
    pub cross_pairing: Vec<Vec<f64>>,
    pub max_cross_pairing: f64,
}

fn check_eigenpair(t: &OperatorRep, lambda: c64, v: &CVector, scale: f64) -> Result<()> {
    let mut r = t.apply(v);
    r.axpy(-lambda, v);
    let res = r.norm() / v.norm().max(f64::MIN_POSITIVE);
    if !(res <= EIGENPAIR_TOL * scale) {
        return Err(LabError::NotEigenpair(format!(
            "lambda = {}{:+}i has residual {res:e}",
            lambda.re, lambda.im
        )));
    }
    Ok(())
}

/// Unit `w` with `T^T w = lambda w`, from the smallest singular vector.
fn left_eigenvector(t: &OperatorRep, lambda: c64) -> Result<CVector> {
    let d = t.dim();
    let m = Mat::from_fn(d, d, |i, j| {
        let shift = if i == j { lambda } else { c64::new(0.0, 0.0) };
        shift - t.matrix()[(j, i)]
    });
    let (_, _, v) = linalg::full_svd(&m)?;
    Ok(CVector::from_mat_col(&v, d - 1))
}

/// The span of the `selected` eigenvectors, which `T` leaves invariant.
/// At least one eigenpair must be selected and at least one withheld.
pub fn eigen_halfspace(
    t: &OperatorRep,
    selected: &[(c64, CVector)],
    withheld: &[(c64, CVector)],
) -> Result<EigenHalfSpace> {
    if selected.is_empty() {
        return Err(LabError::Empty("selected eigenpairs"));
    }
    if withheld.is_empty() {
        return Err(LabError::Empty("withheld eigenpairs"));
    }
    let scale = operator_norm(t).max(1.0);
    for (l, v) in selected.iter().chain(withheld) {
        if v.dim() != t.dim() {
            return Err(LabError::DimensionMismatch {
                expected: t.dim(),
                got: v.dim(),
            });
        }
        check_eigenpair(t, *l, v, scale)?;
    }
    let vs: Vec<CVector> = selected.iter().map(|(_, v)| v.clone()).collect();
    let halfspace = HalfSpaceRep::from_span(&columns_to_mat(&vs, t.dim()))?;
    let defect = defect_estimate(t, &halfspace, RankCut::default())?;
    let mut cross_pairing = Vec::with_capacity(withheld.len());
    for (l, _) in withheld {
        let w = left_eigenvector(t, *l)?;
        cross_pairing.push(
            vs.iter()
                .map(|v| w.pair(v).norm() / (w.norm() * v.norm()))
                .collect::<Vec<f64>>(),
        );
    }
    let max_cross_pairing = cross_pairing.iter().flatten().copied().fold(0.0, f64::max);
    Ok(EigenHalfSpace {
        halfspace,
        defect,
        cross_pairing,
        max_cross_pairing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RieszResiduals {
    /// `|P^2 - P|`
    pub idempotency: f64,
    /// `|P T - T P|`
    pub commutation: f64,
    /// `|sum P_i - I|`, filled in by [`partition_residual`].
    pub partition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RieszData {
    pub center: c64,
    pub radius: f64,
    pub nodes: usize,
    pub p: OperatorRep,
    pub residuals: RieszResiduals,
    /// Spectral-norm change of `P` at the last node doubling.
    pub last_change: f64,
}

/// `(1/N) sum_j r e^{i theta_j} (zeta_j - T)^{-1}` over the nodes `j = offset, offset + stride, ...`.
fn trapezoid_sum(t: &Mat<c64>, center: c64, radius: f64, total: usize, offset: usize, stride: usize) -> Mat<c64> {
    let d = t.nrows();
    let eye: Mat<c64> = Mat::identity(d, d);
    let mut acc: Mat<c64> = Mat::zeros(d, d);
    let mut j = offset;
    while j < total {
        let theta = 2.0 * PI * j as f64 / total as f64;
        let w = c64::new(theta.cos(), theta.sin()) * radius;
        let zeta = center + w;
        let m = Mat::from_fn(d, d, |a, b| if a == b { zeta - t[(a, b)] } else { -t[(a, b)] });
        let r = m.partial_piv_lu().solve(&eye);
        acc += linalg::scale(&r, w / total as f64);
        j += stride;
    }
    acc
}

/// Riesz projection for the spectrum inside the circle `|zeta - center| = radius`,
/// by the trapezoid rule with node doubling until `P` changes by at most 1e-8.
pub fn riesz_projection(t: &OperatorRep, center: c64, radius: f64, nodes: usize) -> Result<RieszData> {
    if !(radius > 0.0) || nodes == 0 {
        return Err(LabError::InvalidSpec(format!(
            "contour needs radius > 0 and nodes > 0, got {radius} and {nodes}"
        )));
    }
    for l in linalg::eigenvalues(t.matrix())? {
        let distance = ((l - center).norm() - radius).abs();
        if distance < CONTOUR_CLEARANCE {
            return Err(LabError::ContourHitsSpectrum {
                eig_re: l.re,
                eig_im: l.im,
                distance,
            });
        }
    }
    let tm = t.matrix();
    let mut n = nodes;
    let mut p = trapezoid_sum(tm, center, radius, n, 0, 1);
    let mut change = f64::INFINITY;
    while n < MAX_NODES {
        // the doubled rule reuses every old node: P_2N = P_N / 2 + (odd nodes) / 2N
        let odd = trapezoid_sum(tm, center, radius, 2 * n, 1, 2);
        let next = linalg::scale(&p, c64::new(0.5, 0.0)) + odd;
        change = linalg::spectral_norm(&(&next - &p))?;
        p = next;
        n *= 2;
        if change <= QUADRATURE_TOL * linalg::spectral_norm(&p)?.max(1.0) {
            break;
        }
    }
    if change > QUADRATURE_TOL * linalg::spectral_norm(&p)?.max(1.0) {
        return Err(LabError::QuadratureNotConverged { nodes: n, change });
    }
    let residuals = RieszResiduals {
        idempotency: linalg::spectral_norm(&(&p * &p - &p))?,
        commutation: linalg::spectral_norm(&(&p * tm - tm * &p))?,
        partition: None,
    };
    Ok(RieszData {
        center,
        radius,
        nodes: n,
        p: OperatorRep::dense(p)?,
        residuals,
        last_change: change,
    })
}

/// `|sum_i P_i - I|` for a family meant to cover the whole spectrum.
pub fn partition_residual(projections: &[&RieszData]) -> Result<f64> {
    let Some(first) = projections.first() else {
        return Err(LabError::Empty("projection family"));
    };
    let d = first.p.dim();
    let mut sum: Mat<c64> = linalg::scale(&Mat::identity(d, d), c64::new(-1.0, 0.0));
    for p in projections {
        sum += p.p.matrix();
    }
    linalg::spectral_norm(&sum)
}

/// Assigns the partition residual to every member of a covering family.
pub fn partition(projections: &mut [RieszData]) -> Result<f64> {
    let refs: Vec<&RieszData> = projections.iter().collect();
    let r = partition_residual(&refs)?;
    for p in projections.iter_mut() {
        p.residuals.partition = Some(r);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{make_operator, OperatorSpec, Scalar};

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn shift_orbit_is_orthonormal() {
        let d = 64;
        let t = OperatorRep::unweighted_forward_shift(d).unwrap();
        let r = orbit_minimality(&t, &CVector::unit(d, 0), d / 2, ORBIT_DELTA).unwrap();
        assert!(r.minimal);
        assert_eq!(r.distances.len(), d / 2 + 1);
        assert!(r.distances.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert_eq!(r.collapsed_at, None);
    }

    #[test]
    fn diagonal_orbit_fails_at_zero() {
        let t = OperatorRep::diagonal_real(&[2.0, 3.0, 5.0, 7.0]).unwrap();
        let r = orbit_minimality(&t, &CVector::unit(4, 0), 3, ORBIT_DELTA).unwrap();
        assert!(!r.minimal);
        assert_eq!(r.failing_index, Some(0));
        assert!(r.refinement_residual.unwrap() <= ORBIT_DELTA);
    }

    #[test]
    fn jordan_orbit_collapses() {
        let d = 6;
        let j = OperatorRep::jordan_block(d).unwrap();
        let r = orbit_minimality(&j, &CVector::unit(d, 0), d, ORBIT_DELTA).unwrap();
        assert_eq!(r.collapsed_at, Some(d));
        assert!(r.minimal);
    }

    #[test]
    fn jordan_chain_reaches_zero() {
        let j = OperatorRep::jordan_block(5).unwrap();
        let r = dense_range_chain(&j, 10).unwrap();
        assert_eq!(r.codims, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(r.stable_at, 5);
        assert!(r.degenerate_zero_space);
        assert!(r.restriction.is_none());
    }

    #[test]
    fn shift_chain_is_truncation_artifact() {
        let d = 12;
        let t = OperatorRep::unweighted_forward_shift(d).unwrap();
        match dense_range_chain(&t, d).unwrap_err() {
            LabError::NoStabilization {
                codims,
                truncation_artifact,
                ..
            } => {
                assert_eq!(codims, (0..=d).collect::<Vec<_>>());
                assert!(truncation_artifact);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn invertible_chain_is_stable_immediately() {
        let t = OperatorRep::diagonal_real(&[1.0, 2.0, -3.0]).unwrap();
        let r = dense_range_chain(&t, 3).unwrap();
        assert_eq!(r.stable_at, 0);
        assert!(r.adjoint_injective);
        assert!((r.adjoint_sigma_min.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn even_coordinates_of_diagonal() {
        let t = OperatorRep::diagonal_real(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let pair = |k: usize| (c((k + 1) as f64), CVector::unit(4, k));
        let out = eigen_halfspace(&t, &[pair(1), pair(3)], &[pair(0), pair(2)]).unwrap();
        assert_eq!(out.halfspace.dim, 2);
        assert_eq!(out.defect.defect, 0);
        assert!(out.max_cross_pairing < 1e-12);
        let all: Vec<_> = (0..4).map(pair).collect();
        assert!(matches!(eigen_halfspace(&t, &all, &[]), Err(LabError::Empty(_))));
        let wrong = (c(9.0), CVector::unit(4, 0));
        assert!(matches!(
            eigen_halfspace(&t, &[wrong], &[pair(1)]),
            Err(LabError::NotEigenpair(_))
        ));
    }

    #[test]
    fn rotation_lines_are_invariant() {
        let m = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => c(-1.0),
            (1, 0) => c(1.0),
            _ => c(0.0),
        });
        let t = OperatorRep::dense(m).unwrap();
        let pairs = eigenpairs(&t).unwrap();
        // oracle: eigenvalues +-i with eigenvectors (1, -+i)/sqrt 2
        for (l, _) in &pairs {
            assert!((l.norm() - 1.0).abs() < 1e-14 && l.re.abs() < 1e-14);
        }
        for k in 0..2 {
            let out = eigen_halfspace(&t, &pairs[k..k + 1], &pairs[1 - k..2 - k]).unwrap();
            assert_eq!(out.defect.defect, 0);
            assert!(out.max_cross_pairing < 1e-12);
        }
    }

    #[test]
    fn diagonal_eigenprojection() {
        let t = OperatorRep::diagonal_real(&[0.0, 0.0, 1.0]).unwrap();
        let r = riesz_projection(&t, c(1.0), 0.5, DEFAULT_NODES).unwrap();
        let want = Mat::from_fn(3, 3, |i, j| if i == 2 && j == 2 { c(1.0) } else { c(0.0) });
        assert!(linalg::max_abs(&(r.p.matrix() - &want)) < 1e-10);
    }

    #[test]
    fn jordan_whole_spectrum() {
        let j = OperatorRep::jordan_block(2).unwrap();
        let r = riesz_projection(&j, c(0.0), 1.0, DEFAULT_NODES).unwrap();
        let eye: Mat<c64> = Mat::identity(2, 2);
        assert!(linalg::max_abs(&(r.p.matrix() - &eye)) < 1e-10);
    }

    #[test]
    fn contour_through_eigenvalue_rejected() {
        let t = OperatorRep::diagonal_real(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            riesz_projection(&t, c(0.5), 0.5, 16),
            Err(LabError::ContourHitsSpectrum { .. })
        ));
    }

    #[test]
    fn trapezoid_converges_exponentially() {
        // eigenvalue 0 at distance 1 from the center: error ~ (r/1)^N
        let t = OperatorRep::diagonal_real(&[0.0, 0.0, 1.0]).unwrap();
        let d = 3;
        let exact = Mat::from_fn(d, d, |i, j| if i == 2 && j == 2 { c(1.0) } else { c(0.0) });
        let err = |n: usize| {
            let p = trapezoid_sum(t.matrix(), c(1.0), 0.5, n, 0, 1);
            linalg::spectral_norm(&(&p - &exact)).unwrap()
        };
        let (e8, e16) = (err(8), err(16));
        assert!(e8 / e16 >= 1e2, "{e8} {e16}");
    }

    #[test]
    fn clusters_against_eigendecomposition() {
        let d = 32;
        let spec = OperatorSpec::ClusterPair {
            centers: [Scalar::Real(0.0), Scalar::Real(5.0)],
            spread: 0.5,
            coupling: 1.0,
            seed: 11,
        };
        let t = make_operator(&spec, d).unwrap();
        let mut ps = vec![
            riesz_projection(&t, c(0.0), 2.5, DEFAULT_NODES).unwrap(),
            riesz_projection(&t, c(5.0), 2.5, DEFAULT_NODES).unwrap(),
        ];
        assert!(partition(&mut ps).unwrap() <= 1e-8);
        // oracle: P_0 = V diag(1 on the first cluster) V^{-1}
        let (vals, v) = linalg::eigen(t.matrix()).unwrap();
        let vinv = v.partial_piv_lu().solve(Mat::<c64>::identity(d, d));
        let mask = Mat::from_fn(
            d,
            d,
            |i, j| if i == j && vals[i].norm() < 2.5 { c(1.0) } else { c(0.0) },
        );
        let oracle = &v * &mask * &vinv;
        assert!(
            linalg::spectral_norm(&(ps[0].p.matrix() - &oracle)).unwrap()
                <= 1e-8 * linalg::spectral_norm(&oracle).unwrap()
        );
        for p in &ps {
            assert!(p.residuals.idempotency <= 1e-8 * linalg::spectral_norm(p.p.matrix()).unwrap());
            assert!(p.nodes <= 256);
        }
    }
}
