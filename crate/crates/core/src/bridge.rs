//! Small finite-rank perturbations of quasinilpotent operators.
//!
//! The kernel `N` of `T` is bridged onto a complement of the range by
//! `G = sum_i c_i ⊗ g_i`, where `c_i = conj(f_i)` is the functional dual to
//! an orthonormal kernel basis and vanishing on its orthogonal complement.
//! With `n = dim N` and `m` the codimension of the range:
//!
//! * `n <= m`: `T + alpha G` is injective. The remaining rank-one step needs
//!   machinery this crate does not implement, so the assembly stops with
//!   [`LabError::BranchUnsupported`] carrying everything built so far.
//! * `m < n`: `T + alpha G` has dense range, so its adjoint is injective and
//!   the small-norm rank-one construction applies to `T + alpha G` at `0`.
//!
//! A square truncation always has `n = m`. The `m < n` branch is reached by
//! deleting truncation-boundary rows, rows that are zero only because the
//! coordinate feeding them was cut off.

use faer::c64;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::biorthogonal::{build_biorthogonal, GAMMA_GROWTH, KAPPA_MAX};
use crate::error::{LabError, Result};
use crate::halfspace::RankCut;
use crate::linalg;
use crate::operator::{operator_norm, OperatorRep, RankOneTerm, Structure};
use crate::perturbation::{small_norm_rank_one, PerturbationRep, SmallNormOutcome};
use crate::resolvent::{build_family, select_estar, ApproachSchedule, EStarCandidate, GROWTH_FACTOR};
use crate::vector::CVector;

pub const TOL_RANK: f64 = 1e-8;

/// Spectral radius at most this times `|T|` counts as quasinilpotent.
pub const QUASINILPOTENT_TOL: f64 = 1e-6;

/// Safety factor in `alpha = epsilon / (2 |G| (1 + ALPHA_MARGIN))`.
pub const ALPHA_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRangeData {
    /// Orthonormal, length `D` each.
    pub kernel_basis: Vec<CVector>,
    /// Orthonormal, in the coordinates of the kept rows embedded back into `D`.
    pub corange_basis: Vec<CVector>,
    pub n: usize,
    pub m: usize,
    pub tol_rank: f64,
    pub singular_values: Vec<f64>,
    /// Rows deleted before the analysis.
    pub removed_rows: Vec<usize>,
}

/// An orthonormal basis of `span(q)` aligned with the coordinate order:
/// Gram-Schmidt applied to the projections of `e_0, e_1, ...`.
fn canonical_basis(q: &Mat<c64>) -> Vec<CVector> {
    let (d, k) = (q.nrows(), q.ncols());
    let mut out: Vec<CVector> = Vec::with_capacity(k);
    for j in 0..d {
        if out.len() == k {
            break;
        }
        // P e_j = Q (row j of Q)^H
        let mut v = CVector::from_fn(d, |i| (0..k).map(|l| q[(i, l)] * q[(j, l)].conj()).sum());
        for _ in 0..2 {
            for b in &out {
                let c = v.inner(b);
                v.axpy(-c, b);
            }
        }
        if v.norm() > 1e-8 {
            out.push(v.normalized().expect("nonzero"));
        }
    }
    out
}

fn analyse(a: &Mat<c64>, tol_rank: f64, embed: impl Fn(&CVector) -> CVector) -> Result<KernelRangeData> {
    let (u, s, v) = linalg::full_svd(a)?;
    let cut = tol_rank * s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > cut).count();
    let kernel = v.subcols(rank, v.ncols() - rank).to_owned();
    let corange = u.subcols(rank, u.ncols() - rank).to_owned();
    let kernel_basis = canonical_basis(&kernel);
    let corange_basis: Vec<CVector> = canonical_basis(&corange).iter().map(embed).collect();
    Ok(KernelRangeData {
        n: kernel_basis.len(),
        m: corange_basis.len(),
        kernel_basis,
        corange_basis,
        tol_rank,
        singular_values: s,
        removed_rows: Vec::new(),
    })
}

/// Kernel and range complement from the SVD, with `sigma <= tol_rank * sigma_1`
/// counting as zero.
pub fn kernel_range(t: &OperatorRep, tol_rank: f64) -> Result<KernelRangeData> {
    analyse(t.matrix(), tol_rank, CVector::clone)
}

/// Like [`kernel_range`], with the listed rows deleted first.
pub fn kernel_range_section(t: &OperatorRep, removed_rows: &[usize], tol_rank: f64) -> Result<KernelRangeData> {
    let d = t.dim();
    if let Some(&r) = removed_rows.iter().find(|&&r| r >= d) {
        return Err(LabError::InvalidSpec(format!("boundary row {r} outside 0..{d}")));
    }
    let kept = kept_rows(d, removed_rows);
    let section = row_section(t.matrix(), &kept);
    let mut data = analyse(&section, tol_rank, |g| {
        let mut full = CVector::zeros(d);
        for (i, &row) in kept.iter().enumerate() {
            full[row] = g[i];
        }
        full
    })?;
    data.removed_rows = removed_rows.to_vec();
    Ok(data)
}

fn kept_rows(d: usize, removed: &[usize]) -> Vec<usize> {
    (0..d).filter(|r| !removed.contains(r)).collect()
}

fn row_section(m: &Mat<c64>, rows: &[usize]) -> Mat<c64> {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// `c_i ⊗ g_i` for `i < min(n, m)`.
pub fn bridge_terms(kr: &KernelRangeData) -> Result<Vec<RankOneTerm>> {
    if kr.n == 0 || kr.m == 0 {
        return Err(LabError::NoDefect { n: kr.n, m: kr.m });
    }
    Ok(kr
        .kernel_basis
        .iter()
        .zip(&kr.corange_basis)
        .map(|(f, g)| RankOneTerm::new(f.conj(), g.clone()))
        .collect())
}

/// `G` with `G f_i = g_i` for `i <= min(n, m)` and `G = 0` on the rest of
/// the kernel and on its orthogonal complement.
pub fn bridge_operator(kr: &KernelRangeData) -> Result<PerturbationRep> {
    let terms = bridge_terms(kr)?;
    let dim = terms[0].vector.dim();
    PerturbationRep::finite_rank(terms, dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeBranch {
    /// `n <= m`: `T + alpha G` is injective.
    Injective,
    /// `m < n`: `T + alpha G` has dense range.
    DenseRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum QuasinilpotentEvidence {
    /// The operator is tagged nilpotent.
    Structural,
    /// Spectral radius of the truncation relative to `|T|`.
    Numerical { relative_radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeCertificate {
    pub branch: BridgeBranch,
    pub n: usize,
    pub m: usize,
    pub quasinilpotent: QuasinilpotentEvidence,
    pub alpha: f64,
    pub g_norm: f64,
    pub alpha_g_norm: f64,
    /// `sigma_min(T + alpha G)` in the injective branch.
    pub injectivity_sigma_min: Option<f64>,
    /// Smallest singular value of the kept-row section of `T + alpha G`,
    /// i.e. of its adjoint, in the dense-range branch.
    pub dense_range_sigma_min: Option<f64>,
    pub f0_norm: Option<f64>,
    pub total_norm: f64,
    pub rank_bound: usize,
    pub numerical_rank: Option<usize>,
    /// Countability of the spectrum of `T + F` is assumed from the
    /// infinite-dimensional argument, never checked.
    pub countable_spectrum_assumed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeAssembly {
    pub kernel_range: KernelRangeData,
    pub g: PerturbationRep,
    pub alpha: f64,
    pub alpha_g: PerturbationRep,
    pub f0: Option<SmallNormOutcome>,
    /// `alpha G + F0`, or `alpha G` alone when the branch stops early.
    pub total: PerturbationRep,
    pub certificate: BridgeCertificate,
}

/// Parameters for the rank-one step of the dense-range branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeOptions {
    pub tol_rank: f64,
    /// Truncation-boundary rows removed before the kernel/range analysis.
    pub boundary_rows: Vec<usize>,
    pub schedule: ApproachSchedule,
    pub family_len: usize,
    pub candidates: Vec<EStarCandidate>,
    pub growth_factor: f64,
    pub kappa_max: f64,
    pub gamma_growth: f64,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            tol_rank: TOL_RANK,
            boundary_rows: Vec::new(),
            schedule: ApproachSchedule { q: 0.8, r: 0.8 },
            family_len: 6,
            candidates: vec![
                EStarCandidate::Flat,
                EStarCandidate::Harmonic,
                EStarCandidate::Power(0.75),
            ],
            growth_factor: GROWTH_FACTOR,
            kappa_max: KAPPA_MAX,
            gamma_growth: GAMMA_GROWTH,
        }
    }
}

pub fn quasinilpotent_evidence(t: &OperatorRep) -> Result<QuasinilpotentEvidence> {
    if matches!(t.structure(), Structure::Nilpotent) {
        return Ok(QuasinilpotentEvidence::Structural);
    }
    let norm = operator_norm(t);
    let radius = linalg::eigenvalues(t.matrix())?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let relative_radius = if norm == 0.0 { 0.0 } else { radius / norm };
    if relative_radius <= QUASINILPOTENT_TOL {
        Ok(QuasinilpotentEvidence::Numerical { relative_radius })
    } else {
        Err(LabError::HypothesisFailed(format!(
            "operator is not quasinilpotent: spectral radius {radius:e} against norm {norm:e}"
        )))
    }
}

fn smallest_singular_value(m: &Mat<c64>) -> Result<f64> {
    Ok(linalg::singular_values(m)?.last().copied().unwrap_or(0.0))
}

/// `F = alpha G + F0` with `|F| < epsilon` and rank at most `min(n, m) + 1`.
pub fn assemble_small_norm(t: &OperatorRep, epsilon: f64, opts: &BridgeOptions) -> Result<BridgeAssembly> {
    if !(epsilon > 0.0) {
        return Err(LabError::InvalidSpec(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let quasinilpotent = quasinilpotent_evidence(t)?;
    let kr = if opts.boundary_rows.is_empty() {
        kernel_range(t, opts.tol_rank)?
    } else {
        kernel_range_section(t, &opts.boundary_rows, opts.tol_rank)?
    };
    if kr.n == 0 || kr.m == 0 {
        return Err(LabError::HypothesisFailed(format!(
            "0 must be an eigenvalue of T and of its adjoint (n = {}, m = {})",
            kr.n, kr.m
        )));
    }
    let g = bridge_operator(&kr)?;
    let alpha = epsilon / (2.0 * g.norm * (1.0 + ALPHA_MARGIN));
    let scaled: Vec<RankOneTerm> = g
        .terms()
        .iter()
        .map(|term| RankOneTerm::new(term.functional.scaled_real(alpha), term.vector.clone()))
        .collect();
    let alpha_g = PerturbationRep::finite_rank(scaled, t.dim())?.with_budget(epsilon / 2.0)?;
    let a = alpha_g.perturb(t)?;
    let branch = if kr.n <= kr.m {
        BridgeBranch::Injective
    } else {
        BridgeBranch::DenseRange
    };
    let mut certificate = BridgeCertificate {
        branch,
        n: kr.n,
        m: kr.m,
        quasinilpotent,
        alpha,
        g_norm: g.norm,
        alpha_g_norm: alpha_g.norm,
        injectivity_sigma_min: None,
        dense_range_sigma_min: None,
        f0_norm: None,
        total_norm: alpha_g.norm,
        rank_bound: alpha_g.rank_bound(),
        numerical_rank: None,
        countable_spectrum_assumed: true,
    };
    let mut assembly = BridgeAssembly {
        kernel_range: kr,
        g,
        alpha,
        alpha_g: alpha_g.clone(),
        f0: None,
        total: alpha_g.clone(),
        certificate: certificate.clone(),
    };

    if branch == BridgeBranch::Injective {
        certificate.injectivity_sigma_min = Some(smallest_singular_value(a.matrix())?);
        certificate.numerical_rank = Some(alpha_g.numerical_rank(RankCut::default())?);
        assembly.certificate = certificate;
        return Err(LabError::BranchUnsupported {
            reason: format!(
                "n = {} <= m = {}: T + alpha G is injective, but the rank-one step for this branch is not implemented",
                assembly.kernel_range.n, assembly.kernel_range.m
            ),
            partial: Box::new(assembly),
        });
    }

    let kept = kept_rows(t.dim(), &assembly.kernel_range.removed_rows);
    certificate.dense_range_sigma_min = Some(smallest_singular_value(&row_section(a.matrix(), &kept))?);

    let cands: Vec<CVector> = opts
        .candidates
        .iter()
        .map(|c| c.vector(t.dim()))
        .collect::<Result<_>>()?;
    let zero = c64::new(0.0, 0.0);
    let choice = select_estar(&a, zero, &opts.schedule, opts.family_len, &cands, opts.growth_factor)?;
    let fam = build_family(&a, zero, &opts.schedule, &choice.e_star, opts.family_len)?;
    let bio = build_biorthogonal(&fam, opts.kappa_max, opts.gamma_growth)?;
    let f0 = small_norm_rank_one(&a, &fam, &bio, epsilon / 2.0)?;
    let total = alpha_g.sum(&f0.perturbation)?.with_budget(epsilon)?;
    certificate.f0_norm = Some(f0.perturbation.norm);
    certificate.total_norm = total.norm;
    certificate.rank_bound = total.rank_bound();
    certificate.numerical_rank = Some(total.numerical_rank(RankCut::default())?);
    assembly.f0 = Some(f0);
    assembly.total = total;
    assembly.certificate = certificate;
    Ok(assembly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halfspace::invariance_residual;
    use crate::operator::{make_operator, OperatorSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat<c64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            c64::new(a, b)
        })
    }

    #[test]
    fn jordan_kernel_and_corange() {
        let j = OperatorRep::jordan_block(4).unwrap();
        let kr = kernel_range(&j, TOL_RANK).unwrap();
        assert_eq!((kr.n, kr.m), (1, 1));
        assert!((&kr.kernel_basis[0] - &CVector::unit(4, 3)).norm() < 1e-14);
        assert!((&kr.corange_basis[0] - &CVector::unit(4, 0)).norm() < 1e-14);
    }

    #[test]
    fn invertible_has_no_defect() {
        let d = OperatorRep::diagonal_real(&[1.0, -2.0, 3.0]).unwrap();
        let kr = kernel_range(&d, TOL_RANK).unwrap();
        assert_eq!((kr.n, kr.m), (0, 0));
        assert_eq!(bridge_operator(&kr).unwrap_err(), LabError::NoDefect { n: 0, m: 0 });
    }

    #[test]
    fn rank_two_product_has_three_dim_kernel() {
        let m = &gaussian(5, 2, 1) * &gaussian(2, 5, 2);
        let t = OperatorRep::dense(m).unwrap();
        let kr = kernel_range(&t, TOL_RANK).unwrap();
        assert_eq!((kr.n, kr.m), (3, 3));
        for v in &kr.kernel_basis {
            assert!(t.apply(v).norm() <= 1e-12 * operator_norm(&t));
        }
        for g in &kr.corange_basis {
            // orthogonal to the range: g^H T = 0
            assert!(t.apply_conj_transpose(g).norm() <= 1e-12 * operator_norm(&t));
        }
    }

    #[test]
    fn jordan_bridge_determinant() {
        let j = OperatorRep::jordan_block(4).unwrap();
        let g = bridge_operator(&kernel_range(&j, TOL_RANK).unwrap()).unwrap();
        let alpha = 0.3;
        let m = j.matrix() + linalg::scale(&g.matrix(), c(alpha));
        // cofactor expansion along the first row: only (0, 3) survives, times
        // the unit lower-triangular minor, sign (-1)^(0+3)
        assert!((m[(0, 3)] - c(alpha)).norm() < 1e-15);
        let det: c64 = linalg::eigenvalues(&m).unwrap().iter().product();
        assert!((det.norm() - alpha).abs() < 1e-12);
    }

    #[test]
    fn wide_toy_with_more_corange_than_kernel() {
        // 6 x 5 of rank 3: n = 2, m = 3, so G has rank 2 and T + alpha G is injective
        let a = &gaussian(6, 3, 3) * &gaussian(3, 5, 4);
        let kr = analyse(&a, TOL_RANK, CVector::clone).unwrap();
        assert_eq!((kr.n, kr.m), (2, 3));
        let terms = bridge_terms(&kr).unwrap();
        assert_eq!(terms.len(), 2);
        let mut g = Mat::<c64>::zeros(6, 5);
        for t in &terms {
            g += Mat::from_fn(6, 5, |i, j| t.vector[i] * t.functional[j]);
        }
        assert_eq!(linalg::rank_above(&linalg::singular_values(&g).unwrap(), 1e-10), 2);
        let sum = &a + linalg::scale(&g, c(0.05));
        let s = linalg::singular_values(&sum).unwrap();
        assert!(s[4] > 1e-3, "{s:?}");
    }

    #[test]
    fn jordan_assembly_stops_at_injective_branch() {
        for d in [4, 16, 64] {
            let j = OperatorRep::jordan_block(d).unwrap();
            let err = assemble_small_norm(&j, 0.2, &BridgeOptions::default()).unwrap_err();
            let LabError::BranchUnsupported { partial, .. } = err else {
                panic!("wrong error")
            };
            let cert = &partial.certificate;
            assert!(cert.alpha_g_norm < 0.1);
            let s = linalg::singular_values(&partial.alpha_g.perturb(&j).unwrap().matrix().clone()).unwrap();
            assert!((s[d - 1] - cert.alpha).abs() < 1e-10);
            assert!(s[..d - 1].iter().all(|x| (x - 1.0).abs() < 1e-10));
            assert!((cert.injectivity_sigma_min.unwrap() - cert.alpha).abs() < 1e-10);
        }
    }

    #[test]
    fn invertible_fails_hypothesis() {
        let t = OperatorRep::identity(4).unwrap();
        assert!(matches!(
            assemble_small_norm(&t, 0.2, &BridgeOptions::default()),
            Err(LabError::HypothesisFailed(_))
        ));
    }

    #[test]
    fn dense_range_branch_on_shift_jordan_toy() {
        let spec = OperatorSpec::ShiftJordanSum;
        let d = 16;
        let t = make_operator(&spec, d).unwrap();
        let opts = BridgeOptions {
            boundary_rows: spec.truncation_boundary_rows(d),
            ..BridgeOptions::default()
        };
        let eps = 0.2;
        let out = assemble_small_norm(&t, eps, &opts).unwrap();
        let cert = &out.certificate;
        assert_eq!((cert.n, cert.m), (2, 1));
        assert_eq!(cert.branch, BridgeBranch::DenseRange);
        assert!(cert.dense_range_sigma_min.unwrap() >= cert.alpha / 2.0);
        assert!(out.total.norm < eps);
        assert!(cert.numerical_rank.unwrap() <= 2);
        let f0 = out.f0.as_ref().unwrap();
        assert!(f0.perturbation.norm < eps / 2.0);
        assert!(f0.unit_pairing_residual <= 1e-8);
        let tf = out.total.perturb(&t).unwrap();
        assert!(invariance_residual(&tf, &f0.halfspace) <= 1e-8);
    }
}
