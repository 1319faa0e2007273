//! Finite-rank perturbations that make a functional-defined subspace
//! invariant.
//!
//! Two constructions live here. [`defect_one_construction`] turns the
//! pre-annihilator `Z` of a resolvent family into an invariant subspace of
//! `T + F` with `F = -alpha ⊗ T z0`. [`small_norm_rank_one`] does the same
//! with `F = e* ⊗ f` of norm below a budget, where `f` is assembled from the
//! biorthogonal duals so that `h*_n(f) = 1`.

use faer::c64;
use faer::Mat;
use serde::Serialize;

use crate::biorthogonal::{dual_system_for, BiorthogonalSystem};
use crate::error::{LabError, Result};
use crate::halfspace::{
    defect_estimate, defect_precondition_residual, invariance_residual, preannihilator, DefectReport, HalfSpaceRep,
    RankCut,
};
use crate::linalg;
use crate::operator::{operator_norm, OperatorRep, RankOneTerm};
use crate::resolvent::ResolventFamily;
use crate::vector::{functionals_to_rows, CVector};

/// `Z` counts as inside `ker e*` when `max |e*(z)| <= this * |e*|` over the unit basis.
pub const KERNEL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationKind {
    RankOne(RankOneTerm),
    FiniteRank(Vec<RankOneTerm>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationRep {
    pub kind: PerturbationKind,
    pub dim: usize,
    /// Spectral norm; exact for rank one.
    pub norm: f64,
    pub epsilon_budget: Option<f64>,
}

impl PerturbationRep {
    /// `functional ⊗ vector`
    pub fn rank_one(functional: CVector, vector: CVector) -> Self {
        let term = RankOneTerm::new(functional, vector);
        Self {
            dim: term.vector.dim(),
            norm: term.norm(),
            kind: PerturbationKind::RankOne(term),
            epsilon_budget: None,
        }
    }

    pub fn finite_rank(terms: Vec<RankOneTerm>, dim: usize) -> Result<Self> {
        let norm = if terms.is_empty() {
            0.0
        } else {
            operator_norm(&OperatorRep::zero(dim)?.with_rank_one_terms(&terms)?)
        };
        Ok(Self {
            kind: PerturbationKind::FiniteRank(terms),
            dim,
            norm,
            epsilon_budget: None,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            kind: PerturbationKind::FiniteRank(Vec::new()),
            dim,
            norm: 0.0,
            epsilon_budget: None,
        }
    }

    /// Attaches a budget, failing unless `norm < epsilon`.
    pub fn with_budget(mut self, epsilon: f64) -> Result<Self> {
        if !(self.norm < epsilon) {
            return Err(LabError::BudgetInfeasible {
                achievable: self.norm,
                requested: epsilon,
            });
        }
        self.epsilon_budget = Some(epsilon);
        Ok(self)
    }

    pub fn terms(&self) -> &[RankOneTerm] {
        match &self.kind {
            PerturbationKind::RankOne(t) => std::slice::from_ref(t),
            PerturbationKind::FiniteRank(ts) => ts,
        }
    }

    /// Upper bound on the rank: the number of terms.
    pub fn rank_bound(&self) -> usize {
        self.terms().len()
    }

    pub fn matrix(&self) -> Mat<c64> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for t in self.terms() {
            m += t.to_matrix();
        }
        m
    }

    /// Numerical rank of the assembled matrix.
    pub fn numerical_rank(&self, cut: RankCut) -> Result<usize> {
        let s = linalg::singular_values(&self.matrix())?;
        Ok(if s.first().copied().unwrap_or(0.0) == 0.0 {
            0
        } else {
            linalg::rank_above(&s, cut.threshold(&s))
        })
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        let mut y = CVector::zeros(self.dim);
        for t in self.terms() {
            y.axpy(t.functional.pair(x), &t.vector);
        }
        y
    }

    /// `T + self`, keeping `T`'s structure for fast solves.
    pub fn perturb(&self, t: &OperatorRep) -> Result<OperatorRep> {
        t.with_rank_one_terms(self.terms())
    }

    /// The sum as a finite-rank perturbation, with the budget dropped.
    pub fn sum(&self, other: &PerturbationRep) -> Result<PerturbationRep> {
        let mut terms = self.terms().to_vec();
        terms.extend_from_slice(other.terms());
        PerturbationRep::finite_rank(terms, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectOneData {
    /// Column of the `Z` basis used as `z0`.
    pub z0_index: usize,
    pub z0: CVector,
    /// `f = T z0`
    pub f: CVector,
    /// `alpha = e* / e*(z0)`
    pub alpha: CVector,
    /// `F = -alpha ⊗ f`
    pub perturbation: PerturbationRep,
    /// `max |x*_n(T z - alpha(z) f)|`, relative, over the `Z` basis.
    pub four_term_residual: f64,
    pub precondition_residual: f64,
    pub invariance_residual: f64,
    /// Certificate that `T Z` leaves `Z` in at most one direction.
    pub defect: DefectReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DefectOneOutcome {
    /// `Z` lies in `ker e*`, so `Z` is already invariant.
    AlreadyInvariant {
        max_estar_on_z: f64,
        invariance_residual: f64,
    },
    Perturbed(Box<DefectOneData>),
}

/// `e*(z)` for every column of the basis.
fn estar_on_basis(e_star: &CVector, basis: &Mat<c64>) -> Vec<c64> {
    let row = e_star.to_col_mat().transpose() * basis;
    (0..basis.ncols()).map(|j| row[(0, j)]).collect()
}

/// `max |x*_n(T z - alpha(z) f)| / (|T z| + |alpha(z)| |f|)` over the
/// family and the `Z` basis, where `h*_n(T z) = lambda_n h*_n(z) - e*(z)`
/// makes every term cancel.
pub fn four_term_residual(
    t: &OperatorRep,
    fam: &ResolventFamily,
    z: &HalfSpaceRep,
    f: &CVector,
    alpha: &CVector,
) -> f64 {
    let rows = functionals_to_rows(&fam.x_stars, fam.dim());
    let xf = &rows * f.to_col_mat();
    let a = estar_on_basis(alpha, &z.basis);
    let img = t.apply_mat(&z.basis);
    let r = &rows * &img;
    let inorms = linalg::column_norms(&img);
    let fnorm = f.norm();
    let mut worst = 0.0f64;
    for j in 0..r.ncols() {
        let denom = inorms[j] + a[j].norm() * fnorm + f64::MIN_POSITIVE;
        for i in 0..r.nrows() {
            worst = worst.max((r[(i, j)] - a[j] * xf[(i, 0)]).norm() / denom);
        }
    }
    worst
}

/// Either certifies that `Z` is invariant already, or builds the rank-one
/// repair `F = -alpha ⊗ T z0` with `z0` the basis vector maximizing `|e*(z)|`.
pub fn defect_one_construction(t: &OperatorRep, fam: &ResolventFamily, z: &HalfSpaceRep) -> Result<DefectOneOutcome> {
    if fam.dim() != t.dim() || z.ambient_dim() != t.dim() {
        return Err(LabError::DimensionMismatch {
            expected: t.dim(),
            got: fam.dim().min(z.ambient_dim()),
        });
    }
    let e = &fam.e_star;
    let vals = estar_on_basis(e, &z.basis);
    let (z0_index, best) = vals
        .iter()
        .enumerate()
        .map(|(j, v)| (j, v.norm()))
        .fold((0, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    if z.dim == 0 || best <= KERNEL_TOL * e.norm() {
        return Ok(DefectOneOutcome::AlreadyInvariant {
            max_estar_on_z: best.max(0.0),
            invariance_residual: invariance_residual(t, z),
        });
    }
    let z0 = z.basis_vector(z0_index);
    let f = t.apply(&z0);
    let alpha = e.scaled(c64::new(1.0, 0.0) / vals[z0_index]);
    let perturbation = PerturbationRep::rank_one(alpha.scaled_real(-1.0), f.clone());
    let t_plus_f = perturbation.perturb(t)?;
    Ok(DefectOneOutcome::Perturbed(Box::new(DefectOneData {
        z0_index,
        four_term_residual: four_term_residual(t, fam, z, &f, &alpha),
        precondition_residual: defect_precondition_residual(t, z, &f, &alpha),
        invariance_residual: invariance_residual(&t_plus_f, z),
        defect: defect_estimate(t, z, RankCut::default())?,
        z0,
        f,
        alpha,
        perturbation,
    })))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallNormOutcome {
    /// `F = e* ⊗ f` with the budget attached.
    pub perturbation: PerturbationRep,
    pub halfspace: HalfSpaceRep,
    /// Family indices that define `Z` and `f`.
    pub indices: Vec<usize>,
    pub duals: BiorthogonalSystem,
    pub f: CVector,
    /// `sum 1/|h*_n|` over the indices.
    pub tail_sum: f64,
    /// `|e*| sum |x_n| / |h*_n|`
    pub dual_sum_bound: f64,
    /// `|e*| M sum 1/|h*_n|`
    pub budget_bound: f64,
    /// `max |h*_n(f) - 1|`
    pub unit_pairing_residual: f64,
    pub invariance_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCandidate {
    pub len: usize,
    pub bound: f64,
}

/// Rank-one `F = e* ⊗ f` with `|F| < epsilon` and `(T + F) Z ⊆ Z`.
///
/// The smallest-norm functionals are dropped first until
/// `|e*| M sum 1/|h*_n| < epsilon`, keeping at least two; duals are
/// recomputed for every candidate subset.
pub fn small_norm_rank_one(
    t: &OperatorRep,
    fam: &ResolventFamily,
    bio: &BiorthogonalSystem,
    epsilon: f64,
) -> Result<SmallNormOutcome> {
    if !(epsilon > 0.0) {
        return Err(LabError::InvalidSpec(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if bio.indices.len() < 2 {
        return Err(LabError::TooFewSelected {
            kept: bio.indices.len(),
        });
    }
    let estar_norm = fam.e_star.norm();
    let mut order = bio.indices.clone();
    order.sort_by(|&a, &b| fam.norms[a].total_cmp(&fam.norms[b]).then(a.cmp(&b)));

    let mut best = f64::INFINITY;
    let mut chosen = None;
    for drop in 0..=order.len() - 2 {
        let mut subset = order[drop..].to_vec();
        subset.sort_unstable();
        let duals = dual_system_for(fam, &subset)?;
        let tail_sum: f64 = subset.iter().map(|&i| 1.0 / fam.norms[i]).sum();
        let bound = estar_norm * duals.m_bound * tail_sum;
        best = best.min(bound);
        if bound < epsilon {
            chosen = Some((subset, duals, tail_sum, bound));
            break;
        }
    }
    let Some((indices, duals, tail_sum, budget_bound)) = chosen else {
        return Err(LabError::BudgetInfeasible {
            achievable: best,
            requested: epsilon,
        });
    };

    let mut f = CVector::zeros(fam.dim());
    let mut dual_sum = 0.0;
    for (x, &i) in duals.x_duals.iter().zip(&indices) {
        f.axpy(c64::new(1.0 / fam.norms[i], 0.0), x);
        dual_sum += x.norm() / fam.norms[i];
    }
    let unit_pairing_residual = indices
        .iter()
        .map(|&i| (fam.h_stars[i].pair(&f) - c64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);
    let perturbation = PerturbationRep::rank_one(fam.e_star.clone(), f.clone()).with_budget(epsilon)?;
    let halfspace = preannihilator(&duals.x_stars, fam.dim())?;
    let invariance = invariance_residual(&perturbation.perturb(t)?, &halfspace);
    Ok(SmallNormOutcome {
        perturbation,
        halfspace,
        indices,
        duals,
        f,
        tail_sum,
        dual_sum_bound: estar_norm * dual_sum,
        budget_bound,
        unit_pairing_residual,
        invariance_residual: invariance,
    })
}
