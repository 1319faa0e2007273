//! Bounded operators at truncation dimension `D`.
//!
//! An [`OperatorRep`] carries a [`Structure`] tag. Shifts and diagonals are
//! stored in compact form and only densified on demand, so their apply,
//! transpose and resolvent solves stay `O(D)` even for very large `D`.
//! A tagged operator's dense matrix is, by construction, the matrix the tag
//! generates.

use std::fmt;
use std::sync::OnceLock;

use faer::c64;
use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{self, czero};
use crate::vector::CVector;

/// Relative singularity threshold for shifted solves: `sigma_min >= this * |lambda I - A|`.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

/// Dimension at or below which norms of unstructured operators use a full SVD.
pub const SVD_NORM_MAX_DIM: usize = 512;

/// `x -> functional(x) * vector`, i.e. `functional ⊗ vector`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneTerm {
    pub functional: CVector,
    pub vector: CVector,
}

impl RankOneTerm {
    pub fn new(functional: CVector, vector: CVector) -> Self {
        Self { functional, vector }
    }

    /// Exact spectral norm `|functional| |vector|`.
    pub fn norm(&self) -> f64 {
        self.functional.norm() * self.vector.norm()
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        self.vector.scaled(self.functional.pair(x))
    }

    /// Dense `vector * functional^T`.
    pub fn to_matrix(&self) -> Mat<c64> {
        let d = self.vector.dim();
        Mat::from_fn(d, d, |i, j| self.vector[i] * self.functional[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    /// `e_k -> w_k e_{k+1}`, `e_D -> 0`; holds the `D - 1` weights in use.
    ForwardShift {
        weights: Vec<f64>,
    },
    /// `e_{k+1} -> w_k e_k`, `e_1 -> 0`.
    BackwardShift {
        weights: Vec<f64>,
    },
    Diagonal {
        entries: Vec<c64>,
    },
    Nilpotent,
    Dense,
    /// A base operator plus a sum of rank-one terms.
    RankUpdated {
        base: Box<OperatorRep>,
        terms: Vec<RankOneTerm>,
    },
}

impl Structure {
    pub fn name(&self) -> &'static str {
        match self {
            Structure::ForwardShift { .. } => "forward_shift",
            Structure::BackwardShift { .. } => "backward_shift",
            Structure::Diagonal { .. } => "diagonal",
            Structure::Nilpotent => "nilpotent",
            Structure::Dense => "dense",
            Structure::RankUpdated { .. } => "rank_updated",
        }
    }
}

#[derive(Clone)]
pub struct OperatorRep {
    dim: usize,
    structure: Structure,
    matrix: OnceLock<Mat<c64>>,
}

impl fmt::Debug for OperatorRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorRep")
            .field("dim", &self.dim)
            .field("structure", &self.structure.name())
            .finish()
    }
}

impl PartialEq for OperatorRep {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.matrix() == other.matrix()
    }
}

fn check_weights(weights: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim < 2 {
        return Err(LabError::InvalidSpec(format!("dimension {dim} < 2")));
    }
    if weights.len() < dim - 1 {
        return Err(LabError::InvalidSpec(format!(
            "shift needs at least {} weights, got {}",
            dim - 1,
            weights.len()
        )));
    }
    let w = weights[..dim - 1].to_vec();
    if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x <= 0.0) {
        return Err(LabError::InvalidSpec(format!(
            "shift weight {bad} is not a positive finite real"
        )));
    }
    Ok(w)
}

fn check_finite(m: &Mat<c64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(LabError::InvalidSpec(format!("non-finite matrix entry at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

fn is_nilpotent(m: &Mat<c64>) -> bool {
    let fro = m.norm_l2();
    if fro == 0.0 {
        return true;
    }
    let mut p = linalg::scale(m, c64::new(1.0 / fro, 0.0));
    let mut power = 1usize;
    while power < m.nrows() {
        p = &p * &p;
        power *= 2;
        if p.norm_l2() == 0.0 {
            return true;
        }
    }
    p.norm_l2() <= 1e-8
}

impl OperatorRep {
    fn with_structure(dim: usize, structure: Structure) -> Self {
        Self {
            dim,
            structure,
            matrix: OnceLock::new(),
        }
    }

    pub fn forward_shift(weights: &[f64], dim: usize) -> Result<Self> {
        let weights = check_weights(weights, dim)?;
        Ok(Self::with_structure(dim, Structure::ForwardShift { weights }))
    }

    pub fn backward_shift(weights: &[f64], dim: usize) -> Result<Self> {
        let weights = check_weights(weights, dim)?;
        Ok(Self::with_structure(dim, Structure::BackwardShift { weights }))
    }

    pub fn unweighted_forward_shift(dim: usize) -> Result<Self> {
        Self::forward_shift(&vec![1.0; dim.saturating_sub(1)], dim)
    }

    pub fn unweighted_backward_shift(dim: usize) -> Result<Self> {
        Self::backward_shift(&vec![1.0; dim.saturating_sub(1)], dim)
    }

    pub fn diagonal(entries: &[c64], dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(LabError::InvalidSpec("dimension 0".into()));
        }
        if entries.len() < dim {
            return Err(LabError::InvalidSpec(format!(
                "diagonal needs {dim} entries, got {}",
                entries.len()
            )));
        }
        let entries = CVector::new(entries[..dim].to_vec())?.into_vec();
        Ok(Self::with_structure(dim, Structure::Diagonal { entries }))
    }

    pub fn diagonal_real(entries: &[f64]) -> Result<Self> {
        let e: Vec<c64> = entries.iter().map(|&x| c64::new(x, 0.0)).collect();
        Self::diagonal(&e, e.len())
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![c64::new(1.0, 0.0); dim], dim)
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![czero(); dim], dim)
    }

    pub fn dense(matrix: Mat<c64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(LabError::InvalidSpec(format!(
                "dense operator must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_finite(&matrix)?;
        let dim = matrix.nrows();
        let op = Self::with_structure(dim, Structure::Dense);
        let _ = op.matrix.set(matrix);
        Ok(op)
    }

    /// A dense matrix tagged nilpotent; the tag is checked by repeated squaring.
    pub fn nilpotent(matrix: Mat<c64>) -> Result<Self> {
        let mut op = Self::dense(matrix)?;
        if !is_nilpotent(op.matrix()) {
            return Err(LabError::InvalidSpec("matrix tagged nilpotent is not nilpotent".into()));
        }
        op.structure = Structure::Nilpotent;
        Ok(op)
    }

    /// `J e_k = e_{k+1}`, `J e_D = 0`.
    pub fn jordan_block(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(LabError::InvalidSpec(format!("dimension {dim} < 2")));
        }
        let m = Mat::from_fn(dim, dim, |i, j| if i == j + 1 { c64::new(1.0, 0.0) } else { czero() });
        Self::nilpotent(m)
    }

    /// `self + sum_i functional_i ⊗ vector_i`, keeping the base structure.
    pub fn with_rank_one_terms(&self, extra: &[RankOneTerm]) -> Result<Self> {
        for t in extra {
            if t.functional.dim() != self.dim || t.vector.dim() != self.dim {
                return Err(LabError::DimensionMismatch {
                    expected: self.dim,
                    got: t.functional.dim().min(t.vector.dim()),
                });
            }
        }
        let (base, mut terms) = match &self.structure {
            Structure::RankUpdated { base, terms } => (base.clone(), terms.clone()),
            _ => (Box::new(self.clone()), Vec::new()),
        };
        terms.extend_from_slice(extra);
        Ok(Self::with_structure(self.dim, Structure::RankUpdated { base, terms }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    /// True when apply and solves avoid dense `O(D^2)` work.
    pub fn is_compact_form(&self) -> bool {
        match &self.structure {
            Structure::ForwardShift { .. } | Structure::BackwardShift { .. } | Structure::Diagonal { .. } => true,
            Structure::RankUpdated { base, .. } => base.is_compact_form(),
            Structure::Nilpotent | Structure::Dense => false,
        }
    }

    /// The dense `D x D` matrix, built on first use for compact forms.
    pub fn matrix(&self) -> &Mat<c64> {
        self.matrix.get_or_init(|| self.build_matrix())
    }

    fn build_matrix(&self) -> Mat<c64> {
        let d = self.dim;
        match &self.structure {
            Structure::ForwardShift { weights } => {
                Mat::from_fn(
                    d,
                    d,
                    |i, j| if i == j + 1 { c64::new(weights[j], 0.0) } else { czero() },
                )
            }
            Structure::BackwardShift { weights } => {
                Mat::from_fn(
                    d,
                    d,
                    |i, j| if j == i + 1 { c64::new(weights[i], 0.0) } else { czero() },
                )
            }
            Structure::Diagonal { entries } => Mat::from_fn(d, d, |i, j| if i == j { entries[i] } else { czero() }),
            Structure::RankUpdated { base, terms } => {
                let mut m = base.matrix().clone();
                for t in terms {
                    m += t.to_matrix();
                }
                m
            }
            Structure::Nilpotent | Structure::Dense => unreachable!("dense forms are stored eagerly"),
        }
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        debug_assert_eq!(x.dim(), self.dim);
        let d = self.dim;
        match &self.structure {
            Structure::ForwardShift { weights } => {
                CVector::from_fn(d, |i| if i == 0 { czero() } else { x[i - 1] * weights[i - 1] })
            }
            Structure::BackwardShift { weights } => {
                CVector::from_fn(d, |i| if i + 1 == d { czero() } else { x[i + 1] * weights[i] })
            }
            Structure::Diagonal { entries } => CVector::from_fn(d, |i| entries[i] * x[i]),
            Structure::RankUpdated { base, terms } => {
                let mut y = base.apply(x);
                for t in terms {
                    y.axpy(t.functional.pair(x), &t.vector);
                }
                y
            }
            Structure::Nilpotent | Structure::Dense => {
                let y = self.matrix() * x.to_col_mat();
                CVector::from_mat_col(&y, 0)
            }
        }
    }

    /// `T^T f`, the Banach adjoint acting on a functional.
    pub fn apply_transpose(&self, f: &CVector) -> CVector {
        match &self.structure {
            Structure::Nilpotent | Structure::Dense => {
                let y = self.matrix().transpose() * f.to_col_mat();
                CVector::from_mat_col(&y, 0)
            }
            _ => self.adjoint().apply(f),
        }
    }

    /// `T^H x` (conjugate transpose), used for norms and singular values.
    pub fn apply_conj_transpose(&self, x: &CVector) -> CVector {
        self.apply_transpose(&x.conj()).conj()
    }

    /// Applies the operator to every column of `m`.
    pub fn apply_mat(&self, m: &Mat<c64>) -> Mat<c64> {
        match &self.structure {
            Structure::Nilpotent | Structure::Dense => self.matrix() * m,
            _ => {
                let d = self.dim;
                let mut out = Mat::zeros(d, m.ncols());
                for j in 0..m.ncols() {
                    let y = self.apply(&CVector::from_fn(d, |i| m[(i, j)]));
                    for i in 0..d {
                        out[(i, j)] = y[i];
                    }
                }
                out
            }
        }
    }

    /// `T^T` applied to every column of `m`.
    pub fn apply_transpose_mat(&self, m: &Mat<c64>) -> Mat<c64> {
        match &self.structure {
            Structure::Nilpotent | Structure::Dense => self.matrix().transpose() * m,
            _ => self.adjoint().apply_mat(m),
        }
    }

    /// The Banach adjoint: transpose, not conjugate transpose.
    pub fn adjoint(&self) -> OperatorRep {
        let d = self.dim;
        match &self.structure {
            Structure::ForwardShift { weights } => Self::with_structure(
                d,
                Structure::BackwardShift {
                    weights: weights.clone(),
                },
            ),
            Structure::BackwardShift { weights } => Self::with_structure(
                d,
                Structure::ForwardShift {
                    weights: weights.clone(),
                },
            ),
            Structure::Diagonal { entries } => Self::with_structure(
                d,
                Structure::Diagonal {
                    entries: entries.clone(),
                },
            ),
            Structure::RankUpdated { base, terms } => Self::with_structure(
                d,
                Structure::RankUpdated {
                    base: Box::new(base.adjoint()),
                    terms: terms
                        .iter()
                        .map(|t| RankOneTerm::new(t.vector.clone(), t.functional.clone()))
                        .collect(),
                },
            ),
            Structure::Nilpotent | Structure::Dense => {
                let op = Self::with_structure(d, self.structure.clone());
                let _ = op.matrix.set(linalg::transpose(self.matrix()));
                op
            }
        }
    }

    /// `self + other` as a dense operator.
    pub fn add_dense(&self, other: &Mat<c64>) -> Result<OperatorRep> {
        OperatorRep::dense(self.matrix() + other)
    }

    /// Operator product as a dense operator.
    pub fn compose(&self, other: &OperatorRep) -> Result<OperatorRep> {
        OperatorRep::dense(self.apply_mat(other.matrix()))
    }
}

/// Weight sequences for shifts in the scenario config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Constant(f64),
    Explicit(Vec<f64>),
    /// `w_k = k^(-power)` for one-based `k`.
    Power {
        power: f64,
    },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Constant(1.0)
    }
}

impl WeightSpec {
    pub fn materialize(&self, dim: usize) -> Vec<f64> {
        let n = dim.saturating_sub(1);
        match self {
            WeightSpec::Constant(w) => vec![*w; n],
            WeightSpec::Explicit(v) => v.clone(),
            WeightSpec::Power { power } => (1..=n).map(|k| (k as f64).powf(-power)).collect(),
        }
    }
}

/// A real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn value(self) -> c64 {
        match self {
            Scalar::Real(x) => c64::new(x, 0.0),
            Scalar::Complex([re, im]) => c64::new(re, im),
        }
    }
}

impl From<c64> for Scalar {
    fn from(z: c64) -> Self {
        if z.im == 0.0 {
            Scalar::Real(z.re)
        } else {
            Scalar::Complex([z.re, z.im])
        }
    }
}

/// Operator zoo entries, as written in scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    ForwardShift {
        #[serde(default)]
        weights: WeightSpec,
    },
    BackwardShift {
        #[serde(default)]
        weights: WeightSpec,
    },
    Diagonal {
        entries: Vec<Scalar>,
    },
    Identity,
    Zero,
    JordanBlock,
    Dense {
        rows: Vec<Vec<Scalar>>,
    },
    /// Entries i.i.d. complex Gaussian with standard deviation `scale / sqrt(D)`.
    RandomGaussian {
        seed: u64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Upper-triangular matrix with eigenvalues split into two clusters and
    /// random non-normal coupling above the diagonal.
    ClusterPair {
        centers: [Scalar; 2],
        spread: f64,
        coupling: f64,
        seed: u64,
    },
    /// Unweighted backward shift on the first `D - 2` coordinates plus a
    /// `2 x 2` Jordan block on the last two.
    ShiftJordanSum,
}

fn one() -> f64 {
    1.0
}

impl OperatorSpec {
    /// Rows where truncation cuts off the action of the infinite operator:
    /// the bottom row of a backward-shift block maps nothing onto its
    /// coordinate only because the next coordinate was dropped.
    pub fn truncation_boundary_rows(&self, dim: usize) -> Vec<usize> {
        match self {
            OperatorSpec::BackwardShift { .. } => vec![dim - 1],
            OperatorSpec::ShiftJordanSum => vec![dim - 3],
            _ => Vec::new(),
        }
    }
}

/// Builds the truncation of a zoo operator.
pub fn make_operator(spec: &OperatorSpec, dim: usize) -> Result<OperatorRep> {
    if dim < 2 {
        return Err(LabError::InvalidSpec(format!("dimension {dim} < 2")));
    }
    match spec {
        OperatorSpec::ForwardShift { weights } => OperatorRep::forward_shift(&weights.materialize(dim), dim),
        OperatorSpec::BackwardShift { weights } => OperatorRep::backward_shift(&weights.materialize(dim), dim),
        OperatorSpec::Diagonal { entries } => {
            let e: Vec<c64> = entries.iter().map(|s| s.value()).collect();
            OperatorRep::diagonal(&e, dim)
        }
        OperatorSpec::Identity => OperatorRep::identity(dim),
        OperatorSpec::Zero => OperatorRep::zero(dim),
        OperatorSpec::JordanBlock => OperatorRep::jordan_block(dim),
        OperatorSpec::Dense { rows } => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(LabError::InvalidSpec(format!("dense rows must be {dim}x{dim}")));
            }
            OperatorRep::dense(Mat::from_fn(dim, dim, |i, j| rows[i][j].value()))
        }
        OperatorSpec::RandomGaussian { seed, scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let s = scale / (dim as f64).sqrt() / std::f64::consts::SQRT_2;
            let mut draw = || {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                c64::new(re * s, im * s)
            };
            let mut m = Mat::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    m[(i, j)] = draw();
                }
            }
            OperatorRep::dense(m)
        }
        OperatorSpec::ClusterPair {
            centers,
            spread,
            coupling,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
            let half = dim / 2;
            let mut m = Mat::zeros(dim, dim);
            for i in 0..dim {
                let c = if i < half {
                    centers[0].value()
                } else {
                    centers[1].value()
                };
                let (a, b) = (normal(), normal());
                let r = c64::new(a, b);
                m[(i, i)] = c + r * (spread / (1.0 + r.norm()));
                for j in (i + 1)..dim {
                    m[(i, j)] = c64::new(normal(), normal()) * (coupling / (dim as f64).sqrt());
                }
            }
            OperatorRep::dense(m)
        }
        OperatorSpec::ShiftJordanSum => {
            if dim < 4 {
                return Err(LabError::InvalidSpec("shift_jordan_sum needs D >= 4".into()));
            }
            let k = dim - 2;
            let m = Mat::from_fn(dim, dim, |i, j| {
                let hit = (i < k && j < k && j == i + 1) || (i == k + 1 && j == k);
                if hit {
                    c64::new(1.0, 0.0)
                } else {
                    czero()
                }
            });
            OperatorRep::nilpotent(m)
        }
    }
}

/// Which algorithm `resolvent_solve` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Closed-form recurrences for shift/diagonal tags, LU otherwise.
    #[default]
    Auto,
    /// Generic dense LU regardless of the tag.
    Dense,
}

enum SolverKind {
    Diagonal(Vec<c64>),
    Forward { lambda: c64, weights: Vec<f64> },
    Backward { lambda: c64, weights: Vec<f64> },
    Lu(PartialPivLu<c64>),
    Woodbury(Box<WoodburyParts>),
}

struct WoodburyParts {
    base: ShiftedSolver,
    vectors: Vec<CVector>,
    functionals: Vec<CVector>,
    inv_v: Vec<CVector>,
    inv_c_adj: Vec<CVector>,
    cap: PartialPivLu<c64>,
    cap_adj: PartialPivLu<c64>,
}

/// A factorization of `lambda I - A` with solves against it and its
/// conjugate transpose.
pub struct ShiftedSolver {
    dim: usize,
    kind: SolverKind,
}

fn forward_recurrence(lambda: c64, weights: &[f64], b: &CVector) -> CVector {
    // (lambda - S) h = b, S e_k = w_k e_{k+1}
    let d = b.dim();
    let mut h = CVector::zeros(d);
    let inv = c64::new(1.0, 0.0) / lambda;
    h[0] = b[0] * inv;
    for k in 1..d {
        h[k] = (b[k] + h[k - 1] * weights[k - 1]) * inv;
    }
    h
}

fn backward_recurrence(lambda: c64, weights: &[f64], b: &CVector) -> CVector {
    // (lambda - B) h = b, (B x)_k = w_k x_{k+1}
    let d = b.dim();
    let mut h = CVector::zeros(d);
    let inv = c64::new(1.0, 0.0) / lambda;
    h[d - 1] = b[d - 1] * inv;
    for k in (0..d - 1).rev() {
        h[k] = (b[k] + h[k + 1] * weights[k]) * inv;
    }
    h
}

fn small_matrix(k: usize, f: impl Fn(usize, usize) -> c64) -> Mat<c64> {
    Mat::from_fn(k, k, f)
}

impl ShiftedSolver {
    pub fn new(a: &OperatorRep, lambda: c64, method: SolveMethod) -> Result<Self> {
        let dim = a.dim();
        let singular = |sigma: f64| LabError::SingularResolvent {
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            sigma_min: sigma,
            threshold: 0.0,
        };
        let kind = match (method, a.structure()) {
            (SolveMethod::Auto, Structure::Diagonal { entries }) => {
                SolverKind::Diagonal(entries.iter().map(|d| lambda - d).collect())
            }
            (SolveMethod::Auto, Structure::ForwardShift { weights }) => {
                if lambda.norm() == 0.0 {
                    return Err(singular(0.0));
                }
                SolverKind::Forward {
                    lambda,
                    weights: weights.clone(),
                }
            }
            (SolveMethod::Auto, Structure::BackwardShift { weights }) => {
                if lambda.norm() == 0.0 {
                    return Err(singular(0.0));
                }
                SolverKind::Backward {
                    lambda,
                    weights: weights.clone(),
                }
            }
            (SolveMethod::Auto, Structure::RankUpdated { base, terms }) => {
                let base_solver = ShiftedSolver::new(base, lambda, method)?;
                let k = terms.len();
                let vectors: Vec<CVector> = terms.iter().map(|t| t.vector.clone()).collect();
                let functionals: Vec<CVector> = terms.iter().map(|t| t.functional.clone()).collect();
                let inv_v: Vec<CVector> = vectors.iter().map(|v| base_solver.solve(v)).collect();
                let c_conj: Vec<CVector> = functionals.iter().map(|c| c.conj()).collect();
                let inv_c_adj: Vec<CVector> = c_conj.iter().map(|c| base_solver.solve_adjoint(c)).collect();
                // (M0 - V C^T)^{-1}: capacitance I - C^T M0^{-1} V
                let cap_m = small_matrix(k, |i, j| {
                    let delta = if i == j { c64::new(1.0, 0.0) } else { czero() };
                    delta - functionals[i].pair(&inv_v[j])
                });
                // (M0^H - conj(C) V^H)^{-1}: capacitance I - V^H M0^{-H} conj(C)
                let cap_adj_m = small_matrix(k, |i, j| {
                    let delta = if i == j { c64::new(1.0, 0.0) } else { czero() };
                    delta - vectors[i].conj().pair(&inv_c_adj[j])
                });
                let cap_sv = linalg::singular_values(&cap_m)?;
                if cap_sv.last().copied().unwrap_or(1.0) <= SINGULARITY_THRESHOLD * cap_sv[0].max(1.0) {
                    return Err(singular(0.0));
                }
                SolverKind::Woodbury(Box::new(WoodburyParts {
                    base: base_solver,
                    vectors,
                    functionals,
                    inv_v,
                    inv_c_adj,
                    cap: cap_m.partial_piv_lu(),
                    cap_adj: cap_adj_m.partial_piv_lu(),
                }))
            }
            _ => {
                let m = Mat::from_fn(dim, dim, |i, j| {
                    let shift = if i == j { lambda } else { czero() };
                    shift - a.matrix()[(i, j)]
                });
                SolverKind::Lu(m.partial_piv_lu())
            }
        };
        Ok(Self { dim, kind })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(lambda I - A)^{-1} b`
    pub fn solve(&self, b: &CVector) -> CVector {
        match &self.kind {
            SolverKind::Diagonal(d) => CVector::from_fn(self.dim, |i| b[i] / d[i]),
            SolverKind::Forward { lambda, weights } => forward_recurrence(*lambda, weights, b),
            SolverKind::Backward { lambda, weights } => backward_recurrence(*lambda, weights, b),
            SolverKind::Lu(lu) => CVector::from_mat_col(&lu.solve(b.to_col_mat()), 0),
            SolverKind::Woodbury(w) => {
                let y = w.base.solve(b);
                let k = w.vectors.len();
                let rhs = Mat::from_fn(k, 1, |i, _| w.functionals[i].pair(&y));
                let coef = w.cap.solve(&rhs);
                let mut x = y;
                for j in 0..k {
                    x.axpy(coef[(j, 0)], &w.inv_v[j]);
                }
                x
            }
        }
    }

    /// `(lambda I - A)^{-H} b`
    pub fn solve_adjoint(&self, b: &CVector) -> CVector {
        match &self.kind {
            SolverKind::Diagonal(d) => CVector::from_fn(self.dim, |i| b[i] / d[i].conj()),
            // (lambda - S)^H = conj(lambda) - B with the same real weights
            SolverKind::Forward { lambda, weights } => backward_recurrence(lambda.conj(), weights, b),
            SolverKind::Backward { lambda, weights } => forward_recurrence(lambda.conj(), weights, b),
            SolverKind::Lu(lu) => CVector::from_mat_col(&lu.solve_adjoint(b.to_col_mat()), 0),
            SolverKind::Woodbury(w) => {
                let y = w.base.solve_adjoint(b);
                let k = w.vectors.len();
                let rhs = Mat::from_fn(k, 1, |i, _| w.vectors[i].conj().pair(&y));
                let coef = w.cap_adj.solve(&rhs);
                let mut x = y;
                for j in 0..k {
                    x.axpy(coef[(j, 0)], &w.inv_c_adj[j]);
                }
                x
            }
        }
    }

    /// Estimate of the smallest singular value of `lambda I - A`.
    ///
    /// Exact for diagonal tags; otherwise inverse power iteration on
    /// `(M^H M)^{-1}`, which approaches `|M^{-1}|` from below.
    pub fn sigma_min_estimate(&self) -> f64 {
        if let SolverKind::Diagonal(d) = &self.kind {
            return d.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        }
        let n = self.dim;
        let mut x = CVector::from_fn(n, |i| c64::new(1.0 + (i as f64 * 0.618_033_988_75).fract(), 0.0));
        x = x.normalized().expect("nonzero start");
        let mut est = 0.0f64;
        for _ in 0..30 {
            let y = self.solve(&x);
            let z = self.solve_adjoint(&y);
            if !z.is_finite() {
                return 0.0;
            }
            let nz = z.norm();
            if nz == 0.0 {
                break;
            }
            let prev = est;
            est = nz.sqrt();
            x = z.scaled_real(1.0 / nz);
            if prev > 0.0 && ((est - prev) / est).abs() < 1e-4 {
                break;
            }
        }
        if est == 0.0 || !est.is_finite() {
            0.0
        } else {
            1.0 / est
        }
    }
}

/// A resolvent solution with its diagnostics.
#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub h: CVector,
    /// `|(lambda I - A) h - b| / |b|`
    pub relative_residual: f64,
    pub sigma_min: f64,
    pub shifted_norm: f64,
}

/// Cheap upper-side estimate of `|lambda I - A|`.
fn shifted_norm(a: &OperatorRep, lambda: c64) -> f64 {
    match a.structure() {
        Structure::Diagonal { entries } => entries.iter().map(|d| (lambda - d).norm()).fold(0.0, f64::max),
        _ => lambda.norm() + operator_norm(a),
    }
}

/// Solves `(lambda I - A) h = b`, with singularity detection and residual.
pub fn resolvent_solve_detailed(
    a: &OperatorRep,
    lambda: c64,
    b: &CVector,
    method: SolveMethod,
) -> Result<ResolventSolution> {
    if b.dim() != a.dim() {
        return Err(LabError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let solver = ShiftedSolver::new(a, lambda, method)?;
    let sigma_min = solver.sigma_min_estimate();
    let norm = shifted_norm(a, lambda);
    let threshold = SINGULARITY_THRESHOLD * norm;
    if !(sigma_min >= threshold) || sigma_min == 0.0 {
        return Err(LabError::SingularResolvent {
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            sigma_min,
            threshold,
        });
    }
    let h = solver.solve(b);
    if !h.is_finite() {
        return Err(LabError::SingularResolvent {
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            sigma_min,
            threshold,
        });
    }
    let mut r = h.scaled(lambda);
    r = &r - &a.apply(&h);
    r = &r - b;
    let bn = b.norm();
    let relative_residual = if bn > 0.0 { r.norm() / bn } else { r.norm() };
    Ok(ResolventSolution {
        h,
        relative_residual,
        sigma_min,
        shifted_norm: norm,
    })
}

/// `(lambda I - A)^{-1} b`
pub fn resolvent_solve(a: &OperatorRep, lambda: c64, b: &CVector) -> Result<CVector> {
    resolvent_solve_detailed(a, lambda, b, SolveMethod::Auto).map(|s| s.h)
}

pub fn adjoint(t: &OperatorRep) -> OperatorRep {
    t.adjoint()
}

/// Largest singular value.
pub fn operator_norm(t: &OperatorRep) -> f64 {
    match t.structure() {
        Structure::Diagonal { entries } => entries.iter().map(|z| z.norm()).fold(0.0, f64::max),
        Structure::ForwardShift { weights } | Structure::BackwardShift { weights } => {
            weights.iter().copied().fold(0.0, f64::max)
        }
        Structure::RankUpdated { .. } if t.dim() > SVD_NORM_MAX_DIM => {
            power_norm(t).unwrap_or_else(|| linalg::spectral_norm(t.matrix()).unwrap_or(f64::NAN))
        }
        _ if t.dim() > SVD_NORM_MAX_DIM => {
            power_norm(t).unwrap_or_else(|| linalg::spectral_norm(t.matrix()).unwrap_or(f64::NAN))
        }
        _ => linalg::spectral_norm(t.matrix()).unwrap_or(f64::NAN),
    }
}

/// Power iteration on `T^H T`; `None` when it fails to settle to 1e-10.
fn power_norm(t: &OperatorRep) -> Option<f64> {
    let n = t.dim();
    let mut x = CVector::from_fn(n, |i| c64::new(1.0, (i as f64 * 0.414_213_562_37).fract()));
    x = x.normalized()?;
    let mut prev = 0.0;
    for _ in 0..3000 {
        let y = t.apply(&x);
        let z = t.apply_conj_transpose(&y);
        let nz = z.norm();
        if nz == 0.0 {
            return Some(0.0);
        }
        let est = nz.sqrt();
        x = z.scaled_real(1.0 / nz);
        if prev > 0.0 && ((est - prev) / est).abs() < 1e-12 {
            return Some(est);
        }
        prev = est;
    }
    None
}
