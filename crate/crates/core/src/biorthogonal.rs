//! Well-conditioned subsequences of a functional family and their
//! minimum-norm biorthogonal duals, `x*_i(x_j) = delta_ij`.

use faer::c64;
use faer::Mat;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg;
use crate::resolvent::ResolventFamily;
use crate::vector::{functionals_to_rows, CVector};

pub const KAPPA_MAX: f64 = 1e3;
pub const GAMMA_GROWTH: f64 = 2.0;

/// Functionals whose coordinate matrix has a smaller singular value count as dependent.
pub const RANK_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BiorthogonalSystem {
    /// Family indices of the selected functionals.
    pub indices: Vec<usize>,
    pub x_stars: Vec<CVector>,
    pub x_duals: Vec<CVector>,
    /// Condition number of the functional coordinate matrix.
    pub gram_cond: f64,
    /// `max_j |x_j|`
    pub m_bound: f64,
}

impl BiorthogonalSystem {
    pub fn len(&self) -> usize {
        self.x_stars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_stars.is_empty()
    }

    /// `max_ij |x*_i(x_j) - delta_ij|`
    pub fn pairing_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, f) in self.x_stars.iter().enumerate() {
            for (j, x) in self.x_duals.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((f.pair(x) - c64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Condition number `sigma_1 / sigma_k` of the stacked functionals, infinite
/// when they are dependent.
pub fn pairing_condition(functionals: &[CVector]) -> Result<f64> {
    if functionals.is_empty() {
        return Ok(1.0);
    }
    let a = functionals_to_rows(functionals, functionals[0].dim());
    let s = linalg::singular_values(&a)?;
    let (hi, lo) = (s[0], *s.last().expect("nonempty"));
    Ok(if lo <= RANK_FLOOR * hi.max(1.0) {
        f64::INFINITY
    } else {
        hi / lo
    })
}

/// Greedy selection over raw functionals and their growth norms: index `n`
/// joins when `norms[n] >= gamma * norms[last]` and the condition number
/// stays at most `kappa_max`.
pub fn greedy_select(x_stars: &[CVector], norms: &[f64], kappa_max: f64, gamma: f64) -> Result<Vec<usize>> {
    if x_stars.is_empty() {
        return Err(LabError::Empty("functional family"));
    }
    let mut accepted: Vec<usize> = Vec::new();
    let mut chosen: Vec<CVector> = Vec::new();
    for (n, x) in x_stars.iter().enumerate() {
        if let Some(&last) = accepted.last() {
            if norms[n] < gamma * norms[last] {
                continue;
            }
        }
        chosen.push(x.clone());
        if pairing_condition(&chosen)? <= kappa_max {
            accepted.push(n);
        } else {
            chosen.pop();
        }
    }
    if accepted.len() < 2 {
        return Err(LabError::TooFewSelected { kept: accepted.len() });
    }
    Ok(accepted)
}

pub fn select_subsequence(fam: &ResolventFamily, kappa_max: f64, gamma: f64) -> Result<Vec<usize>> {
    greedy_select(&fam.x_stars, &fam.norms, kappa_max, gamma)
}

/// Minimum-norm duals: the columns of the pseudoinverse of the functional
/// coordinate matrix `A`, so that `A X = I`.
pub fn dual_system(x_stars: &[CVector], dim: usize) -> Result<BiorthogonalSystem> {
    if x_stars.is_empty() {
        return Err(LabError::Empty("functional list"));
    }
    if let Some(bad) = x_stars.iter().find(|x| x.dim() != dim) {
        return Err(LabError::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let k = x_stars.len();
    if k > dim {
        return Err(LabError::RankDeficient { sigma_min: 0.0 });
    }
    let a = functionals_to_rows(x_stars, dim);
    let (u, s, v) = linalg::thin_svd(&a)?;
    let sigma_min = *s.last().expect("nonempty");
    if sigma_min <= RANK_FLOOR {
        return Err(LabError::RankDeficient { sigma_min });
    }
    // A = U S V^H, A^+ = V S^{-1} U^H
    let scaled = Mat::from_fn(k, k, |i, j| u[(j, i)].conj() / s[i]);
    let pinv = &v * &scaled;
    let x_duals: Vec<CVector> = (0..k).map(|j| CVector::from_mat_col(&pinv, j)).collect();
    let m_bound = x_duals.iter().map(|x| x.norm()).fold(0.0, f64::max);
    Ok(BiorthogonalSystem {
        indices: (0..k).collect(),
        x_stars: x_stars.to_vec(),
        x_duals,
        gram_cond: s[0] / sigma_min,
        m_bound,
    })
}

/// Duals for the given family indices, with the indices recorded.
pub fn dual_system_for(fam: &ResolventFamily, indices: &[usize]) -> Result<BiorthogonalSystem> {
    let chosen: Vec<CVector> = indices.iter().map(|&i| fam.x_stars[i].clone()).collect();
    let mut sys = dual_system(&chosen, fam.dim())?;
    sys.indices = indices.to_vec();
    Ok(sys)
}

/// Selection followed by duals.
pub fn build_biorthogonal(fam: &ResolventFamily, kappa_max: f64, gamma: f64) -> Result<BiorthogonalSystem> {
    let idx = select_subsequence(fam, kappa_max, gamma)?;
    dual_system_for(fam, &idx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityReport {
    /// Distance of each unit functional to the span of the others.
    pub distances: Vec<f64>,
    pub min_distance: f64,
}

/// `dist(x*_k, span of the others) = 1 / |x_k|` because the minimum-norm
/// dual is orthogonal to the other functionals; positive exactly when the
/// Gram matrix is nonsingular.
pub fn minimality(sys: &BiorthogonalSystem) -> MinimalityReport {
    let distances: Vec<f64> = sys.x_duals.iter().map(|x| 1.0 / x.norm()).collect();
    let min_distance = distances.iter().copied().fold(f64::INFINITY, f64::min);
    MinimalityReport {
        distances,
        min_distance,
    }
}
