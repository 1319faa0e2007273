//! Resolvent families `h*_n = (lambda_n I - T^T)^{-1} e*` approaching a
//! boundary spectral point, their normalizations `x*_n`, and the identity
//!
//! ```text
//! T^T x*_n = lambda_n x*_n - e* / |h*_n|
//! ```
//!
//! which every family records as a residual per index.

use faer::c64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::operator::{OperatorRep, ShiftedSolver, SolveMethod, SINGULARITY_THRESHOLD};
use crate::vector::CVector;

/// Default tolerance on the per-index identity residual.
pub const TOL_INVEQ: f64 = 1e-8;

/// Default last/first norm ratio that counts as growth.
pub const GROWTH_FACTOR: f64 = 10.0;

/// Geometric approach `lambda_n = lambda (1 + q r^n)` for `n = 1..=N`.
///
/// At `lambda = 0` the relative form degenerates, so the points are
/// `lambda_n = q r^n` instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachSchedule {
    pub q: f64,
    pub r: f64,
}

impl Default for ApproachSchedule {
    fn default() -> Self {
        Self { q: 1.0, r: 0.25 }
    }
}

impl ApproachSchedule {
    pub fn new(q: f64, r: f64) -> Result<Self> {
        if !(q.is_finite() && q != 0.0) || !(r > 0.0 && r < 1.0) {
            return Err(LabError::InvalidSpec(format!(
                "schedule needs q != 0 and 0 < r < 1, got q = {q}, r = {r}"
            )));
        }
        Ok(Self { q, r })
    }

    pub fn point(&self, lambda: c64, n: usize) -> c64 {
        let offset = self.q * self.r.powi(n as i32);
        if lambda == c64::new(0.0, 0.0) {
            c64::new(offset, 0.0)
        } else {
            lambda * (1.0 + offset)
        }
    }

    /// The first `count` distinct points that differ from `lambda`.
    pub fn points(&self, lambda: c64, count: usize) -> Result<Vec<c64>> {
        let mut out: Vec<c64> = Vec::with_capacity(count);
        for n in 1..=count {
            let p = self.point(lambda, n);
            if p == lambda || !p.re.is_finite() || out.contains(&p) {
                break;
            }
            out.push(p);
        }
        if out.len() < count {
            return Err(LabError::ScheduleExhausted {
                found: out.len(),
                wanted: count,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventFamily {
    pub boundary_point: c64,
    pub lambdas: Vec<c64>,
    pub h_stars: Vec<CVector>,
    pub norms: Vec<f64>,
    pub x_stars: Vec<CVector>,
    pub e_star: CVector,
    pub inveq_residuals: Vec<f64>,
}

impl ResolventFamily {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.e_star.dim()
    }

    pub fn max_inveq_residual(&self) -> f64 {
        self.inveq_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn log_norms(&self) -> Vec<f64> {
        self.norms.iter().map(|n| n.ln()).collect()
    }

    /// Restricts the family to `indices`, in the given order.
    pub fn subfamily(&self, indices: &[usize]) -> ResolventFamily {
        ResolventFamily {
            boundary_point: self.boundary_point,
            lambdas: indices.iter().map(|&i| self.lambdas[i]).collect(),
            h_stars: indices.iter().map(|&i| self.h_stars[i].clone()).collect(),
            norms: indices.iter().map(|&i| self.norms[i]).collect(),
            x_stars: indices.iter().map(|&i| self.x_stars[i].clone()).collect(),
            e_star: self.e_star.clone(),
            inveq_residuals: indices.iter().map(|&i| self.inveq_residuals[i]).collect(),
        }
    }
}

/// `|T^T x* - lambda x* + e*/|h*||`
pub fn inveq_residual(t: &OperatorRep, lambda: c64, x_star: &CVector, e_star: &CVector, h_norm: f64) -> f64 {
    let mut r = t.apply_transpose(x_star);
    r.axpy(-lambda, x_star);
    r.axpy(c64::new(1.0 / h_norm, 0.0), e_star);
    r.norm()
}

/// Builds `h*_n` for `n = 1..=count` along `schedule`.
pub fn build_family(
    t: &OperatorRep,
    lambda: c64,
    schedule: &ApproachSchedule,
    e_star: &CVector,
    count: usize,
) -> Result<ResolventFamily> {
    if e_star.dim() != t.dim() {
        return Err(LabError::DimensionMismatch {
            expected: t.dim(),
            got: e_star.dim(),
        });
    }
    if e_star.norm() == 0.0 {
        return Err(LabError::InvalidSpec("e* must be nonzero".into()));
    }
    let lambdas = schedule.points(lambda, count)?;
    let ta = t.adjoint();
    let mut h_stars = Vec::with_capacity(count);
    let mut norms = Vec::with_capacity(count);
    let mut x_stars = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for &ln in &lambdas {
        let h = solve_checked(&ta, ln, e_star)?;
        let norm = h.norm();
        let x = h.scaled_real(1.0 / norm);
        residuals.push(inveq_residual(t, ln, &x, e_star, norm));
        h_stars.push(h);
        norms.push(norm);
        x_stars.push(x);
    }
    Ok(ResolventFamily {
        boundary_point: lambda,
        lambdas,
        h_stars,
        norms,
        x_stars,
        e_star: e_star.clone(),
        inveq_residuals: residuals,
    })
}

fn solve_checked(a: &OperatorRep, lambda: c64, b: &CVector) -> Result<CVector> {
    let sol = crate::operator::resolvent_solve_detailed(a, lambda, b, SolveMethod::Auto)?;
    if sol.h.norm() == 0.0 {
        return Err(LabError::SingularResolvent {
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            sigma_min: sol.sigma_min,
            threshold: SINGULARITY_THRESHOLD * sol.shifted_norm,
        });
    }
    Ok(sol.h)
}

/// Reuses one factorization per point when many right-hand sides share a schedule.
pub fn family_solvers(t: &OperatorRep, lambdas: &[c64]) -> Result<Vec<ShiftedSolver>> {
    let ta = t.adjoint();
    lambdas
        .iter()
        .map(|&l| ShiftedSolver::new(&ta, l, SolveMethod::Auto))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub growing: bool,
    /// Least-squares slope of `ln |h*_n|` against `n`.
    pub rate: f64,
    pub ratio: f64,
}

/// Growth means `|h*_n|` strictly increases over the final `ceil(N/2)`
/// entries and the last/first ratio reaches `factor`.
pub fn growth_diagnostic(fam: &ResolventFamily, factor: f64) -> Result<GrowthReport> {
    let n = fam.len();
    if n < 3 {
        return Err(LabError::FamilyTooShort { len: n, min: 3 });
    }
    let tail = n.div_ceil(2);
    let increasing = fam.norms[n - tail..].windows(2).all(|w| w[1] > w[0]);
    let ratio = fam.norms[n - 1] / fam.norms[0];
    let ys = fam.log_norms();
    let xm = (n as f64 + 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = (i + 1) as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    Ok(GrowthReport {
        growing: increasing && ratio >= factor,
        rate: sxy / sxx,
        ratio,
    })
}

/// A dictionary entry for the functional `e*`; every candidate is normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EStarCandidate {
    /// Coordinate functional at a one-based index.
    Unit(usize),
    /// `(1/k)_k`
    Harmonic,
    /// `(k^-p)_k`
    Power(f64),
    /// All coordinates equal.
    Flat,
    /// Seeded i.i.d. real Gaussian coordinates.
    Gaussian(u64),
    Explicit(Vec<f64>),
}

impl EStarCandidate {
    pub fn default_set(seed: u64) -> Vec<EStarCandidate> {
        vec![
            EStarCandidate::Unit(1),
            EStarCandidate::Harmonic,
            EStarCandidate::Power(0.75),
            EStarCandidate::Gaussian(seed),
        ]
    }

    pub fn label(&self) -> String {
        match self {
            EStarCandidate::Unit(k) => format!("unit({k})"),
            EStarCandidate::Harmonic => "harmonic".into(),
            EStarCandidate::Power(p) => format!("power({p})"),
            EStarCandidate::Flat => "flat".into(),
            EStarCandidate::Gaussian(s) => format!("gaussian({s})"),
            EStarCandidate::Explicit(_) => "explicit".into(),
        }
    }

    pub fn vector(&self, dim: usize) -> Result<CVector> {
        let v = match self {
            EStarCandidate::Unit(k) => {
                if *k == 0 || *k > dim {
                    return Err(LabError::InvalidSpec(format!("unit index {k} outside 1..={dim}")));
                }
                CVector::unit(dim, k - 1)
            }
            EStarCandidate::Harmonic => CVector::from_real_fn(dim, |k| 1.0 / k as f64),
            EStarCandidate::Power(p) => CVector::from_real_fn(dim, |k| (k as f64).powf(-p)),
            EStarCandidate::Flat => CVector::from_real_fn(dim, |_| 1.0),
            EStarCandidate::Gaussian(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                CVector::from_real_fn(dim, |_| StandardNormal.sample(&mut rng))
            }
            EStarCandidate::Explicit(xs) => {
                if xs.len() != dim {
                    return Err(LabError::DimensionMismatch {
                        expected: dim,
                        got: xs.len(),
                    });
                }
                CVector::new(xs.iter().map(|&x| c64::new(x, 0.0)).collect())?
            }
        };
        v.normalized()
            .ok_or_else(|| LabError::InvalidSpec(format!("candidate {} is zero", self.label())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EStarChoice {
    /// Position of the winner in the candidate list.
    pub index: usize,
    pub e_star: CVector,
    /// `|h*_N|` for every candidate, in list order.
    pub last_norms: Vec<f64>,
    pub growth: Vec<GrowthReport>,
}

/// Picks the growing candidate with the largest `|h*_N|`; ties go to the
/// earlier candidate.
pub fn select_estar(
    t: &OperatorRep,
    lambda: c64,
    schedule: &ApproachSchedule,
    count: usize,
    candidates: &[CVector],
    factor: f64,
) -> Result<EStarChoice> {
    if candidates.is_empty() {
        return Err(LabError::Empty("e* candidate list"));
    }
    let mut last_norms = Vec::with_capacity(candidates.len());
    let mut growth = Vec::with_capacity(candidates.len());
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let fam = build_family(t, lambda, schedule, c, count)?;
        let g = growth_diagnostic(&fam, factor)?;
        let last = *fam.norms.last().expect("nonempty family");
        if g.growing && best.is_none_or(|b| last > last_norms[b]) {
            best = Some(i);
        }
        last_norms.push(last);
        growth.push(g);
    }
    match best {
        Some(index) => Ok(EStarChoice {
            index,
            e_star: candidates[index].clone(),
            last_norms,
            growth,
        }),
        None => Err(LabError::AllCandidatesBounded {
            best_ratio: growth.iter().map(|g| g.ratio).fold(0.0, f64::max),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WStarDecayReport {
    /// Per family index, `max_{k < probe} |x*_n(e_k)|`.
    pub coordinate_max: Vec<f64>,
    /// Largest value over the final `ceil(N/2)` indices.
    pub tail_max: f64,
    /// The tail values shrink and end below half the first value.
    pub decaying: bool,
}

/// Coordinatewise-decay surrogate for weak-* nullness. A finite family
/// cannot be weak-* null, so this only reports a trend and never gates.
pub fn wstar_decay_diagnostic(fam: &ResolventFamily, probe_coords: usize) -> WStarDecayReport {
    let probe = probe_coords.min(fam.dim());
    let coordinate_max: Vec<f64> = fam
        .x_stars
        .iter()
        .map(|x| (0..probe).map(|k| x[k].norm()).fold(0.0, f64::max))
        .collect();
    let n = coordinate_max.len();
    if n == 0 {
        return WStarDecayReport {
            coordinate_max,
            tail_max: 0.0,
            decaying: false,
        };
    }
    let tail = &coordinate_max[n - n.div_ceil(2)..];
    let tail_max = tail.iter().copied().fold(0.0, f64::max);
    let decaying = n >= 2 && tail.windows(2).all(|w| w[1] <= w[0]) && coordinate_max[n - 1] < 0.5 * coordinate_max[0];
    WStarDecayReport {
        coordinate_max,
        tail_max,
        decaying,
    }
}
