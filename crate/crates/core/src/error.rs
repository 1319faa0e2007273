use thiserror::Error;

/// Errors raised by the constructions and their certificates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid operator spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("resolvent is singular at lambda = {lambda_re}{lambda_im:+}i (sigma_min ~ {sigma_min:e}, threshold {threshold:e})")]
    SingularResolvent {
        lambda_re: f64,
        lambda_im: f64,
        sigma_min: f64,
        threshold: f64,
    },

    #[error("approach schedule produced only {found} admissible points, {wanted} requested")]
    ScheduleExhausted { found: usize, wanted: usize },

    #[error("family too short for a growth fit: {len} entries, need at least {min}")]
    FamilyTooShort { len: usize, min: usize },

    #[error("no e* candidate shows resolvent growth (best last/first ratio {best_ratio:.3})")]
    AllCandidatesBounded { best_ratio: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("subsequence selection kept only {kept} functionals, need at least 2")]
    TooFewSelected { kept: usize },

    #[error("functionals are rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("defect precondition fails: residual {residual:e} exceeds {tolerance:e}")]
    DefectMismatch { residual: f64, tolerance: f64 },

    #[error(
        "epsilon budget infeasible: best achievable bound M*sum(1/|h_n|) = {achievable:e}, requested {requested:e}"
    )]
    BudgetInfeasible { achievable: f64, requested: f64 },

    #[error("bridge needs a nontrivial kernel and corange (n = {n}, m = {m})")]
    NoDefect { n: usize, m: usize },

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("branch unsupported: {reason}")]
    BranchUnsupported {
        reason: String,
        partial: Box<crate::bridge::BridgeAssembly>,
    },

    #[error("not an eigenpair: {0}")]
    NotEigenpair(String),

    #[error("no stabilization of the range chain within {steps} steps (codims {codims:?})")]
    NoStabilization {
        steps: usize,
        codims: Vec<usize>,
        truncation_artifact: bool,
    },

    #[error("contour passes within {distance:e} of the eigenvalue {eig_re}{eig_im:+}i")]
    ContourHitsSpectrum { eig_re: f64, eig_im: f64, distance: f64 },

    #[error("quadrature did not converge: last node doubling changed P by {change:e} at {nodes} nodes")]
    QuadratureNotConverged { nodes: usize, change: f64 },

    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
