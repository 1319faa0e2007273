use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::biorthogonal::{GAMMA_GROWTH, KAPPA_MAX};
use crate::bridge::BridgeOptions;
use crate::error::{LabError, Result};
use crate::operator::{OperatorSpec, Scalar};
use crate::resolvent::{ApproachSchedule, EStarCandidate};
use crate::structure::{DEFAULT_NODES, ORBIT_DELTA};

pub const MIN_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Annihilator half-space of a resolvent subfamily, repaired by `-alpha ⊗ Tz0`.
    DefectOne,
    /// Rank-one `e* ⊗ f` below the budget.
    SmallNorm,
    /// Kernel-to-corange bridge for quasinilpotent operators.
    Bridge,
    /// Orbits, the range chain, eigenvector spans and Riesz projections.
    Structure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    /// Family length `N`.
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_q() -> f64 {
    ApproachSchedule::default().q
}
fn default_r() -> f64 {
    ApproachSchedule::default().r
}
fn default_count() -> usize {
    6
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            q: default_q(),
            r: default_r(),
            count: default_count(),
        }
    }
}

/// Either a candidate list searched for resolvent growth or one explicit vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EStarConfig {
    pub candidates: Option<Vec<EStarCandidate>>,
    pub explicit: Option<Vec<f64>>,
}

/// Every residual tolerance a report can be judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub inveq: f64,
    pub biorthogonality: f64,
    pub unit_pairing: f64,
    pub invariance: f64,
    pub four_term: f64,
    pub precondition: f64,
    pub riesz: f64,
    pub eigen_invariance: f64,
    pub orbit_delta: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            inveq: 1e-8,
            biorthogonality: 1e-8,
            unit_pairing: 1e-8,
            invariance: 1e-8,
            four_term: 1e-8,
            precondition: 1e-8,
            riesz: 1e-8,
            eigen_invariance: 1e-8,
            orbit_delta: ORBIT_DELTA,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 9] {
        [
            ("inveq", self.inveq),
            ("biorthogonality", self.biorthogonality),
            ("unit_pairing", self.unit_pairing),
            ("invariance", self.invariance),
            ("four_term", self.four_term),
            ("precondition", self.precondition),
            ("riesz", self.riesz),
            ("eigen_invariance", self.eigen_invariance),
            ("orbit_delta", self.orbit_delta),
        ]
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "inveq" => &mut self.inveq,
            "biorthogonality" => &mut self.biorthogonality,
            "unit_pairing" => &mut self.unit_pairing,
            "invariance" => &mut self.invariance,
            "four_term" => &mut self.four_term,
            "precondition" => &mut self.precondition,
            "riesz" => &mut self.riesz,
            "eigen_invariance" => &mut self.eigen_invariance,
            "orbit_delta" => &mut self.orbit_delta,
            _ => {
                let known: Vec<&str> = self.entries().iter().map(|(k, _)| *k).collect();
                return Err(LabError::ConfigInvalid(format!(
                    "tolerances.{key}: unknown key (expected one of {})",
                    known.join(", ")
                )));
            }
        };
        *slot = value;
        Ok(())
    }

    /// Parses `KEY=VAL`.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, val) = spec
            .split_once('=')
            .ok_or_else(|| LabError::ConfigInvalid(format!("tolerance override `{spec}` is not KEY=VAL")))?;
        let value: f64 = val
            .trim()
            .parse()
            .map_err(|_| LabError::ConfigInvalid(format!("tolerances.{}: `{val}` is not a number", key.trim())))?;
        self.set(key.trim(), value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub kappa_max: f64,
    pub gamma: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            kappa_max: KAPPA_MAX,
            gamma: GAMMA_GROWTH,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    /// Delete the rows the truncation cut off before the kernel/range analysis.
    pub row_section: bool,
    #[serde(flatten)]
    pub options: BridgeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourConfig {
    pub center: Scalar,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureConfig {
    /// One-based coordinate of the orbit start vector.
    pub orbit_start: usize,
    /// `K`; defaults to `D / 2`.
    pub orbit_horizon: Option<usize>,
    /// Defaults to `D`.
    pub chain_max_steps: Option<usize>,
    pub contours: Vec<ContourConfig>,
    /// The contours enclose the whole spectrum, so the projections must sum to `I`.
    pub covering: bool,
    pub nodes: usize,
    /// Positions, in eigenvalue order sorted by real then imaginary part,
    /// of the eigenvectors spanning the invariant subspace. Empty skips the check.
    pub eigen_selected: Vec<usize>,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            orbit_start: 1,
            orbit_horizon: None,
            chain_max_steps: None,
            contours: Vec::new(),
            covering: false,
            nodes: DEFAULT_NODES,
            eigen_selected: Vec::new(),
        }
    }
}

fn default_lambda() -> Scalar {
    Scalar::Real(1.0)
}
fn default_epsilon() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub pipeline: Pipeline,
    pub dim: usize,
    pub operator: OperatorSpec,
    /// Boundary point of the spectrum.
    #[serde(default = "default_lambda")]
    pub lambda: Scalar,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Seeds every random candidate and random operator.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub estar: EStarConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub bridge: BridgeConfig,
    #[serde(default)]
    pub structure: StructureConfig,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> LabError {
    LabError::ConfigInvalid(format!("{field}: {msg}"))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| LabError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < MIN_DIM {
            return Err(invalid("dim", format!("must be at least {MIN_DIM}, got {}", self.dim)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(
                "epsilon",
                format!("must be positive and finite, got {}", self.epsilon),
            ));
        }
        let l = self.lambda.value();
        if !(l.re.is_finite() && l.im.is_finite()) {
            return Err(invalid("lambda", "must be finite"));
        }
        for (k, v) in self.tolerances.entries() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(
                    &format!("tolerances.{k}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        let s = &self.schedule;
        ApproachSchedule::new(s.q, s.r).map_err(|e| invalid("schedule", e))?;
        if s.count < 2 {
            return Err(invalid(
                "schedule.count",
                format!("must be at least 2, got {}", s.count),
            ));
        }
        if s.count > self.dim / 8 {
            return Err(invalid(
                "schedule.count",
                format!("must be at most D/8 = {}, got {}", self.dim / 8, s.count),
            ));
        }
        if self.estar.candidates.is_some() && self.estar.explicit.is_some() {
            return Err(invalid("estar", "give either candidates or explicit, not both"));
        }
        if let Some(c) = &self.estar.candidates {
            if c.is_empty() {
                return Err(invalid("estar.candidates", "must not be empty"));
            }
        }
        if let Some(x) = &self.estar.explicit {
            if x.len() != self.dim {
                return Err(invalid(
                    "estar.explicit",
                    format!("has length {}, expected {}", x.len(), self.dim),
                ));
            }
        }
        let sel = &self.selection;
        if !(sel.kappa_max >= 1.0) {
            return Err(invalid(
                "selection.kappa_max",
                format!("must be at least 1, got {}", sel.kappa_max),
            ));
        }
        if !(sel.gamma > 0.0) {
            return Err(invalid(
                "selection.gamma",
                format!("must be positive, got {}", sel.gamma),
            ));
        }
        let st = &self.structure;
        if st.orbit_start == 0 || st.orbit_start > self.dim {
            return Err(invalid(
                "structure.orbit_start",
                format!("must lie in 1..={}", self.dim),
            ));
        }
        if st.orbit_horizon.is_some_and(|k| k > self.dim) {
            return Err(invalid(
                "structure.orbit_horizon",
                format!("must be at most D = {}", self.dim),
            ));
        }
        if st.nodes == 0 {
            return Err(invalid("structure.nodes", "must be positive"));
        }
        if st.contours.iter().any(|c| !(c.radius > 0.0)) {
            return Err(invalid("structure.contours", "every radius must be positive"));
        }
        if st.eigen_selected.iter().any(|&i| i >= self.dim) {
            return Err(invalid(
                "structure.eigen_selected",
                format!("positions must be below D = {}", self.dim),
            ));
        }
        if !(self.bridge.options.tol_rank > 0.0) {
            return Err(invalid("bridge.tol_rank", "must be positive"));
        }
        Ok(())
    }

    /// Replaces the seed of every random ingredient.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = Some(seed);
        match &mut self.operator {
            OperatorSpec::RandomGaussian { seed: s, .. } | OperatorSpec::ClusterPair { seed: s, .. } => *s = seed,
            _ => {}
        }
        if let Some(c) = &mut self.estar.candidates {
            for cand in c.iter_mut() {
                if let EStarCandidate::Gaussian(s) = cand {
                    *s = seed;
                }
            }
        }
    }

    /// The `e*` candidates in search order.
    pub fn candidates(&self) -> Vec<EStarCandidate> {
        if let Some(x) = &self.estar.explicit {
            return vec![EStarCandidate::Explicit(x.clone())];
        }
        self.estar
            .candidates
            .clone()
            .unwrap_or_else(|| EStarCandidate::default_set(self.seed.unwrap_or(0)))
    }

    pub fn schedule(&self) -> ApproachSchedule {
        ApproachSchedule {
            q: self.schedule.q,
            r: self.schedule.r,
        }
    }
}
