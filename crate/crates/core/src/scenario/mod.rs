//! Config-driven scenarios: TOML in, JSON verification report out.

mod config;
mod report;
mod runner;
mod zoo;

pub use config::{
    BridgeConfig, ContourConfig, EStarConfig, Pipeline, ScenarioConfig, ScheduleConfig, SelectionConfig,
    StructureConfig, Tolerances, MIN_DIM,
};
pub use report::{decimal, FlagSource, HypothesisFlag, ReportBuilder, VerificationReport};
pub use runner::run_scenario;
pub use zoo::{is_eigenvalue, on_spectrum_boundary, zoo, zoo_list, ZooEntry};

use crate::error::{LabError, Result};

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    (
        "shift_small_norm",
        include_str!("../../scenarios/shift_small_norm.toml"),
    ),
    (
        "shift_defect_one",
        include_str!("../../scenarios/shift_defect_one.toml"),
    ),
    ("identity_reject", include_str!("../../scenarios/identity_reject.toml")),
    ("jordan_bridge", include_str!("../../scenarios/jordan_bridge.toml")),
    (
        "shift_jordan_bridge",
        include_str!("../../scenarios/shift_jordan_bridge.toml"),
    ),
    ("cluster_riesz", include_str!("../../scenarios/cluster_riesz.toml")),
    ("shift_orbit", include_str!("../../scenarios/shift_orbit.toml")),
    ("diagonal_eigen", include_str!("../../scenarios/diagonal_eigen.toml")),
];

pub fn bundled(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| LabError::ConfigInvalid(format!("no bundled scenario named `{name}`")))?;
    ScenarioConfig::from_toml(text)
}
