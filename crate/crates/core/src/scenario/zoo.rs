use faer::c64;
use serde::Serialize;

use crate::operator::{OperatorSpec, Scalar, WeightSpec};

/// A catalogue entry: a zoo operator with what is known about its spectrum
/// in infinite dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZooEntry {
    pub name: &'static str,
    pub spec: OperatorSpec,
    pub structure: &'static str,
    pub facts: &'static [&'static str],
}

pub fn zoo() -> Vec<ZooEntry> {
    vec![
        ZooEntry {
            name: "forward_shift_unweighted",
            spec: OperatorSpec::ForwardShift {
                weights: WeightSpec::Constant(1.0),
            },
            structure: "forward_shift",
            facts: &[
                "no eigenvalues; spectrum = closed unit disk",
                "adjoint is the backward shift",
            ],
        },
        ZooEntry {
            name: "forward_shift_power_weights",
            spec: OperatorSpec::ForwardShift {
                weights: WeightSpec::Power { power: 1.0 },
            },
            structure: "forward_shift",
            facts: &["no eigenvalues; quasinilpotent, spectrum = {0}", "compact"],
        },
        ZooEntry {
            name: "backward_shift_unweighted",
            spec: OperatorSpec::BackwardShift {
                weights: WeightSpec::Constant(1.0),
            },
            structure: "backward_shift",
            facts: &["every |lambda| < 1 is an eigenvalue; spectrum = closed unit disk"],
        },
        ZooEntry {
            name: "identity",
            spec: OperatorSpec::Identity,
            structure: "diagonal",
            facts: &["spectrum = point spectrum = {1}"],
        },
        ZooEntry {
            name: "zero",
            spec: OperatorSpec::Zero,
            structure: "diagonal",
            facts: &["spectrum = point spectrum = {0}", "every subspace is invariant"],
        },
        ZooEntry {
            name: "diagonal",
            spec: OperatorSpec::Diagonal {
                entries: vec![Scalar::Real(1.0), Scalar::Real(2.0), Scalar::Real(3.0)],
            },
            structure: "diagonal",
            facts: &[
                "spectrum = point spectrum = the entries",
                "coordinate spans are invariant",
            ],
        },
        ZooEntry {
            name: "jordan_block",
            spec: OperatorSpec::JordanBlock,
            structure: "nilpotent",
            facts: &["nilpotent; n=m=1"],
        },
        ZooEntry {
            name: "shift_jordan_sum",
            spec: OperatorSpec::ShiftJordanSum,
            structure: "nilpotent",
            facts: &[
                "nilpotent at every truncation; n=m=2 square",
                "without the shift's boundary row: n=2, m=1",
            ],
        },
        ZooEntry {
            name: "cluster_pair",
            spec: OperatorSpec::ClusterPair {
                centers: [Scalar::Real(0.0), Scalar::Real(5.0)],
                spread: 0.5,
                coupling: 1.0,
                seed: 0,
            },
            structure: "dense",
            facts: &["eigenvalues in two disjoint clusters", "upper triangular, non-normal"],
        },
        ZooEntry {
            name: "random_gaussian",
            spec: OperatorSpec::RandomGaussian { seed: 0, scale: 1.0 },
            structure: "dense",
            facts: &["spectrum fills the disk of radius scale as D grows"],
        },
    ]
}

/// Entries whose name contains `filter`; an empty filter lists everything.
pub fn zoo_list(filter: &str) -> Vec<ZooEntry> {
    zoo().into_iter().filter(|e| e.name.contains(filter)).collect()
}

fn unit_weights(w: &WeightSpec) -> bool {
    matches!(w, WeightSpec::Constant(x) if *x == 1.0)
}

fn positive_weights(w: &WeightSpec) -> bool {
    match w {
        WeightSpec::Constant(x) => *x > 0.0,
        WeightSpec::Explicit(v) => v.iter().all(|&x| x > 0.0),
        WeightSpec::Power { .. } => true,
    }
}

/// Whether `lambda` is an eigenvalue of the infinite operator, when known.
pub fn is_eigenvalue(spec: &OperatorSpec, lambda: c64) -> Option<bool> {
    match spec {
        OperatorSpec::ForwardShift { weights } if positive_weights(weights) => Some(false),
        OperatorSpec::BackwardShift { weights } if unit_weights(weights) => Some(lambda.norm() < 1.0),
        OperatorSpec::Identity => Some(lambda == c64::new(1.0, 0.0)),
        OperatorSpec::Zero | OperatorSpec::JordanBlock | OperatorSpec::ShiftJordanSum => {
            Some(lambda == c64::new(0.0, 0.0))
        }
        OperatorSpec::Diagonal { entries } => Some(entries.iter().any(|e| e.value() == lambda)),
        _ => None,
    }
}

/// Whether `lambda` lies on the boundary of the spectrum, when known.
pub fn on_spectrum_boundary(spec: &OperatorSpec, lambda: c64) -> Option<bool> {
    match spec {
        OperatorSpec::ForwardShift { weights } | OperatorSpec::BackwardShift { weights } if unit_weights(weights) => {
            Some((lambda.norm() - 1.0).abs() <= 1e-15)
        }
        OperatorSpec::ForwardShift {
            weights: WeightSpec::Power { power },
        } if *power > 0.0 => Some(lambda == c64::new(0.0, 0.0)),
        OperatorSpec::Identity => Some(lambda == c64::new(1.0, 0.0)),
        OperatorSpec::Zero | OperatorSpec::JordanBlock | OperatorSpec::ShiftJordanSum => {
            Some(lambda == c64::new(0.0, 0.0))
        }
        OperatorSpec::Diagonal { entries } => Some(entries.iter().any(|e| e.value() == lambda)),
        _ => None,
    }
}
