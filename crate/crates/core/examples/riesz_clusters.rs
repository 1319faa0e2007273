//! Riesz projections separating two eigenvalue clusters.

use halfspace_lab::c64;
use halfspace_lab::operator::{make_operator, OperatorSpec, Scalar};
use halfspace_lab::structure::{partition, riesz_projection};

fn main() -> halfspace_lab::Result<()> {
    let spec = OperatorSpec::ClusterPair {
        centers: [Scalar::Real(0.0), Scalar::Real(5.0)],
        spread: 0.5,
        coupling: 1.0,
        seed: 7,
    };
    let t = make_operator(&spec, 32)?;
    let mut ps = vec![
        riesz_projection(&t, c64::new(0.0, 0.0), 2.0, 64)?,
        riesz_projection(&t, c64::new(5.0, 0.0), 2.0, 64)?,
    ];
    let sum = partition(&mut ps)?;
    for p in &ps {
        println!(
            "center {}: {} nodes, |P^2 - P| = {:.1e}, |PT - TP| = {:.1e}",
            p.center, p.nodes, p.residuals.idempotency, p.residuals.commutation
        );
    }
    println!("|P0 + P5 - I| = {sum:.1e}");
    Ok(())
}
