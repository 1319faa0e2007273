//! Orbit minimality, the iterated range chain, and invariant eigenvector spans.

use halfspace_lab::operator::OperatorRep;
use halfspace_lab::structure::{dense_range_chain, eigen_halfspace, eigenpairs, orbit_minimality, ORBIT_DELTA};
use halfspace_lab::{CVector, LabError};

fn main() -> halfspace_lab::Result<()> {
    let shift = OperatorRep::unweighted_forward_shift(64)?;
    let r = orbit_minimality(&shift, &CVector::unit(64, 0), 32, ORBIT_DELTA)?;
    println!("shift orbit minimal: {}", r.minimal);

    let diag = OperatorRep::diagonal_real(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])?;
    let r = orbit_minimality(&diag, &CVector::unit(6, 0), 3, ORBIT_DELTA)?;
    println!("diagonal orbit fails at {:?}", r.failing_index);

    let jordan = OperatorRep::jordan_block(5)?;
    let chain = dense_range_chain(&jordan, 10)?;
    println!(
        "jordan range codims {:?}, zero space: {}",
        chain.codims, chain.degenerate_zero_space
    );
    match dense_range_chain(&shift, 64) {
        Err(LabError::NoStabilization {
            truncation_artifact, ..
        }) => {
            println!("shift chain never settles; truncation artifact: {truncation_artifact}")
        }
        other => println!("shift chain: {:?}", other.map(|c| c.codims)),
    }

    let mut pairs = eigenpairs(&diag)?;
    pairs.sort_by(|a, b| a.0.re.total_cmp(&b.0.re));
    let (sel, rest) = pairs.split_at(3);
    let eh = eigen_halfspace(&diag, sel, rest)?;
    println!(
        "span of three eigenvectors: defect {}, cross pairing {:.1e}",
        eh.defect.defect, eh.max_cross_pairing
    );
    Ok(())
}
