//! Greedy selection of well-conditioned functionals and their duals.

use halfspace_lab::biorthogonal::{build_biorthogonal, minimality, GAMMA_GROWTH, KAPPA_MAX};
use halfspace_lab::c64;
use halfspace_lab::operator::OperatorRep;
use halfspace_lab::resolvent::{build_family, ApproachSchedule, EStarCandidate};

fn main() -> halfspace_lab::Result<()> {
    let d = 1024;
    let t = OperatorRep::unweighted_forward_shift(d)?;
    let e_star = EStarCandidate::Power(0.75).vector(d)?;
    let fam = build_family(&t, c64::new(1.0, 0.0), &ApproachSchedule::default(), &e_star, 8)?;
    let sys = build_biorthogonal(&fam, KAPPA_MAX, GAMMA_GROWTH)?;
    println!("selected {:?} of {}", sys.indices, fam.len());
    println!("condition {:.2}, M = {:.3}", sys.gram_cond, sys.m_bound);
    println!("pairing residual {:.1e}", sys.pairing_residual());
    println!("distances to the other functionals {:?}", minimality(&sys).distances);
    Ok(())
}
