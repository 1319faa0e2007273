//! A rank-one perturbation of norm below epsilon that leaves a half-space
//! of the shift invariant.

use halfspace_lab::biorthogonal::{build_biorthogonal, GAMMA_GROWTH, KAPPA_MAX};
use halfspace_lab::c64;
use halfspace_lab::operator::OperatorRep;
use halfspace_lab::perturbation::small_norm_rank_one;
use halfspace_lab::resolvent::{build_family, ApproachSchedule, EStarCandidate};

fn main() -> halfspace_lab::Result<()> {
    let d = 1024;
    let eps = 0.1;
    let t = OperatorRep::unweighted_forward_shift(d)?;
    let e_star = EStarCandidate::Flat.vector(d)?;
    let fam = build_family(&t, c64::new(1.0, 0.0), &ApproachSchedule::default(), &e_star, 6)?;
    let sys = build_biorthogonal(&fam, KAPPA_MAX, GAMMA_GROWTH)?;
    let out = small_norm_rank_one(&t, &fam, &sys, eps)?;
    println!("kept {:?}", out.indices);
    println!(
        "|F| = {:.5} <= {:.5} <= {:.5} < {eps}",
        out.perturbation.norm, out.dual_sum_bound, out.budget_bound
    );
    println!("h*_n(f) = 1 up to {:.1e}", out.unit_pairing_residual);
    println!("invariance residual {:.1e}", out.invariance_residual);
    Ok(())
}
