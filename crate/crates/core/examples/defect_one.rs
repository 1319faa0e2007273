//! A half-space with defect one for the shift, and the rank-one operator
//! that makes it invariant.

use halfspace_lab::biorthogonal::{build_biorthogonal, GAMMA_GROWTH, KAPPA_MAX};
use halfspace_lab::c64;
use halfspace_lab::halfspace::preannihilator;
use halfspace_lab::operator::OperatorRep;
use halfspace_lab::perturbation::{defect_one_construction, DefectOneOutcome};
use halfspace_lab::resolvent::{build_family, ApproachSchedule, EStarCandidate};

fn main() -> halfspace_lab::Result<()> {
    let d = 512;
    let t = OperatorRep::unweighted_forward_shift(d)?;
    let e_star = EStarCandidate::Power(0.75).vector(d)?;
    let fam = build_family(&t, c64::new(1.0, 0.0), &ApproachSchedule::default(), &e_star, 6)?;
    let sys = build_biorthogonal(&fam, KAPPA_MAX, GAMMA_GROWTH)?;
    let sub = fam.subfamily(&sys.indices);
    let z = preannihilator(&sub.x_stars, d)?;
    println!("Z has dimension {} and codimension {}", z.dim, z.codim_in_truncation);
    match defect_one_construction(&t, &sub, &z)? {
        DefectOneOutcome::AlreadyInvariant {
            invariance_residual, ..
        } => {
            println!("Z already invariant (residual {invariance_residual:.1e})")
        }
        DefectOneOutcome::Perturbed(data) => {
            println!("defect {} with gap {:.1e}", data.defect.defect, data.defect.gap());
            println!("|F| = {:.4}", data.perturbation.norm);
            println!("four-term residual {:.1e}", data.four_term_residual);
            println!("invariance residual {:.1e}", data.invariance_residual);
        }
    }
    Ok(())
}
