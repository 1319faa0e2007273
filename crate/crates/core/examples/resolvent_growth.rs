//! Resolvent functionals of the shift approaching the boundary point 1.

use halfspace_lab::c64;
use halfspace_lab::operator::OperatorRep;
use halfspace_lab::resolvent::{
    build_family, growth_diagnostic, wstar_decay_diagnostic, ApproachSchedule, EStarCandidate, GROWTH_FACTOR,
};

fn main() -> halfspace_lab::Result<()> {
    let d = 1024;
    let t = OperatorRep::unweighted_forward_shift(d)?;
    let e_star = EStarCandidate::Power(0.75).vector(d)?;
    let fam = build_family(&t, c64::new(1.0, 0.0), &ApproachSchedule::default(), &e_star, 6)?;
    for (n, (l, h)) in fam.lambdas.iter().zip(&fam.norms).enumerate() {
        println!(
            "n={} lambda={:.6} |h*|={h:.6} residual={:.1e}",
            n + 1,
            l.re,
            fam.inveq_residuals[n]
        );
    }
    let g = growth_diagnostic(&fam, GROWTH_FACTOR)?;
    println!("growing={} ratio={:.2} log-slope={:.5}", g.growing, g.ratio, g.rate);
    let w = wstar_decay_diagnostic(&fam, 16);
    println!("first-coordinate maxima {:?}", w.coordinate_max);
    Ok(())
}
