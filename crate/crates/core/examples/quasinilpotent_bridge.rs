//! Bridging kernel to corange for nilpotent truncations, in both branches.

use halfspace_lab::bridge::{assemble_small_norm, BridgeOptions};
use halfspace_lab::operator::{make_operator, OperatorRep, OperatorSpec};
use halfspace_lab::LabError;

fn main() -> halfspace_lab::Result<()> {
    let eps = 0.2;
    let jordan = OperatorRep::jordan_block(16)?;
    match assemble_small_norm(&jordan, eps, &BridgeOptions::default()) {
        Err(LabError::BranchUnsupported { reason, partial }) => {
            let c = &partial.certificate;
            println!("jordan: {reason}");
            println!(
                "  alpha = {:.4}, sigma_min(T + alpha G) = {:.4}",
                c.alpha,
                c.injectivity_sigma_min.unwrap_or(0.0)
            );
        }
        other => println!("jordan: unexpected {other:?}"),
    }

    let d = 16;
    let spec = OperatorSpec::ShiftJordanSum;
    let t = make_operator(&spec, d)?;
    let opts = BridgeOptions {
        boundary_rows: spec.truncation_boundary_rows(d),
        ..BridgeOptions::default()
    };
    let a = assemble_small_norm(&t, eps, &opts)?;
    let c = &a.certificate;
    println!("shift + jordan: n = {}, m = {}, branch {:?}", c.n, c.m, c.branch);
    println!(
        "  |alpha G| = {:.4}, |F0| = {:.4}, |F| = {:.4} < {eps}",
        c.alpha_g_norm,
        c.f0_norm.unwrap_or(0.0),
        c.total_norm
    );
    println!(
        "  rank {} <= {}",
        c.numerical_rank.unwrap_or(c.rank_bound),
        c.n.min(c.m) + 1
    );
    Ok(())
}
