//! Runs a shipped scenario and prints its JSON report.
//!
//! `cargo run --example scenario_report -- shift_defect_one`

use halfspace_lab::scenario::{bundled, run_scenario};

fn main() -> halfspace_lab::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "shift_small_norm".into());
    let report = run_scenario(&bundled(&name)?)?;
    println!("{}", report.to_json());
    Ok(())
}
