//! The operator catalogue, and structured solves checked against dense LU.

use halfspace_lab::operator::{make_operator, resolvent_solve_detailed, SolveMethod};
use halfspace_lab::scenario::zoo;
use halfspace_lab::{c64, CVector};

fn main() -> halfspace_lab::Result<()> {
    let d = 32;
    let b = CVector::from_real_fn(d, |k| 1.0 / k as f64);
    let lambda = c64::new(2.5, 0.5);
    for entry in zoo() {
        let t = match make_operator(&entry.spec, d) {
            Ok(t) => t,
            Err(e) => {
                println!("{:<28} skipped at D = {d}: {e}", entry.name);
                continue;
            }
        };
        let fast = resolvent_solve_detailed(&t, lambda, &b, SolveMethod::Auto)?;
        let dense = resolvent_solve_detailed(&t, lambda, &b, SolveMethod::Dense)?;
        let gap = (&fast.h - &dense.h).norm() / dense.h.norm();
        println!("{:<28} {:<15} solve gap {gap:.1e}", entry.name, t.structure().name());
        for fact in entry.facts {
            println!("    {fact}");
        }
    }
    Ok(())
}
