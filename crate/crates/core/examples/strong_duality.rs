//! Dualizes each operation sub-problem of the desk instance at a planned
//! layout, solves primal and dual separately and compares the optima.
//!
//!     cargo run --release --example strong_duality

use pevplan::benders::{run_prepared, verify_strong_duality, BendersConfig};
use pevplan::conic::{dualize, solve, ConicProgram, LinExpr, DEFAULT_TOL};
use pevplan::io::desk_instance;
use pevplan::model::PreparedModel;

fn main() -> pevplan::Result<()> {
    // min y0 + y1 over the unit disc: both sides give -sqrt(2).
    let mut disc = ConicProgram::new(2);
    disc.objective = vec![1.0, 1.0];
    disc.push_soc(&[LinExpr::var(0, 1.0), LinExpr::var(1, 1.0)], &LinExpr::constant(1.0));
    let primal = solve(&disc, DEFAULT_TOL)?;
    let dual = dualize(&disc);
    let d = solve(&dual.program, DEFAULT_TOL)?;
    println!("disc: primal {:.9} dual {:.9}", primal.objective_value, dual.dual_value(d.objective_value));

    let inst = desk_instance()?;
    let prep = PreparedModel::new(&inst)?;
    let (x, _) = run_prepared(&inst, &prep, &BendersConfig::default())?;
    println!("\n{:<22} {:>16} {:>16} {:>10} {:>8} {:>6}", "slot", "primal", "dual", "gap", "slater", "exact");
    for r in verify_strong_duality(&inst, &prep, &x.values)? {
        println!(
            "{:<22} {:>16.4} {:>16.4} {:>10.2e} {:>8} {:>6}",
            r.label, r.primal, r.dual, r.relative_gap, r.slater.strictly_feasible, r.exact
        );
    }
    Ok(())
}
