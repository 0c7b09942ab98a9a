//! Plans the bundled desk instance with the decomposition and prints the
//! convergence history and the resulting layout.
//!
//!     cargo run --release --example plan_desk

use pevplan::benders::{run_prepared, BendersConfig};
use pevplan::io::{build_report, desk_instance};
use pevplan::model::PreparedModel;

fn main() -> pevplan::Result<()> {
    env_logger::init();
    let inst = desk_instance()?;
    let prep = PreparedModel::new(&inst)?;
    let (x, state) = run_prepared(&inst, &prep, &BendersConfig::default())?;

    println!("{:>4} {:>5} {:>14} {:>14} {:>10} {:>8}", "iter", "phase", "lb", "ub", "gap", "ms");
    for r in &state.history {
        println!("{:>4} {:>5} {:>14.2} {:>14.2} {:>10.2e} {:>8}", r.iteration, r.phase, r.lb, r.ub, r.gap, r.wall_ms);
    }
    println!("status {:?} after {} iterations", state.status, state.iteration);

    let report = build_report(&inst, &prep, &x, 1)?;
    println!("\nannual cost ${:.0} (investment ${:.0}, operation ${:.0})", report.total, report.investment(), report.operating);
    for s in &report.stations {
        println!("station at {}: {:.1} spots, substation {:.0} kVA", s.node, s.spots, s.substation_kva);
    }
    for p in &report.pv {
        println!("PV at {}: {:.0} kVA", p.bus, p.kva);
    }
    println!("unsatisfied charging {:.3}%, peak branch loading {:.1}%", report.unsatisfied_pct, report.max_loading_pct());
    Ok(())
}
