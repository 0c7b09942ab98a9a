//! Solves the desk instance twice, once by decomposition and once as a
//! single mixed-binary conic program, and compares the two plans.
//!
//!     cargo run --release --example compare_monolithic

use std::time::Instant;

use pevplan::benders::{run_prepared, solve_monolithic, BendersConfig};
use pevplan::io::{build_report, desk_instance};
use pevplan::model::PreparedModel;

fn main() -> pevplan::Result<()> {
    let inst = desk_instance()?;
    let prep = PreparedModel::new(&inst)?;

    let t = Instant::now();
    let (xb, state) = run_prepared(&inst, &prep, &BendersConfig::default())?;
    let tb = t.elapsed();
    let t = Instant::now();
    let (xm, mib) = solve_monolithic(&inst, &prep, 1e-4)?;
    let tm = t.elapsed();

    let rb = build_report(&inst, &prep, &xb, 1)?;
    let rm = build_report(&inst, &prep, &xm, 1)?;
    println!("decomposition: ${:.0} in {} iterations, {:.2?}", rb.total, state.iteration, tb);
    println!("monolithic:    ${:.0} in {} nodes, {:.2?} (bound ${:.0})", rm.total, mib.nodes, tm, mib.bound);
    println!("mib status {:?} objective {:.0} failed nodes {}", mib.status, mib.objective, mib.failed_nodes);
    println!("relative difference {:.3e}", (rb.total - rm.total).abs() / rm.total);
    for (name, r) in [("decomposition", &rb), ("monolithic", &rm)] {
        let stations: Vec<String> = r.stations.iter().map(|s| format!("{}:{:.1}", s.node, s.spots)).collect();
        let pv: Vec<String> = r.pv.iter().map(|p| format!("{}:{:.0}kVA", p.bus, p.kva)).collect();
        println!("{name:>14}: stations [{}] pv [{}]", stations.join(" "), pv.join(" "));
    }
    Ok(())
}
