//! Solves a single operation sub-problem of the desk instance (one scenario
//! and time block) and prints the branch flows, bus voltages and how tight
//! the conic relaxation of the current equation is.
//!
//!     cargo run --example distflow_slot

use pevplan::conic::solve_robust;
use pevplan::grid::{exactness_residual, OperationLayout};
use pevplan::io::desk_instance;
use pevplan::model::{FirstStageDecision, PreparedModel};

fn main() -> pevplan::Result<()> {
    let inst = desk_instance()?;
    let prep = PreparedModel::new(&inst)?;
    // No stations and no PV: the feeder serves its base load only.
    let x = FirstStageDecision::zeros(&prep.layout);
    let slot = 2;
    let program = prep.templates[slot].instantiate(&x.values)?;
    let sol = solve_robust(&program)?;
    let ops = OperationLayout::new(&inst);
    let net = &inst.grid;
    let base = net.base_kva();

    println!("{}: {:?}, operating cost ${:.2}", prep.templates[slot].label, sol.status, sol.objective_value);
    println!("substation buys {:.1} kW", sol.y[ops.p_buy()] * base);
    let residual = exactness_residual(&sol.y, &inst, &prep.radial);
    for (b, br) in net.branches.iter().enumerate() {
        println!(
            "branch {}-{}: P {:>8.1} kW  Q {:>8.1} kvar  |I|^2 {:.5} pu  residual {:.1e}",
            net.buses[br.from].id,
            net.buses[br.to].id,
            sol.y[ops.p(b)] * base,
            sol.y[ops.q(b)] * base,
            sol.y[ops.l(b)],
            residual[b]
        );
    }
    for (m, bus) in net.buses.iter().enumerate() {
        println!("bus {}: {:.4} pu", bus.id, sol.y[ops.v(m)].sqrt());
    }
    Ok(())
}
