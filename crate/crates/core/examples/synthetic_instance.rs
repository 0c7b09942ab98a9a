//! Generates a seeded synthetic instance, writes it as TOML, reads it back
//! and plans it.
//!
//!     cargo run --release --example synthetic_instance -- 42

use pevplan::benders::{run_prepared, BendersConfig};
use pevplan::io::{generate_synthetic, load_instance, SyntheticSizes};
use pevplan::model::PreparedModel;

fn main() -> pevplan::Result<()> {
    env_logger::init();
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let sizes = SyntheticSizes {
        transport_nodes: 7,
        buses: 6,
        paths: 4,
        ..SyntheticSizes::default()
    };
    let file = generate_synthetic(seed, sizes)?;

    let dir = std::env::temp_dir().join(format!("pevplan-synthetic-{seed}"));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("instance.toml");
    std::fs::write(&path, file.to_toml()?)?;
    println!("wrote {}", path.display());

    let inst = load_instance(&path)?;
    let prep = PreparedModel::new(&inst)?;
    println!(
        "{} transport nodes, {} buses, {} paths, {} slots, {} first-stage variables",
        inst.transport.nodes.len(),
        inst.grid.buses.len(),
        inst.paths.len(),
        inst.slots.len(),
        prep.layout.dim
    );

    let (x, state) = run_prepared(&inst, &prep, &BendersConfig::default())?;
    println!("{:?} after {} iterations, gap {:.2e}, cost ${:.0}", state.status, state.iteration, state.gap, state.ub);
    for (i, spots) in x.stations(&prep.layout) {
        println!("  station {} with {spots:.1} spots", inst.transport.nodes[i].id);
    }
    for (c, kva) in x.pv_plants(&prep.layout) {
        println!("  PV {:.0} kVA at {}", kva, inst.grid.buses[inst.pv.candidates[c].bus].id);
    }
    Ok(())
}
