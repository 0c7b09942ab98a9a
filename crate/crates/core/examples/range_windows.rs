//! Enumerates the range windows of a six-node corridor: every window must
//! contain at least one charging stop for the trip to be feasible.
//!
//!     cargo run --example range_windows -- 100

use pevplan::transport::{enumerate_subpaths, PathSpec, PevClass, TransportEdge, TransportNetwork, TransportNode};

fn main() -> pevplan::Result<()> {
    let range: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100.0);
    let nodes = (1..=6)
        .map(|i| TransportNode {
            id: i.to_string(),
            candidate: true,
            grid_bus: None,
            line_length_km: 0.0,
            substation_kva: 0.0,
            spots_min: 0.0,
            spots_max: 50.0,
        })
        .collect();
    let edges = (0..5).map(|i| TransportEdge { from: i, to: i + 1, length_km: 25.0 }).collect();
    let net = TransportNetwork { nodes, edges };
    // 50 km from the origin to node 1 and from node 6 to the destination.
    let path = PathSpec::along_edges("corridor", (0..6).collect(), &net, 50.0, 50.0)?;
    let class = PevClass { id: "k".into(), range_km: range, charge_hours: 1.0, share: 1.0 };

    println!("trip of {} km, range {range} km", path.length_km());
    match enumerate_subpaths(&net, &path, 0, &class, 0) {
        Ok(windows) if windows.is_empty() => println!("no stop needed"),
        Ok(windows) => {
            for w in windows {
                let ids: Vec<&str> = w.nodes.iter().map(|&n| net.nodes[n].id.as_str()).collect();
                println!("charge at one of {{{}}}", ids.join(", "));
            }
        }
        Err(e) => println!("{e}"),
    }
    Ok(())
}
