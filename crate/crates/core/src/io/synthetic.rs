//! Seeded synthetic instances with a highway corridor and a radial feeder.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSizes {
    pub transport_nodes: usize,
    pub buses: usize,
    pub paths: usize,
    pub scenarios: usize,
    pub hours: usize,
    pub pv_candidates: usize,
}

impl Default for SyntheticSizes {
    fn default() -> Self {
        Self {
            transport_nodes: 5,
            buses: 4,
            paths: 3,
            scenarios: 2,
            hours: 3,
            pv_candidates: 2,
        }
    }
}

impl SyntheticSizes {
    fn validate(&self) -> Result<()> {
        if self.transport_nodes < 3 || self.buses < 2 || self.paths == 0 || self.scenarios == 0 || self.hours == 0 {
            return Err(Error::Input(format!("synthetic sizes too small: {self:?}")));
        }
        if self.pv_candidates >= self.buses {
            return Err(Error::Input("at most one PV candidate per non-root bus".into()));
        }
        Ok(())
    }
}

fn round(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

/// Daylight availability at the midpoint of block `h` of `hours`.
fn solar_shape(h: usize, hours: usize) -> f64 {
    let tod = (h as f64 + 0.5) * 24.0 / hours as f64;
    (std::f64::consts::PI * (tod - 6.0) / 12.0).sin().max(0.0)
}

/// Diurnal demand factor in [0.4, 1].
fn demand_shape(h: usize, hours: usize) -> f64 {
    let tod = (h as f64 + 0.5) * 24.0 / hours as f64;
    0.7 - 0.3 * (2.0 * std::f64::consts::PI * (tod - 4.0) / 24.0).cos()
}

/// Builds an instance from `seed`; identical inputs give identical output.
pub fn generate_synthetic(seed: u64, sizes: SyntheticSizes) -> Result<InstanceFile> {
    sizes.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sizes.transport_nodes;
    let node_id = |i: usize| format!("n{}", i + 1);
    let bus_id = |b: usize| format!("b{b}");

    // Corridor n1..nN; the two ends are towns without chargers.
    let spacing: Vec<f64> = (0..n - 1).map(|_| round(rng.gen_range(40.0..70.0), 1)).collect();
    let nodes: Vec<NodeEntry> = (0..n)
        .map(|i| {
            let candidate = i > 0 && i + 1 < n;
            NodeEntry {
                id: node_id(i),
                candidate,
                grid_bus: candidate.then(|| bus_id(1 + (i - 1) % (sizes.buses - 1))),
                line_length_km: if candidate { round(rng.gen_range(0.5..3.0), 2) } else { 0.0 },
                substation_kva: if candidate { 200.0 } else { 0.0 },
                spots_min: if candidate { 2.0 } else { 0.0 },
                spots_max: if candidate { 40.0 } else { 0.0 },
            }
        })
        .collect();
    let edges: Vec<EdgeEntry> = (0..n - 1)
        .map(|i| EdgeEntry {
            from: node_id(i),
            to: node_id(i + 1),
            length_km: spacing[i],
        })
        .collect();

    // Paths: the full corridor in both directions, then random segments.
    let mut paths = Vec::new();
    for q in 0..sizes.paths {
        let (lo, hi) = match q {
            0 | 1 => (0, n - 1),
            _ => {
                let lo = rng.gen_range(0..n - 2);
                (lo, rng.gen_range(lo + 2..n))
            }
        };
        let mut ids: Vec<String> = (lo..=hi).map(node_id).collect();
        if q % 2 == 1 {
            ids.reverse();
        }
        paths.push(PathEntry {
            id: format!("p{}", q + 1),
            nodes: ids,
            d_origin_km: round(rng.gen_range(40.0..100.0), 1),
            d_dest_km: round(rng.gen_range(40.0..100.0), 1),
        });
    }
    let pev_classes = vec![
        ClassEntry {
            id: "short".into(),
            range_km: 200.0,
            charge_hours: 0.7,
            share: 0.6,
        },
        ClassEntry {
            id: "long".into(),
            range_km: 300.0,
            charge_hours: 1.05,
            share: 0.4,
        },
    ];

    // Radial feeder: each bus hangs off a random earlier bus.
    let base_kv = 12.66;
    let buses: Vec<BusEntry> = (0..sizes.buses)
        .map(|b| {
            let (lo, hi) = if b == 0 { (0.95, 1.05) } else { (0.9, 1.1) };
            BusEntry {
                id: bus_id(b),
                vmin_kv: round(lo * base_kv, 4),
                vmax_kv: round(hi * base_kv, 4),
            }
        })
        .collect();
    let branches: Vec<BranchEntry> = (1..sizes.buses)
        .map(|b| {
            let parent = rng.gen_range(0..b);
            let km = rng.gen_range(0.5..2.0);
            BranchEntry {
                from: bus_id(b),
                to: bus_id(parent),
                r_ohm: round(0.3 * km, 4),
                x_ohm: round(0.35 * km, 4),
                imax_ka: if parent == 0 { 0.4 } else { 0.25 },
            }
        })
        .collect();
    let mut pv_buses: Vec<usize> = (1..sizes.buses).collect();
    pv_buses.shuffle(&mut rng);
    pv_buses.truncate(sizes.pv_candidates);
    pv_buses.sort_unstable();
    let candidates = pv_buses
        .iter()
        .map(|&b| PvEntry {
            bus: bus_id(b),
            s_min_kva: 100.0,
            s_max_kva: Some(1500.0),
            fixed_cost: 20000.0,
            unit_cost_per_kva: 1200.0,
        })
        .collect();

    let scenarios: Vec<ScenarioEntry> = (0..sizes.scenarios)
        .map(|w| ScenarioEntry {
            id: format!("s{}", w + 1),
            probability: if w + 1 < sizes.scenarios {
                round(1.0 / sizes.scenarios as f64, 6)
            } else {
                round(1.0 - (sizes.scenarios - 1) as f64 * round(1.0 / sizes.scenarios as f64, 6), 6)
            },
            label: None,
            v0_pu: Some(1.03),
        })
        .collect();

    let peak_kw: Vec<f64> = (0..sizes.buses).map(|b| if b == 0 { 0.0 } else { round(rng.gen_range(300.0..900.0), 0) }).collect();
    let base_lambda: Vec<Vec<[f64; 2]>> = paths
        .iter()
        .map(|p| p.nodes.iter().map(|_| [rng.gen_range(1.0..3.0), rng.gen_range(0.5..2.0)]).collect())
        .collect();
    let mut bus_rows = Vec::new();
    let mut traffic_rows = Vec::new();
    for s in &scenarios {
        let load_f = rng.gen_range(0.8..1.0);
        let sun_f = rng.gen_range(0.6..1.0);
        let traffic_f = rng.gen_range(0.7..1.0);
        for h in 0..sizes.hours {
            for b in 1..sizes.buses {
                let p = round(peak_kw[b] * load_f * demand_shape(h, sizes.hours), 3);
                bus_rows.push(BusRow {
                    scenario: s.id.clone(),
                    hour: h,
                    bus: bus_id(b),
                    p_base_kw: p,
                    q_base_kvar: round(0.3 * p, 3),
                    pv_pu: if pv_buses.contains(&b) { round(sun_f * solar_shape(h, sizes.hours), 4) } else { 0.0 },
                });
            }
            // Proportional profiles keep each node's peak in one block.
            for (q, p) in paths.iter().enumerate() {
                for (j, nid) in p.nodes.iter().enumerate() {
                    let node = &nodes[nid[1..].parse::<usize>().unwrap() - 1];
                    if !node.candidate {
                        continue;
                    }
                    for (k, class) in pev_classes.iter().enumerate() {
                        traffic_rows.push(TrafficRow {
                            scenario: s.id.clone(),
                            hour: h,
                            path: p.id.clone(),
                            node: nid.clone(),
                            class: class.id.clone(),
                            lambda_per_h: round(base_lambda[q][j][k] * traffic_f * demand_shape(h, sizes.hours), 4),
                        });
                    }
                }
            }
        }
    }

    Ok(InstanceFile {
        format_version: FORMAT_VERSION,
        name: format!("synthetic-{seed}"),
        hours: Some(sizes.hours),
        seed: Some(seed),
        bus_table: None,
        traffic_table: None,
        sizing: SizingSection {
            alpha: Some(0.8),
            p_sp_kw: Some(44.0),
        },
        costs: CostsSection {
            dt_hours: Some(24.0 / sizes.hours as f64),
            ..CostsSection::default()
        },
        transport: TransportSection {
            nodes,
            edges,
            paths,
            pev_classes,
        },
        grid: GridSection {
            base_kv,
            base_mva: 1.0,
            root: bus_id(0),
            buses,
            branches,
        },
        pv: PvSection {
            max_count: sizes.pv_candidates as f64,
            max_total_kva: 2000.0,
            candidates,
        },
        scenarios,
        bus_rows,
        traffic_rows,
    })
}
