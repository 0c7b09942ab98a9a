//! Instance files: a versioned TOML document with optional CSV tables for
//! the bulk per-(scenario, hour) data.
//!
//! Physical units throughout (kV, Ω, kA, kW, kVA, km, $); per-unit
//! conversion happens inside the grid model. See `docs/instance-format.md`.

mod report;
mod synthetic;

pub use report::{build_report, write_report_csv, CongestionRow, PlanReport, VoltageRow};
pub use synthetic::{generate_synthetic, SyntheticSizes};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Branch, Bus, DistributionNetwork, PvCandidate, PvConfig, ScenarioHour};
use crate::model::{CostConfig, PlanningInstance, PreparedModel, Scenario, StationCosts};
use crate::station::{StationSizingParams, TrafficSlice};
use crate::transport::{PathSpec, PevClass, TransportEdge, TransportNetwork, TransportNode};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_V0_PU: f64 = 1.03;
pub const DEFAULT_HOURS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours: Option<usize>,
    /// Seed that produced a synthetic instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// CSV with columns scenario, hour, bus, p_base_kw, q_base_kvar, pv_pu.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus_table: Option<String>,
    /// CSV with columns scenario, hour, path, node, class, lambda_per_h.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic_table: Option<String>,
    #[serde(default)]
    pub sizing: SizingSection,
    #[serde(default)]
    pub costs: CostsSection,
    pub transport: TransportSection,
    pub grid: GridSection,
    #[serde(default)]
    pub pv: PvSection,
    pub scenarios: Vec<ScenarioEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bus_rows: Vec<BusRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traffic_rows: Vec<TrafficRow>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sp_kw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station_fixed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station_per_spot: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_per_kva_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substation_per_kva: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_buy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_sell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unserved_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub life_cs_years: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub life_pv_years: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days_per_year: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub station_overrides: Vec<StationOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationOverride {
    pub node: String,
    pub fixed: f64,
    pub per_spot: f64,
    pub line_per_kva_km: f64,
    pub substation_per_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSection {
    pub nodes: Vec<NodeEntry>,
    pub edges: Vec<EdgeEntry>,
    pub paths: Vec<PathEntry>,
    pub pev_classes: Vec<ClassEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    #[serde(default)]
    pub candidate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_bus: Option<String>,
    #[serde(default)]
    pub line_length_km: f64,
    #[serde(default)]
    pub substation_kva: f64,
    #[serde(default)]
    pub spots_min: f64,
    #[serde(default)]
    pub spots_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub from: String,
    pub to: String,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEntry {
    pub id: String,
    pub nodes: Vec<String>,
    pub d_origin_km: f64,
    pub d_dest_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub id: String,
    pub range_km: f64,
    pub charge_hours: f64,
    #[serde(default = "one")]
    pub share: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub base_kv: f64,
    pub base_mva: f64,
    pub root: String,
    pub buses: Vec<BusEntry>,
    pub branches: Vec<BranchEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: String,
    pub vmin_kv: f64,
    pub vmax_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchEntry {
    pub from: String,
    pub to: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub imax_ka: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvSection {
    #[serde(default)]
    pub max_count: f64,
    #[serde(default)]
    pub max_total_kva: f64,
    #[serde(default)]
    pub candidates: Vec<PvEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvEntry {
    pub bus: String,
    #[serde(default)]
    pub s_min_kva: f64,
    /// Absent means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max_kva: Option<f64>,
    #[serde(default)]
    pub fixed_cost: f64,
    pub unit_cost_per_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub id: String,
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0_pu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRow {
    pub scenario: String,
    pub hour: usize,
    pub bus: String,
    pub p_base_kw: f64,
    pub q_base_kvar: f64,
    pub pv_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficRow {
    pub scenario: String,
    pub hour: usize,
    pub path: String,
    pub node: String,
    pub class: String,
    pub lambda_per_h: f64,
}

fn index_of<'a>(ids: impl Iterator<Item = &'a str>, id: &str, section: &str, what: &str) -> Result<usize> {
    let mut ids = ids;
    ids.position(|x| x == id)
        .ok_or_else(|| Error::validation(section, format!("unknown {what} '{id}'")))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: InstanceFile = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::validation(
                "format_version",
                format!("unsupported format_version {}, expected {FORMAT_VERSION}", file.format_version),
            ));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    /// Fields left at their defaults, for echoing back to the user.
    pub fn defaults_applied(&self) -> Vec<String> {
        let mut out = Vec::new();
        let c = &self.costs;
        let pairs: [(&str, bool); 13] = [
            ("costs.station_fixed", c.station_fixed.is_none()),
            ("costs.station_per_spot", c.station_per_spot.is_none()),
            ("costs.line_per_kva_km", c.line_per_kva_km.is_none()),
            ("costs.substation_per_kva", c.substation_per_kva.is_none()),
            ("costs.energy_buy", c.energy_buy.is_none()),
            ("costs.energy_sell", c.energy_sell.is_none()),
            ("costs.unserved_penalty", c.unserved_penalty.is_none()),
            ("costs.voltage_penalty", c.voltage_penalty.is_none()),
            ("costs.discount_rate", c.discount_rate.is_none()),
            ("costs.life_cs_years", c.life_cs_years.is_none()),
            ("costs.life_pv_years", c.life_pv_years.is_none()),
            ("costs.dt_hours", c.dt_hours.is_none()),
            ("costs.days_per_year", c.days_per_year.is_none()),
        ];
        out.extend(pairs.iter().filter(|(_, d)| *d).map(|(n, _)| n.to_string()));
        if self.sizing.alpha.is_none() {
            out.push("sizing.alpha".into());
        }
        if self.sizing.p_sp_kw.is_none() {
            out.push("sizing.p_sp_kw".into());
        }
        if self.hours.is_none() {
            out.push("hours".into());
        }
        for s in &self.scenarios {
            if s.v0_pu.is_none() {
                out.push(format!("scenarios.{}.v0_pu", s.id));
            }
        }
        out
    }

    /// Builds the in-memory instance; `base_dir` resolves table paths.
    pub fn to_instance(&self, base_dir: &Path) -> Result<PlanningInstance> {
        let grid = &self.grid;
        let bus_ids = || grid.buses.iter().map(|b| b.id.as_str());
        let buses = grid
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id.clone(),
                vmin_kv: b.vmin_kv,
                vmax_kv: b.vmax_kv,
            })
            .collect();
        let branches = grid
            .branches
            .iter()
            .map(|b| {
                Ok(Branch {
                    from: index_of(bus_ids(), &b.from, "grid.branches", "bus")?,
                    to: index_of(bus_ids(), &b.to, "grid.branches", "bus")?,
                    r_ohm: b.r_ohm,
                    x_ohm: b.x_ohm,
                    imax_ka: b.imax_ka,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let network = DistributionNetwork {
            buses,
            branches,
            root: index_of(bus_ids(), &grid.root, "grid", "root bus")?,
            base_kv: grid.base_kv,
            base_mva: grid.base_mva,
        };

        let t = &self.transport;
        let node_ids = || t.nodes.iter().map(|n| n.id.as_str());
        let nodes = t
            .nodes
            .iter()
            .map(|n| {
                Ok(TransportNode {
                    id: n.id.clone(),
                    candidate: n.candidate,
                    grid_bus: match &n.grid_bus {
                        Some(b) => Some(index_of(bus_ids(), b, "transport.nodes", "grid bus")?),
                        None => None,
                    },
                    line_length_km: n.line_length_km,
                    substation_kva: n.substation_kva,
                    spots_min: n.spots_min,
                    spots_max: n.spots_max,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = t
            .edges
            .iter()
            .map(|e| {
                Ok(TransportEdge {
                    from: index_of(node_ids(), &e.from, "transport.edges", "node")?,
                    to: index_of(node_ids(), &e.to, "transport.edges", "node")?,
                    length_km: e.length_km,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let transport = TransportNetwork { nodes, edges };
        let paths = t
            .paths
            .iter()
            .map(|p| {
                let idx = p
                    .nodes
                    .iter()
                    .map(|n| index_of(node_ids(), n, "transport.paths", "node"))
                    .collect::<Result<Vec<_>>>()?;
                PathSpec::along_edges(p.id.clone(), idx, &transport, p.d_origin_km, p.d_dest_km)
            })
            .collect::<Result<Vec<_>>>()?;
        let classes: Vec<PevClass> = t
            .pev_classes
            .iter()
            .map(|k| PevClass {
                id: k.id.clone(),
                range_km: k.range_km,
                charge_hours: k.charge_hours,
                share: k.share,
            })
            .collect();

        let pv = PvConfig {
            candidates: self
                .pv
                .candidates
                .iter()
                .map(|c| {
                    Ok(PvCandidate {
                        bus: index_of(bus_ids(), &c.bus, "pv.candidates", "bus")?,
                        s_min_kva: c.s_min_kva,
                        s_max_kva: c.s_max_kva.unwrap_or(f64::INFINITY),
                        fixed_cost: c.fixed_cost,
                        unit_cost_per_kva: c.unit_cost_per_kva,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            max_count: self.pv.max_count,
            max_total_kva: self.pv.max_total_kva,
        };

        let d = CostConfig::default();
        let c = &self.costs;
        let mut station_overrides = BTreeMap::new();
        for o in &c.station_overrides {
            station_overrides.insert(
                index_of(node_ids(), &o.node, "costs.station_overrides", "node")?,
                StationCosts {
                    fixed: o.fixed,
                    per_spot: o.per_spot,
                    line_per_kva_km: o.line_per_kva_km,
                    substation_per_kva: o.substation_per_kva,
                },
            );
        }
        let costs = CostConfig {
            station: StationCosts {
                fixed: c.station_fixed.unwrap_or(d.station.fixed),
                per_spot: c.station_per_spot.unwrap_or(d.station.per_spot),
                line_per_kva_km: c.line_per_kva_km.unwrap_or(d.station.line_per_kva_km),
                substation_per_kva: c.substation_per_kva.unwrap_or(d.station.substation_per_kva),
            },
            station_overrides,
            energy_buy: c.energy_buy.unwrap_or(d.energy_buy),
            energy_sell: c.energy_sell.unwrap_or(d.energy_sell),
            unserved_penalty: c.unserved_penalty.unwrap_or(d.unserved_penalty),
            voltage_penalty: c.voltage_penalty.unwrap_or(d.voltage_penalty),
            discount_rate: c.discount_rate.unwrap_or(d.discount_rate),
            life_cs_years: c.life_cs_years.unwrap_or(d.life_cs_years),
            life_pv_years: c.life_pv_years.unwrap_or(d.life_pv_years),
            dt_hours: c.dt_hours.unwrap_or(d.dt_hours),
            days_per_year: c.days_per_year.unwrap_or(d.days_per_year),
        };
        let ds = StationSizingParams::default();
        let sizing = StationSizingParams {
            alpha: self.sizing.alpha.unwrap_or(ds.alpha),
            p_sp_kw: self.sizing.p_sp_kw.unwrap_or(ds.p_sp_kw),
        };

        let hours = self.hours.unwrap_or(DEFAULT_HOURS);
        let scenarios: Vec<Scenario> = self
            .scenarios
            .iter()
            .map(|s| Scenario {
                id: s.id.clone(),
                probability: s.probability,
                v0: s.v0_pu.unwrap_or(DEFAULT_V0_PU).powi(2),
            })
            .collect();
        let nb = network.buses.len();
        let mut slots: Vec<ScenarioHour> = Vec::with_capacity(scenarios.len() * hours);
        for (w, s) in scenarios.iter().enumerate() {
            for h in 0..hours {
                slots.push(ScenarioHour {
                    scenario: w,
                    hour: h,
                    probability: s.probability,
                    v0: s.v0,
                    load_kw: vec![0.0; nb],
                    load_kvar: vec![0.0; nb],
                    pv_pu: vec![0.0; nb],
                    traffic: TrafficSlice::new(),
                });
            }
        }
        let scen_ids = || self.scenarios.iter().map(|s| s.id.as_str());
        let slot_of = |scenario: &str, hour: usize| -> Result<usize> {
            let w = index_of(scen_ids(), scenario, "scenarios", "scenario")?;
            if hour >= hours {
                return Err(Error::validation("scenarios", format!("hour {hour} outside 0..{hours}")));
            }
            Ok(w * hours + hour)
        };

        let mut bus_rows = self.bus_rows.clone();
        if let Some(f) = &self.bus_table {
            bus_rows.extend(read_csv::<BusRow>(&base_dir.join(f))?);
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &bus_rows {
            let s = slot_of(&r.scenario, r.hour)?;
            let b = index_of(bus_ids(), &r.bus, "bus_rows", "bus")?;
            if !seen.insert((s, b)) {
                return Err(Error::validation("bus_rows", format!("duplicate row for {} hour {} bus {}", r.scenario, r.hour, r.bus)));
            }
            slots[s].load_kw[b] = r.p_base_kw;
            slots[s].load_kvar[b] = r.q_base_kvar;
            slots[s].pv_pu[b] = r.pv_pu;
        }
        let mut traffic_rows = self.traffic_rows.clone();
        if let Some(f) = &self.traffic_table {
            traffic_rows.extend(read_csv::<TrafficRow>(&base_dir.join(f))?);
        }
        let path_ids = || t.paths.iter().map(|p| p.id.as_str());
        let class_ids = || t.pev_classes.iter().map(|k| k.id.as_str());
        for r in &traffic_rows {
            let s = slot_of(&r.scenario, r.hour)?;
            let key = (
                index_of(path_ids(), &r.path, "traffic_rows", "path")?,
                index_of(node_ids(), &r.node, "traffic_rows", "node")?,
                index_of(class_ids(), &r.class, "traffic_rows", "class")?,
            );
            if slots[s].traffic.insert(key, r.lambda_per_h).is_some() {
                return Err(Error::validation("traffic_rows", format!("duplicate row for {} hour {} {}/{}/{}", r.scenario, r.hour, r.path, r.node, r.class)));
            }
        }

        Ok(PlanningInstance {
            transport,
            grid: network,
            classes,
            paths,
            pv,
            costs,
            sizing,
            scenarios,
            hours,
            slots,
        })
    }

    /// Serializes an instance with every value explicit and rows inline.
    pub fn from_instance(inst: &PlanningInstance, name: &str) -> Self {
        let g = &inst.grid;
        let bus_id = |b: usize| g.buses[b].id.clone();
        let node_id = |i: usize| inst.transport.nodes[i].id.clone();
        let c = &inst.costs;
        let mut bus_rows = Vec::new();
        let mut traffic_rows = Vec::new();
        for sh in &inst.slots {
            let scenario = inst.scenarios[sh.scenario].id.clone();
            for b in 0..g.buses.len() {
                if sh.load_kw[b] != 0.0 || sh.load_kvar[b] != 0.0 || sh.pv_pu[b] != 0.0 {
                    bus_rows.push(BusRow {
                        scenario: scenario.clone(),
                        hour: sh.hour,
                        bus: bus_id(b),
                        p_base_kw: sh.load_kw[b],
                        q_base_kvar: sh.load_kvar[b],
                        pv_pu: sh.pv_pu[b],
                    });
                }
            }
            for (&(q, i, k), &l) in &sh.traffic {
                traffic_rows.push(TrafficRow {
                    scenario: scenario.clone(),
                    hour: sh.hour,
                    path: inst.paths[q].id.clone(),
                    node: node_id(i),
                    class: inst.classes[k].id.clone(),
                    lambda_per_h: l,
                });
            }
        }
        InstanceFile {
            format_version: FORMAT_VERSION,
            name: name.to_string(),
            hours: Some(inst.hours),
            seed: None,
            bus_table: None,
            traffic_table: None,
            sizing: SizingSection {
                alpha: Some(inst.sizing.alpha),
                p_sp_kw: Some(inst.sizing.p_sp_kw),
            },
            costs: CostsSection {
                station_fixed: Some(c.station.fixed),
                station_per_spot: Some(c.station.per_spot),
                line_per_kva_km: Some(c.station.line_per_kva_km),
                substation_per_kva: Some(c.station.substation_per_kva),
                energy_buy: Some(c.energy_buy),
                energy_sell: Some(c.energy_sell),
                unserved_penalty: Some(c.unserved_penalty),
                voltage_penalty: Some(c.voltage_penalty),
                discount_rate: Some(c.discount_rate),
                life_cs_years: Some(c.life_cs_years),
                life_pv_years: Some(c.life_pv_years),
                dt_hours: Some(c.dt_hours),
                days_per_year: Some(c.days_per_year),
                station_overrides: c
                    .station_overrides
                    .iter()
                    .map(|(&i, s)| StationOverride {
                        node: node_id(i),
                        fixed: s.fixed,
                        per_spot: s.per_spot,
                        line_per_kva_km: s.line_per_kva_km,
                        substation_per_kva: s.substation_per_kva,
                    })
                    .collect(),
            },
            transport: TransportSection {
                nodes: inst
                    .transport
                    .nodes
                    .iter()
                    .map(|n| NodeEntry {
                        id: n.id.clone(),
                        candidate: n.candidate,
                        grid_bus: n.grid_bus.map(bus_id),
                        line_length_km: n.line_length_km,
                        substation_kva: n.substation_kva,
                        spots_min: n.spots_min,
                        spots_max: n.spots_max,
                    })
                    .collect(),
                edges: inst
                    .transport
                    .edges
                    .iter()
                    .map(|e| EdgeEntry {
                        from: node_id(e.from),
                        to: node_id(e.to),
                        length_km: e.length_km,
                    })
                    .collect(),
                paths: inst
                    .paths
                    .iter()
                    .map(|p| PathEntry {
                        id: p.id.clone(),
                        nodes: p.nodes.iter().map(|&i| node_id(i)).collect(),
                        d_origin_km: p.d_origin_km,
                        d_dest_km: p.d_dest_km,
                    })
                    .collect(),
                pev_classes: inst
                    .classes
                    .iter()
                    .map(|k| ClassEntry {
                        id: k.id.clone(),
                        range_km: k.range_km,
                        charge_hours: k.charge_hours,
                        share: k.share,
                    })
                    .collect(),
            },
            grid: GridSection {
                base_kv: g.base_kv,
                base_mva: g.base_mva,
                root: bus_id(g.root),
                buses: g
                    .buses
                    .iter()
                    .map(|b| BusEntry {
                        id: b.id.clone(),
                        vmin_kv: b.vmin_kv,
                        vmax_kv: b.vmax_kv,
                    })
                    .collect(),
                branches: g
                    .branches
                    .iter()
                    .map(|b| BranchEntry {
                        from: bus_id(b.from),
                        to: bus_id(b.to),
                        r_ohm: b.r_ohm,
                        x_ohm: b.x_ohm,
                        imax_ka: b.imax_ka,
                    })
                    .collect(),
            },
            pv: PvSection {
                max_count: inst.pv.max_count,
                max_total_kva: inst.pv.max_total_kva,
                candidates: inst
                    .pv
                    .candidates
                    .iter()
                    .map(|c| PvEntry {
                        bus: bus_id(c.bus),
                        s_min_kva: c.s_min_kva,
                        s_max_kva: c.s_max_kva.is_finite().then_some(c.s_max_kva),
                        fixed_cost: c.fixed_cost,
                        unit_cost_per_kva: c.unit_cost_per_kva,
                    })
                    .collect(),
            },
            scenarios: inst
                .scenarios
                .iter()
                .map(|s| ScenarioEntry {
                    id: s.id.clone(),
                    probability: s.probability,
                    label: None,
                    v0_pu: Some(s.v0.sqrt()),
                })
                .collect(),
            bus_rows,
            traffic_rows,
        }
    }
}

/// Parses, resolves and fully validates an instance file, including trip
/// feasibility for every (path, class).
pub fn load_instance(path: impl AsRef<Path>) -> Result<PlanningInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file = InstanceFile::parse(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let inst = file.to_instance(base)?;
    PreparedModel::new(&inst)?;
    Ok(inst)
}

/// Location of the bundled desk instance.
pub fn desk_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/desk.toml")
}

/// The bundled desk instance: 5 transport nodes, 4 buses, 2 classes,
/// 2 scenarios of three 8-hour blocks.
pub fn desk_instance() -> Result<PlanningInstance> {
    load_instance(desk_path())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_text() -> String {
        fs::read_to_string(desk_path()).unwrap()
    }

    fn data_dir() -> PathBuf {
        desk_path().parent().unwrap().to_path_buf()
    }

    #[test]
    fn desk_loads() {
        let inst = desk_instance().unwrap();
        assert_eq!(inst.transport.nodes.len(), 5);
        assert_eq!(inst.grid.buses.len(), 4);
        assert_eq!(inst.classes.len(), 2);
        assert_eq!((inst.scenarios.len(), inst.hours), (2, 3));
        assert!(inst.slots.iter().all(|s| !s.traffic.is_empty()));
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let text = desk_text().replacen("probability = 0.6", "probability = 0.5", 1);
        let inst = InstanceFile::parse(&text).unwrap().to_instance(&data_dir()).unwrap();
        match inst.validate() {
            Err(Error::Validation { section, .. }) => assert_eq!(section, "scenarios"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extra_branch_is_rejected() {
        let mut file = InstanceFile::parse(&desk_text()).unwrap();
        let mut extra = file.grid.branches[0].clone();
        extra.from = file.grid.buses[3].id.clone();
        file.grid.branches.push(extra);
        let inst = file.to_instance(&data_dir()).unwrap();
        assert!(matches!(inst.validate(), Err(Error::Validation { .. })));
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let text = desk_text().replacen("format_version = 1", "format_version = 1\nbogus = 3", 1);
        let err = InstanceFile::parse(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let text = desk_text().replacen("format_version = 1", "format_version = 2", 1);
        assert!(InstanceFile::parse(&text).is_err());
    }

    #[test]
    fn unknown_references_name_their_section() {
        let text = desk_text().replacen("root = \"b0\"", "root = \"nowhere\"", 1);
        let file = InstanceFile::parse(&text).unwrap();
        match file.to_instance(&data_dir()) {
            Err(Error::Validation { section, message }) => {
                assert_eq!(section, "grid");
                assert!(message.contains("nowhere"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infeasible_trip_is_reported() {
        let text = desk_text().replacen("range_km = 200.0", "range_km = 50.0", 1);
        let dir = tempfile::tempdir().unwrap();
        for f in ["desk_bus.csv", "desk_traffic.csv"] {
            fs::copy(data_dir().join(f), dir.path().join(f)).unwrap();
        }
        let path = dir.path().join("desk.toml");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_instance(&path), Err(Error::InfeasibleTrip { .. })));
    }

    #[test]
    fn round_trip_is_lossless() {
        let inst = desk_instance().unwrap();
        let text = InstanceFile::from_instance(&inst, "desk").to_toml().unwrap();
        let back = InstanceFile::parse(&text).unwrap().to_instance(Path::new(".")).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn csv_tables_match_inline_rows() {
        let inline = InstanceFile::from_instance(&desk_instance().unwrap(), "desk");
        let dir = tempfile::tempdir().unwrap();
        let mut w = csv::Writer::from_path(dir.path().join("bus.csv")).unwrap();
        for r in &inline.bus_rows {
            w.serialize(r).unwrap();
        }
        w.flush().unwrap();
        let mut w = csv::Writer::from_path(dir.path().join("traffic.csv")).unwrap();
        for r in &inline.traffic_rows {
            w.serialize(r).unwrap();
        }
        w.flush().unwrap();
        let mut tabled = inline.clone();
        tabled.bus_rows.clear();
        tabled.traffic_rows.clear();
        tabled.bus_table = Some("bus.csv".into());
        tabled.traffic_table = Some("traffic.csv".into());
        let path = dir.path().join("inst.toml");
        fs::write(&path, tabled.to_toml().unwrap()).unwrap();
        assert_eq!(load_instance(&path).unwrap(), desk_instance().unwrap());
    }

    #[test]
    fn defaults_are_reported() {
        let mut file = InstanceFile::parse(&desk_text()).unwrap();
        file.costs.voltage_penalty = None;
        file.scenarios[0].v0_pu = None;
        let d = file.defaults_applied();
        assert!(d.contains(&"costs.voltage_penalty".to_string()));
        assert!(d.iter().any(|s| s.ends_with(".v0_pu")));
        let inst = file.to_instance(&data_dir()).unwrap();
        assert_eq!(inst.costs.voltage_penalty, 1e-4);
        assert!((inst.scenarios[0].v0 - 1.03f64.powi(2)).abs() < 1e-15);
    }
}
