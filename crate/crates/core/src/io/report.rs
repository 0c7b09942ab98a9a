//! Cost breakdown and per-slot grid diagnostics of a first-stage decision.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::benders::{solve_all_subproblems, IterationRecord};
use crate::error::{Error, Result};
use crate::grid::OperationLayout;
use crate::model::{FirstStageDecision, PlanningInstance, PreparedModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationRow {
    pub node: String,
    pub spots: f64,
    pub substation_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvRow {
    pub bus: String,
    pub kva: f64,
}

/// Branch loading `|I|/Ī` in percent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CongestionRow {
    pub branch: String,
    pub scenario: String,
    pub hour: usize,
    pub loading_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoltageRow {
    pub bus: String,
    pub scenario: String,
    pub hour: usize,
    pub v_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRow {
    pub scenario: String,
    pub hour: usize,
    pub objective: f64,
    pub buy_kw: f64,
    pub sell_kw: f64,
    pub ev_kw: f64,
    pub unserved_kw: f64,
    pub losses_kw: f64,
}

/// Annual costs in $; `total` is the sum of the components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub total: f64,
    pub investment_stations: f64,
    pub investment_pv: f64,
    pub energy_purchase: f64,
    pub energy_sales: f64,
    pub unserved_penalty: f64,
    pub voltage_penalty: f64,
    /// Σ sub-problem optima, as solved.
    pub operating: f64,
    /// Expected unserved share of PEV charging demand, percent.
    pub unsatisfied_pct: f64,
    pub stations: Vec<StationRow>,
    pub pv: Vec<PvRow>,
    pub slots: Vec<SlotRow>,
    pub congestion: Vec<CongestionRow>,
    pub voltage: Vec<VoltageRow>,
    /// Decomposition history when the plan came from it.
    pub history: Vec<IterationRecord>,
}

impl PlanReport {
    pub fn investment(&self) -> f64 {
        self.investment_stations + self.investment_pv
    }

    /// Sum of the itemized operating terms.
    pub fn operating_itemized(&self) -> f64 {
        self.energy_purchase - self.energy_sales + self.unserved_penalty + self.voltage_penalty
    }

    pub fn max_loading_pct(&self) -> f64 {
        self.congestion.iter().map(|r| r.loading_pct).fold(0.0, f64::max)
    }
}

/// Solves every operation sub-problem at `x` and itemizes the annual cost.
pub fn build_report(inst: &PlanningInstance, prep: &PreparedModel, x: &FirstStageDecision, threads: usize) -> Result<PlanReport> {
    let layout = &prep.layout;
    if x.values.len() != layout.dim {
        return Err(Error::Dimension {
            context: "build_report",
            expected: layout.dim,
            got: x.values.len(),
        });
    }
    let subs = solve_all_subproblems(&prep.templates, &x.values, threads)?;
    let ops = OperationLayout::new(inst);
    let net = &inst.grid;
    let costs = &inst.costs;
    let base = net.base_kva();

    let siting = &layout.siting;
    let mut investment_stations = 0.0;
    for i in 0..siting.x_cs.len() {
        for v in [siting.x_cs[i], siting.y_cs[i], siting.p_sub[i]].into_iter().flatten() {
            investment_stations += prep.cost[v] * x.values[v];
        }
    }
    for &g in siting.gamma.values() {
        investment_stations += prep.cost[g] * x.values[g];
    }
    let investment_pv: f64 = layout
        .x_pv
        .iter()
        .chain(&layout.s_pv)
        .map(|&v| prep.cost[v] * x.values[v])
        .sum();

    let (mut purchase, mut sales, mut unserved, mut voltage_cost) = (0.0, 0.0, 0.0, 0.0);
    let (mut demand_w, mut unserved_w) = (0.0, 0.0);
    let mut slots = Vec::new();
    let mut congestion = Vec::new();
    let mut voltage = Vec::new();
    for (sh, sub) in inst.slots.iter().zip(&subs) {
        let y = &sub.y;
        let w = costs.days_per_year * sh.probability;
        let scenario = inst.scenarios[sh.scenario].id.clone();
        let buy = y[ops.p_buy()] * base;
        let sell = y[ops.p_sell()] * base;
        let un: f64 = (0..ops.ev_nodes.len()).map(|e| y[ops.p_un(e)] * base).sum();
        let ev: f64 = (0..ops.ev_nodes.len()).map(|e| y[ops.p_ev(e)] * base).sum();
        purchase += w * costs.energy_buy * costs.dt_hours * buy;
        sales += w * costs.energy_sell * costs.dt_hours * sell;
        unserved += w * costs.unserved_penalty * costs.dt_hours * un;
        voltage_cost += w * costs.voltage_penalty * net.base_kv * net.base_kv * (0..ops.n_buses).map(|m| y[ops.vd(m)]).sum::<f64>();
        demand_w += sh.probability * (ev + un);
        unserved_w += sh.probability * un;
        let losses: f64 = (0..ops.n_branches).map(|b| net.r_pu(b) * y[ops.l(b)] * base).sum();
        slots.push(SlotRow {
            scenario: scenario.clone(),
            hour: sh.hour,
            objective: sub.primal_value,
            buy_kw: buy,
            sell_kw: sell,
            ev_kw: ev,
            unserved_kw: un,
            losses_kw: losses,
        });
        for b in 0..ops.n_branches {
            let br = &net.branches[b];
            congestion.push(CongestionRow {
                branch: format!("{}-{}", net.buses[br.from].id, net.buses[br.to].id),
                scenario: scenario.clone(),
                hour: sh.hour,
                loading_pct: 100.0 * (y[ops.l(b)].max(0.0) / net.lmax_pu(b)).sqrt(),
            });
        }
        for m in 0..ops.n_buses {
            voltage.push(VoltageRow {
                bus: net.buses[m].id.clone(),
                scenario: scenario.clone(),
                hour: sh.hour,
                v_pu: y[ops.v(m)].max(0.0).sqrt(),
            });
        }
    }
    let operating: f64 = subs.iter().map(|s| s.primal_value).sum();

    Ok(PlanReport {
        total: investment_stations + investment_pv + operating,
        investment_stations,
        investment_pv,
        energy_purchase: purchase,
        energy_sales: sales,
        unserved_penalty: unserved,
        voltage_penalty: voltage_cost,
        operating,
        unsatisfied_pct: if demand_w > 1e-6 { (100.0 * unserved_w / demand_w).max(0.0) } else { 0.0 },
        stations: x
            .stations(layout)
            .into_iter()
            .map(|(i, spots)| StationRow {
                node: inst.transport.nodes[i].id.clone(),
                spots,
                substation_kva: x.values[siting.p_sub[i].unwrap()],
            })
            .collect(),
        pv: x
            .pv_plants(layout)
            .into_iter()
            .map(|(c, kva)| PvRow {
                bus: net.buses[inst.pv.candidates[c].bus].id.clone(),
                kva,
            })
            .collect(),
        slots,
        congestion,
        voltage,
        history: Vec::new(),
    })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `costs.csv`, `stations.csv`, `pv.csv`, `slots.csv`,
/// `congestion.csv`, `voltage.csv` and, if present, `history.csv` into `dir`.
pub fn write_report_csv(report: &PlanReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    #[derive(Serialize)]
    struct CostRow<'a> {
        item: &'a str,
        usd_per_year: f64,
    }
    let items = [
        ("investment_stations", report.investment_stations),
        ("investment_pv", report.investment_pv),
        ("energy_purchase", report.energy_purchase),
        ("energy_sales", -report.energy_sales),
        ("unserved_penalty", report.unserved_penalty),
        ("voltage_penalty", report.voltage_penalty),
        ("total", report.total),
    ];
    let rows: Vec<CostRow> = items.iter().map(|&(item, usd_per_year)| CostRow { item, usd_per_year }).collect();
    write_rows(&dir.join("costs.csv"), &rows)?;
    write_rows(&dir.join("stations.csv"), &report.stations)?;
    write_rows(&dir.join("pv.csv"), &report.pv)?;
    write_rows(&dir.join("slots.csv"), &report.slots)?;
    write_rows(&dir.join("congestion.csv"), &report.congestion)?;
    write_rows(&dir.join("voltage.csv"), &report.voltage)?;
    if !report.history.is_empty() {
        write_rows(&dir.join("history.csv"), &report.history)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny_instance;
    use crate::model::sample_feasible_decision;
    use rand::SeedableRng;

    #[test]
    fn breakdown_sums_to_total() {
        let inst = tiny_instance(2.0, 300.0);
        let prep = PreparedModel::new(&inst).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let x = sample_feasible_decision(&inst, &prep, &mut rng).unwrap();
            let r = build_report(&inst, &prep, &x, 1).unwrap();
            let scale = 1.0 + r.total.abs();
            assert!((r.operating - r.operating_itemized()).abs() < 1e-6 * scale, "{} vs {}", r.operating, r.operating_itemized());
            assert!((r.total - r.investment() - r.operating).abs() < 1e-9 * scale);
            assert_eq!(r.congestion.len(), inst.grid.branches.len() * inst.slots.len());
            assert_eq!(r.voltage.len(), inst.grid.buses.len() * inst.slots.len());
        }
    }

    #[test]
    fn shedding_everything_is_all_unsatisfied() {
        let inst = tiny_instance(2.0, 0.0);
        let prep = PreparedModel::new(&inst).unwrap();
        let r = build_report(&inst, &prep, &FirstStageDecision::zeros(&prep.layout), 1).unwrap();
        // Without any γ there is no demand to serve.
        assert_eq!(r.unsatisfied_pct, 0.0);
        assert!(r.stations.is_empty() && r.pv.is_empty());
    }

    #[test]
    fn csv_files_are_written() {
        let inst = tiny_instance(1.0, 100.0);
        let prep = PreparedModel::new(&inst).unwrap();
        let r = build_report(&inst, &prep, &FirstStageDecision::zeros(&prep.layout), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report_csv(&r, dir.path()).unwrap();
        let congestion = fs::read_to_string(dir.path().join("congestion.csv")).unwrap();
        assert!(congestion.starts_with("branch,scenario,hour,loading_pct"));
        assert_eq!(congestion.lines().count(), 1 + r.congestion.len());
    }
}
