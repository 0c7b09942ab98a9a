//! The two-stage planning problem: instance data, the first-stage vector
//! layout, investment costs, the Benders master and the extensive form.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::conic::{dot, ConicProgram, ConicTemplate, LinExpr};
use crate::error::{Error, Result};
use crate::grid::{build_subproblem_template, DistributionNetwork, PvConfig, Radial, ScenarioHour};
use crate::mip::MixedBinaryConicProgram;
use crate::station::{peak_anchor, required_spots, sizing_cone, StationSizingParams};
use crate::transport::{
    coverage_rows, enumerate_subpaths, PathSpec, PevClass, StationSitingVars, SubPath, TransportNetwork,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationCosts {
    /// Fixed cost of building a station ($).
    pub fixed: f64,
    /// Cost per charging spot ($).
    pub per_spot: f64,
    /// Feeder line cost ($/(kVA·km)).
    pub line_per_kva_km: f64,
    /// Substation expansion cost ($/kVA).
    pub substation_per_kva: f64,
}

impl Default for StationCosts {
    fn default() -> Self {
        Self {
            fixed: 163_000.0,
            per_spot: 31_640.0,
            line_per_kva_km: 120.0,
            substation_per_kva: 788.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub station: StationCosts,
    /// Per transport node overrides of `station`.
    pub station_overrides: BTreeMap<usize, StationCosts>,
    /// Purchase price $/kWh.
    pub energy_buy: f64,
    /// Selling price $/kWh.
    pub energy_sell: f64,
    /// Unserved charging penalty $/kWh.
    pub unserved_penalty: f64,
    /// Voltage deviation weight $/kV².
    pub voltage_penalty: f64,
    pub discount_rate: f64,
    pub life_cs_years: u32,
    pub life_pv_years: u32,
    /// Duration represented by one hour slot.
    pub dt_hours: f64,
    pub days_per_year: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            station: StationCosts::default(),
            station_overrides: BTreeMap::new(),
            energy_buy: 0.094,
            energy_sell: 0.094 * 0.7,
            unserved_penalty: 1000.0,
            voltage_penalty: 1e-4,
            discount_rate: 0.08,
            life_cs_years: 15,
            life_pv_years: 15,
            dt_hours: 1.0,
            days_per_year: 365.0,
        }
    }
}

impl CostConfig {
    pub fn station_costs(&self, node: usize) -> StationCosts {
        self.station_overrides.get(&node).copied().unwrap_or(self.station)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation("costs", m));
        let mut all = vec![self.station];
        all.extend(self.station_overrides.values().copied());
        for s in all {
            if [s.fixed, s.per_spot, s.line_per_kva_km, s.substation_per_kva]
                .iter()
                .any(|c| !(*c >= 0.0))
            {
                return bad("station costs must be nonnegative");
            }
        }
        if [self.energy_buy, self.energy_sell, self.unserved_penalty, self.voltage_penalty]
            .iter()
            .any(|c| !(*c >= 0.0))
        {
            return bad("energy, penalty and voltage costs must be nonnegative");
        }
        if self.energy_sell > self.energy_buy {
            return bad("selling price exceeds purchase price");
        }
        if !(self.discount_rate > 0.0 && self.discount_rate < 1.0) {
            return bad("discount_rate must lie in (0, 1)");
        }
        if self.life_cs_years == 0 || self.life_pv_years == 0 {
            return bad("lifetimes must be at least one year");
        }
        if !(self.dt_hours > 0.0 && self.days_per_year > 0.0) {
            return bad("dt_hours and days_per_year must be positive");
        }
        Ok(())
    }
}

/// Capital recovery factor `r(1+r)^Y / ((1+r)^Y − 1)`.
pub fn crf(r: f64, years: u32) -> Result<f64> {
    if !(r > 0.0) || years == 0 {
        return Err(Error::Input(format!("crf needs r > 0 and years >= 1, got r={r}, years={years}")));
    }
    // (1+r)^Y − 1 via exp_m1 keeps precision as r → 0.
    let growth = (years as f64 * r.ln_1p()).exp_m1();
    Ok(r * (growth + 1.0) / growth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub probability: f64,
    /// Reference squared voltage (per unit).
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningInstance {
    pub transport: TransportNetwork,
    pub grid: DistributionNetwork,
    pub classes: Vec<PevClass>,
    pub paths: Vec<PathSpec>,
    pub pv: PvConfig,
    pub costs: CostConfig,
    pub sizing: StationSizingParams,
    pub scenarios: Vec<Scenario>,
    pub hours: usize,
    /// One entry per (scenario, hour), scenario-major.
    pub slots: Vec<ScenarioHour>,
}

impl PlanningInstance {
    /// Checks every cross-reference and returns the grid tree.
    pub fn validate(&self) -> Result<Radial> {
        let radial = self.grid.validate()?;
        self.costs.validate()?;
        self.sizing.validate()?;
        let nb = self.grid.buses.len();
        let nt = self.transport.nodes.len();
        for node in &self.transport.nodes {
            if node.candidate {
                match node.grid_bus {
                    Some(b) if b < nb => {}
                    _ => {
                        return Err(Error::validation(
                            "transport",
                            format!("candidate node {} is not mapped to a grid bus", node.id),
                        ))
                    }
                }
                if !(node.spots_min >= 0.0 && node.spots_min <= node.spots_max) {
                    return Err(Error::validation("transport", format!("node {}: need 0 <= spots_min <= spots_max", node.id)));
                }
                if !(node.line_length_km >= 0.0 && node.substation_kva >= 0.0) {
                    return Err(Error::validation("transport", format!("node {}: negative line length or substation capacity", node.id)));
                }
            }
        }
        for e in &self.transport.edges {
            if e.from >= nt || e.to >= nt || !(e.length_km > 0.0) {
                return Err(Error::validation("transport", "edge with bad endpoints or length"));
            }
        }
        for p in &self.paths {
            p.validate()?;
            if p.nodes.iter().any(|&n| n >= nt) {
                return Err(Error::validation("paths", format!("path {} references an unknown node", p.id)));
            }
        }
        for k in &self.classes {
            if !(k.range_km > 0.0 && k.charge_hours > 0.0 && k.share >= 0.0) {
                return Err(Error::validation("pev_classes", format!("class {}: bad range, charge time or share", k.id)));
            }
        }
        for c in &self.pv.candidates {
            if c.bus >= nb {
                return Err(Error::validation("pv", "candidate on unknown bus"));
            }
            if !(c.s_min_kva >= 0.0 && c.s_min_kva <= c.s_max_kva) || c.fixed_cost < 0.0 || c.unit_cost_per_kva < 0.0 {
                return Err(Error::validation("pv", format!("candidate at bus {}: bad capacity bounds or costs", c.bus)));
            }
        }
        if !self.pv.candidates.is_empty() && !(self.pv.max_count >= 0.0 && self.pv.max_total_kva.is_finite() && self.pv.max_total_kva >= 0.0) {
            return Err(Error::validation("pv", "max_count must be >= 0 and max_total_kva finite"));
        }
        if self.scenarios.is_empty() || self.hours == 0 {
            return Err(Error::validation("scenarios", "need at least one scenario and one hour"));
        }
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-9 || self.scenarios.iter().any(|s| !(s.probability > 0.0 && s.probability <= 1.0)) {
            return Err(Error::validation("scenarios", format!("probabilities must lie in (0, 1] and sum to 1, got {total}")));
        }
        if self.slots.len() != self.scenarios.len() * self.hours {
            return Err(Error::validation("scenarios", "need exactly one slot per (scenario, hour)"));
        }
        for (idx, sh) in self.slots.iter().enumerate() {
            let (w, t) = (idx / self.hours, idx % self.hours);
            if sh.scenario != w || sh.hour != t {
                return Err(Error::validation("scenarios", "slots must be ordered by scenario, then hour"));
            }
            if (sh.probability - self.scenarios[w].probability).abs() > 1e-12 {
                return Err(Error::validation("scenarios", "slot probability differs from its scenario"));
            }
            if sh.load_kw.len() != nb || sh.load_kvar.len() != nb || sh.pv_pu.len() != nb {
                return Err(Error::validation("scenarios", format!("{}: per-bus series must have {nb} entries", sh.label())));
            }
            if sh.pv_pu.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::validation("scenarios", format!("{}: pv_pu outside [0, 1]", sh.label())));
            }
            let (lo, hi) = self.grid.vsq_bounds(self.grid.root);
            if !(sh.v0 >= lo && sh.v0 <= hi) {
                return Err(Error::validation("grid", format!("{}: v0 outside the root voltage limits", sh.label())));
            }
            for (&(q, i, k), &l) in &sh.traffic {
                if q >= self.paths.len() || i >= nt || k >= self.classes.len() || !(l >= 0.0) {
                    return Err(Error::validation("scenarios", format!("{}: bad traffic entry ({q}, {i}, {k})", sh.label())));
                }
                if !self.paths[q].nodes.contains(&i) {
                    return Err(Error::validation("scenarios", format!("{}: traffic at node {i} which is not on path {q}", sh.label())));
                }
            }
        }
        Ok(radial)
    }

    /// Lower bound on the total second-stage cost: only selling can be
    /// negative, and it cannot exceed the PV fleet capacity plus any negative
    /// base load.
    pub fn z_floor(&self) -> f64 {
        self.z_floor_where(|_| true)
    }

    /// [`Self::z_floor`] restricted to the slots selected by `keep`.
    pub fn z_floor_where(&self, keep: impl Fn(&ScenarioHour) -> bool) -> f64 {
        let pv_cap: f64 = if self.pv.candidates.is_empty() {
            0.0
        } else {
            let sum_caps: f64 = (0..self.pv.candidates.len()).map(|c| self.pv.plant_cap_kva(c)).sum();
            sum_caps.min(self.pv.max_total_kva)
        };
        let c = &self.costs;
        -self
            .slots
            .iter()
            .filter(|sh| keep(sh))
            .map(|sh| {
                let neg: f64 = sh.load_kw.iter().map(|p| (-p).max(0.0)).sum();
                c.days_per_year * sh.probability * c.energy_sell * (pv_cap + neg) * c.dt_hours
            })
            .sum::<f64>()
    }
}

/// Index map of the first-stage vector `X`.
///
/// Order: `γ` by (path, node, class), then per candidate node `x_cs`, `y_cs`,
/// then per PV candidate `x_pv`, `s̄_pv` (kVA), then `P_sub` (kVA) per
/// candidate node.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageLayout {
    pub siting: StationSitingVars,
    pub x_pv: Vec<usize>,
    pub s_pv: Vec<usize>,
    pub dim: usize,
    pub binaries: Vec<usize>,
}

impl FirstStageLayout {
    pub fn new(inst: &PlanningInstance) -> Self {
        let net = &inst.transport;
        let mut dim = 0;
        let mut gamma = BTreeMap::new();
        for (q, path) in inst.paths.iter().enumerate() {
            let mut on_path: Vec<usize> = path.nodes.iter().copied().filter(|&n| net.nodes[n].candidate).collect();
            on_path.sort_unstable();
            on_path.dedup();
            for i in on_path {
                for k in 0..inst.classes.len() {
                    gamma.insert((q, i, k), 0);
                }
            }
        }
        for v in gamma.values_mut() {
            *v = dim;
            dim += 1;
        }
        let mut binaries: Vec<usize> = (0..dim).collect();
        let n = net.nodes.len();
        let mut x_cs = vec![None; n];
        let mut y_cs = vec![None; n];
        for i in net.candidates() {
            x_cs[i] = Some(dim);
            binaries.push(dim);
            y_cs[i] = Some(dim + 1);
            dim += 2;
        }
        let mut x_pv = Vec::new();
        let mut s_pv = Vec::new();
        for _ in &inst.pv.candidates {
            x_pv.push(dim);
            binaries.push(dim);
            s_pv.push(dim + 1);
            dim += 2;
        }
        let mut p_sub = vec![None; n];
        for i in net.candidates() {
            p_sub[i] = Some(dim);
            dim += 1;
        }
        let siting = StationSitingVars {
            gamma,
            x_cs,
            y_cs,
            p_sub,
            y_min: net.nodes.iter().map(|n| n.spots_min).collect(),
            y_max: net.nodes.iter().map(|n| n.spots_max).collect(),
        };
        Self {
            siting,
            x_pv,
            s_pv,
            dim,
            binaries,
        }
    }

    /// Linear investment cost vector: `investment = cᵀX` in $/year.
    pub fn cost_vector(&self, inst: &PlanningInstance) -> Result<Vec<f64>> {
        let zeta_cs = crf(inst.costs.discount_rate, inst.costs.life_cs_years)?;
        let zeta_pv = crf(inst.costs.discount_rate, inst.costs.life_pv_years)?;
        let mut c = vec![0.0; self.dim];
        for i in inst.transport.candidates() {
            let sc = inst.costs.station_costs(i);
            let line = inst.transport.nodes[i].line_length_km;
            c[self.siting.x_cs[i].unwrap()] = zeta_cs * sc.fixed;
            c[self.siting.y_cs[i].unwrap()] = zeta_cs * (sc.per_spot + sc.line_per_kva_km * line * inst.sizing.p_sp_kw);
            c[self.siting.p_sub[i].unwrap()] = zeta_cs * sc.substation_per_kva;
        }
        for (k, cand) in inst.pv.candidates.iter().enumerate() {
            c[self.x_pv[k]] = zeta_pv * cand.fixed_cost;
            c[self.s_pv[k]] = zeta_pv * cand.unit_cost_per_kva;
        }
        Ok(c)
    }
}

/// A first-stage vector `X` in [`FirstStageLayout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageDecision {
    pub values: Vec<f64>,
}

impl FirstStageDecision {
    pub fn zeros(layout: &FirstStageLayout) -> Self {
        Self {
            values: vec![0.0; layout.dim],
        }
    }

    /// Built stations as (transport node, spots).
    pub fn stations(&self, layout: &FirstStageLayout) -> Vec<(usize, f64)> {
        let s = &layout.siting;
        (0..s.x_cs.len())
            .filter_map(|i| {
                let x = s.x_cs[i]?;
                (self.values[x] > 0.5).then(|| (i, self.values[s.y_cs[i].unwrap()]))
            })
            .collect()
    }

    /// Built PV plants as (candidate index, kVA).
    pub fn pv_plants(&self, layout: &FirstStageLayout) -> Vec<(usize, f64)> {
        (0..layout.x_pv.len())
            .filter(|&k| self.values[layout.x_pv[k]] > 0.5)
            .map(|k| (k, self.values[layout.s_pv[k]]))
            .collect()
    }
}

/// Annualized investment cost of `x`.
pub fn investment_cost(x: &FirstStageDecision, inst: &PlanningInstance) -> Result<f64> {
    let layout = FirstStageLayout::new(inst);
    Ok(dot(&layout.cost_vector(inst)?, &x.values))
}

/// Everything derived from an instance that the solvers share.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub radial: Radial,
    pub layout: FirstStageLayout,
    pub cost: Vec<f64>,
    pub subpaths: Vec<SubPath>,
    /// Peak-traffic slot index per transport node.
    pub anchors: Vec<Option<usize>>,
    /// One template per slot, in slot order.
    pub templates: Vec<ConicTemplate>,
}

impl PreparedModel {
    pub fn new(inst: &PlanningInstance) -> Result<Self> {
        let radial = inst.validate()?;
        let layout = FirstStageLayout::new(inst);
        let cost = layout.cost_vector(inst)?;
        let mut subpaths = Vec::new();
        for (q, path) in inst.paths.iter().enumerate() {
            for (k, class) in inst.classes.iter().enumerate() {
                subpaths.extend(enumerate_subpaths(&inst.transport, path, q, class, k)?);
            }
        }
        let slices: Vec<((usize, usize), &_)> = inst.slots.iter().map(|sh| ((sh.scenario, sh.hour), &sh.traffic)).collect();
        let anchors = (0..inst.transport.nodes.len())
            .map(|i| {
                if !inst.transport.nodes[i].candidate {
                    return None;
                }
                peak_anchor(&slices, &inst.classes, i).map(|(w, t)| w * inst.hours + t)
            })
            .collect();
        let templates = inst
            .slots
            .iter()
            .map(|sh| build_subproblem_template(inst, &radial, &layout, sh))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            radial,
            layout,
            cost,
            subpaths,
            anchors,
            templates,
        })
    }

    /// Sizing constraint `y ≥ Σ Tλγ + z·sqrt(Σ Tλγ)` at every station node and
    /// every slot in `slots` (by slot index), as master rows.
    pub fn sizing_rows(
        &self,
        inst: &PlanningInstance,
        slots: impl Fn(usize) -> Vec<usize>,
    ) -> Result<Vec<(Vec<LinExpr>, LinExpr)>> {
        let mut out = Vec::new();
        for i in inst.transport.candidates() {
            for s in slots(i) {
                if let Some(c) = sizing_cone(&inst.slots[s].traffic, &inst.classes, i, &inst.sizing, &self.layout.siting)? {
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}

/// Sizing shortfalls `(node, slot, required, built)` of `x` over every slot,
/// beyond a `1e-6` tolerance.
pub fn sizing_violations(inst: &PlanningInstance, prep: &PreparedModel, x: &[f64]) -> Result<Vec<(usize, usize, f64, f64)>> {
    let s = &prep.layout.siting;
    let gamma = |q: usize, i: usize, k: usize| s.gamma.get(&(q, i, k)).map_or(0.0, |&g| x[g]);
    let mut out = Vec::new();
    for i in inst.transport.candidates() {
        let built = x[s.y_cs[i].unwrap()];
        for (slot, sh) in inst.slots.iter().enumerate() {
            let need = required_spots(&sh.traffic, &inst.classes, gamma, i, &inst.sizing)?;
            if need > built + 1e-6 * need.abs().max(1.0) {
                out.push((i, slot, need, built));
            }
        }
    }
    Ok(out)
}

/// A random first-stage decision satisfying every first-stage row, with
/// station sizing met at every slot (not just the peak).
pub fn sample_feasible_decision(inst: &PlanningInstance, prep: &PreparedModel, rng: &mut impl Rng) -> Result<FirstStageDecision> {
    let l = &prep.layout;
    let s = &l.siting;
    let mut x = vec![0.0; l.dim];
    let cand: Vec<usize> = inst.transport.candidates().collect();
    for &i in &cand {
        if rng.gen_bool(0.6) {
            x[s.x_cs[i].unwrap()] = 1.0;
        }
    }
    let open = |x: &[f64], i: usize| x[s.x_cs[i].unwrap()] > 0.5;
    for sp in &prep.subpaths {
        if !sp.nodes.iter().any(|&n| open(&x, n)) {
            let n = sp.nodes[rng.gen_range(0..sp.nodes.len())];
            x[s.x_cs[n].unwrap()] = 1.0;
        }
    }
    for (&(_, i, _), &g) in &s.gamma {
        if open(&x, i) && rng.gen_bool(0.5) {
            x[g] = 1.0;
        }
    }
    for sp in &prep.subpaths {
        let g = |n: usize| s.gamma[&(sp.path, n, sp.class)];
        if !sp.nodes.iter().any(|&n| x[g(n)] > 0.5) {
            let opened: Vec<usize> = sp.nodes.iter().copied().filter(|&n| open(&x, n)).collect();
            let n = opened[rng.gen_range(0..opened.len())];
            x[g(n)] = 1.0;
        }
    }
    let gamma = |q: usize, i: usize, k: usize| s.gamma.get(&(q, i, k)).map_or(0.0, |&g| x[g]);
    let mut spots = Vec::new();
    for &i in &cand {
        if !open(&x, i) {
            continue;
        }
        let mut need = s.y_min[i];
        for sh in &inst.slots {
            need = need.max(required_spots(&sh.traffic, &inst.classes, gamma, i, &inst.sizing)?);
        }
        let y = if s.y_max[i] > need { need + rng.gen::<f64>() * (s.y_max[i] - need) } else { need };
        spots.push((i, y));
    }
    for (i, y) in spots {
        x[s.y_cs[i].unwrap()] = y;
        let p0 = inst.transport.nodes[i].substation_kva;
        x[s.p_sub[i].unwrap()] = (inst.sizing.p_sp_kw * y - p0).max(0.0);
    }
    let n_pv = inst.pv.candidates.len();
    if n_pv > 0 {
        let limit = (inst.pv.max_count.floor() as usize).min(n_pv);
        let count = rng.gen_range(0..=limit);
        let mut order: Vec<usize> = (0..n_pv).collect();
        order.shuffle(rng);
        let mut budget = inst.pv.max_total_kva;
        for &k in &order[..count] {
            let lo = inst.pv.candidates[k].s_min_kva;
            let hi = inst.pv.plant_cap_kva(k).min(budget);
            if hi < lo {
                continue;
            }
            let size = lo + rng.gen::<f64>() * (hi - lo);
            x[l.x_pv[k]] = 1.0;
            x[l.s_pv[k]] = size;
            budget -= size;
        }
    }
    Ok(FirstStageDecision { values: x })
}

/// First-stage rows shared by the master and the extensive form, over a
/// program whose first `layout.dim` variables are `X`.
fn push_first_stage_rows(program: &mut ConicProgram, inst: &PlanningInstance, prep: &PreparedModel) -> Result<()> {
    let layout = &prep.layout;
    for row in coverage_rows(&prep.subpaths, &layout.siting) {
        program.push_nonneg(&row);
    }
    // PV siting: S̲ x ≤ s̄ ≤ S̄ x, Σ x ≤ N, Σ s̄ ≤ S̄_total.
    if !inst.pv.candidates.is_empty() {
        let mut count = LinExpr::constant(inst.pv.max_count);
        let mut total = LinExpr::constant(inst.pv.max_total_kva);
        for (k, cand) in inst.pv.candidates.iter().enumerate() {
            let (x, s) = (layout.x_pv[k], layout.s_pv[k]);
            program.push_nonneg(&LinExpr::var(s, 1.0).term(x, -cand.s_min_kva));
            program.push_nonneg(&LinExpr::var(x, inst.pv.plant_cap_kva(k)).term(s, -1.0));
            program.push_nonneg(&LinExpr::var(s, 1.0));
            count = count.term(x, -1.0);
            total = total.term(s, -1.0);
        }
        program.push_nonneg(&count);
        program.push_nonneg(&total);
    }
    // Station sizing at the peak slot of each node.
    let rows = prep.sizing_rows(inst, |i| prep.anchors[i].into_iter().collect())?;
    for (norm, bound) in rows {
        program.push_soc(&norm, &bound);
    }
    // P_sub ≥ p_sp y − P₀, P_sub ≥ 0.
    for i in inst.transport.candidates() {
        let p = layout.siting.p_sub[i].unwrap();
        let y = layout.siting.y_cs[i].unwrap();
        let p0 = inst.transport.nodes[i].substation_kva;
        program.push_nonneg(&LinExpr::var(p, 1.0).term(y, -inst.sizing.p_sp_kw).plus(p0));
        program.push_nonneg(&LinExpr::var(p, 1.0));
    }
    Ok(())
}

/// The Benders master over `(X, z_1..z_n)`: investment plus `Σ z`, first-stage
/// rows, and `z ≥ floor` per `z` so the first solve is bounded.
#[derive(Debug, Clone)]
pub struct MasterProblem {
    pub mib: MixedBinaryConicProgram,
    /// Index of each `z` variable.
    pub z: Vec<usize>,
    /// Unit of the `z` columns: the program holds `z / z_scale`. Value
    /// estimates run to millions while `X` is mostly binary, and the
    /// interior-point backend stalls on that spread.
    pub z_scale: f64,
}

impl MasterProblem {
    /// Value estimate `j` at a master solution `y`, in $.
    pub fn z_value(&self, y: &[f64], j: usize) -> f64 {
        self.z_scale * y[self.z[j]]
    }

    pub fn add_cut(&mut self, z: usize, coefficients: &[f64], constant: f64) {
        // Rows are scaled so the largest coefficient is 1.
        let s = coefficients.iter().fold(self.z_scale, |m, a| m.max(a.abs()));
        let mut row = LinExpr::var(self.z[z], self.z_scale / s).plus(-constant / s);
        for (i, &a) in coefficients.iter().enumerate() {
            if a != 0.0 {
                row = row.term(i, -a / s);
            }
        }
        self.mib.program.push_nonneg(&row);
    }
}

/// Builds the master with `floors.len()` value variables, one per floor.
pub fn build_master_base(inst: &PlanningInstance, prep: &PreparedModel, floors: &[f64], gap_target: f64) -> Result<MasterProblem> {
    let dim = prep.layout.dim;
    let mut program = ConicProgram::new(dim + floors.len());
    program.objective[..dim].copy_from_slice(&prep.cost);
    push_first_stage_rows(&mut program, inst, prep)?;
    let z_scale = floors
        .iter()
        .map(|f| f.abs())
        .chain([prep.cost.iter().map(|c| c.abs()).sum::<f64>()])
        .fold(1.0, f64::max);
    let mut z = Vec::new();
    for (j, &floor) in floors.iter().enumerate() {
        let zi = dim + j;
        program.objective[zi] = z_scale;
        program.push_nonneg(&LinExpr::var(zi, 1.0).plus(-floor / z_scale));
        z.push(zi);
    }
    Ok(MasterProblem {
        mib: MixedBinaryConicProgram::new(program, prep.layout.binaries.clone(), gap_target)?,
        z,
        z_scale,
    })
}

/// The monolithic problem over `(X, Y_1, …, Y_S)` with every template's
/// cones written directly in `X` and its own `Y` block.
pub fn build_extensive_form(inst: &PlanningInstance, prep: &PreparedModel, gap_target: f64) -> Result<ExtensiveForm> {
    let dim_x = prep.layout.dim;
    let dim_total = dim_x + prep.templates.iter().map(|t| t.dim_y).sum::<usize>();
    let mut program = ConicProgram::new(dim_total);
    program.objective[..dim_x].copy_from_slice(&prep.cost);
    push_first_stage_rows(&mut program, inst, prep)?;
    let mut offsets = Vec::new();
    let mut off = dim_x;
    for t in &prep.templates {
        offsets.push(off);
        for (i, &d) in t.objective_y.iter().enumerate() {
            program.objective[off + i] = d;
        }
        for cone in &t.cones {
            let mut rows: Vec<LinExpr> = cone.e.iter().map(|&e| LinExpr::constant(e)).collect();
            for &(r, c, v) in cone.a.iter() {
                rows[r].terms.push((c, v));
            }
            for &(r, c, v) in cone.b.iter() {
                rows[r].terms.push((off + c, v));
            }
            let mut bound = LinExpr::constant(cone.f);
            for (i, &v) in cone.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                bound.terms.push((i, v));
            }
            for (i, &v) in cone.d.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                bound.terms.push((off + i, v));
            }
            program.push_soc(&rows, &bound);
        }
        off += t.dim_y;
    }
    Ok(ExtensiveForm {
        mib: MixedBinaryConicProgram::new(program, prep.layout.binaries.clone(), gap_target)?,
        offsets,
    })
}

#[derive(Debug, Clone)]
pub struct ExtensiveForm {
    pub mib: MixedBinaryConicProgram,
    /// Start of each slot's `Y` block in the stacked vector.
    pub offsets: Vec<usize>,
}
