//! Distribution-grid operation sub-problems.
//!
//! One template per (scenario, hour): a branch-flow (DistFlow) model with the
//! cone relaxation `P² + Q² ≤ l·v`, PV inverters with reactive control, EV
//! charging demand that may be shed at a penalty, and a linearized
//! voltage-deviation penalty. All grid quantities are per unit on the
//! network's base MVA and base kV.
//!
//! Branches are oriented toward the substation (bus `root`); the flow
//! `P + jQ` of a branch is measured at its downstream (sending) end.

use crate::conic::{AffineExpr, ConicSolution, ConicTemplate};
use crate::error::{Error, Result};
use crate::model::{FirstStageLayout, PlanningInstance};
use crate::station::TrafficSlice;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub vmin_kv: f64,
    pub vmax_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub imax_ka: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionNetwork {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub root: usize,
    pub base_kv: f64,
    pub base_mva: f64,
}

/// Tree structure of a radial network rooted at the substation.
#[derive(Debug, Clone, PartialEq)]
pub struct Radial {
    /// Upstream neighbour of each bus (`None` for the root).
    pub parent: Vec<Option<usize>>,
    /// Branch connecting each bus to its parent.
    pub up_branch: Vec<Option<usize>>,
    /// Downstream branches of each bus.
    pub children: Vec<Vec<usize>>,
    /// Downstream bus of each branch.
    pub branch_bus: Vec<usize>,
    /// Buses in breadth-first order from the root.
    pub order: Vec<usize>,
}

impl DistributionNetwork {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn base_kva(&self) -> f64 {
        self.base_mva * 1000.0
    }

    pub fn base_impedance(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    /// Base current in kA for a three-phase system.
    pub fn base_current_ka(&self) -> f64 {
        self.base_mva / (3f64.sqrt() * self.base_kv)
    }

    pub fn r_pu(&self, b: usize) -> f64 {
        self.branches[b].r_ohm / self.base_impedance()
    }

    pub fn x_pu(&self, b: usize) -> f64 {
        self.branches[b].x_ohm / self.base_impedance()
    }

    /// `Ī²` in per unit.
    pub fn lmax_pu(&self, b: usize) -> f64 {
        (self.branches[b].imax_ka / self.base_current_ka()).powi(2)
    }

    /// `(V̲², V̄²)` in per unit.
    pub fn vsq_bounds(&self, m: usize) -> (f64, f64) {
        let bus = &self.buses[m];
        (
            (bus.vmin_kv / self.base_kv).powi(2),
            (bus.vmax_kv / self.base_kv).powi(2),
        )
    }

    pub fn validate(&self) -> Result<Radial> {
        let bad = |m: String| Err(Error::validation("grid", m));
        if self.buses.is_empty() {
            return bad("no buses".into());
        }
        if self.root >= self.buses.len() {
            return bad("root bus out of range".into());
        }
        if !(self.base_kv > 0.0 && self.base_mva > 0.0) {
            return bad("base_kv and base_mva must be positive".into());
        }
        for b in &self.buses {
            if !(b.vmin_kv > 0.0 && b.vmin_kv < b.vmax_kv) {
                return bad(format!("bus {}: need 0 < vmin < vmax", b.id));
            }
        }
        for (i, br) in self.branches.iter().enumerate() {
            if br.from >= self.buses.len() || br.to >= self.buses.len() || br.from == br.to {
                return bad(format!("branch {i}: bad endpoints"));
            }
            if !(br.r_ohm >= 0.0 && br.x_ohm >= 0.0 && br.imax_ka > 0.0) {
                return bad(format!("branch {i}: need r, x >= 0 and imax > 0"));
            }
        }
        if self.branches.len() + 1 != self.buses.len() {
            return bad(format!(
                "network is not radial: {} branches for {} buses",
                self.branches.len(),
                self.buses.len()
            ));
        }
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for (i, br) in self.branches.iter().enumerate() {
            adj[br.from].push((br.to, i));
            adj[br.to].push((br.from, i));
        }
        let mut parent = vec![None; n];
        let mut up_branch = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut branch_bus = vec![usize::MAX; self.branches.len()];
        let mut seen = vec![false; n];
        let mut order = vec![self.root];
        seen[self.root] = true;
        let mut head = 0;
        while head < order.len() {
            let m = order[head];
            head += 1;
            for &(k, b) in &adj[m] {
                if !seen[k] {
                    seen[k] = true;
                    parent[k] = Some(m);
                    up_branch[k] = Some(b);
                    children[m].push(b);
                    branch_bus[b] = k;
                    order.push(k);
                }
            }
        }
        if order.len() != n {
            return bad("network is not connected".into());
        }
        Ok(Radial {
            parent,
            up_branch,
            children,
            branch_bus,
            order,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvCandidate {
    pub bus: usize,
    pub s_min_kva: f64,
    /// May be infinite; the fleet cap then bounds the plant.
    pub s_max_kva: f64,
    pub fixed_cost: f64,
    pub unit_cost_per_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PvConfig {
    pub candidates: Vec<PvCandidate>,
    pub max_count: f64,
    pub max_total_kva: f64,
}

impl PvConfig {
    /// Effective per-plant cap used as the big-M of the siting row.
    pub fn plant_cap_kva(&self, c: usize) -> f64 {
        self.candidates[c].s_max_kva.min(self.max_total_kva)
    }
}

/// Exogenous data of one operating hour in one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioHour {
    pub scenario: usize,
    pub hour: usize,
    pub probability: f64,
    /// Reference squared voltage (per unit).
    pub v0: f64,
    pub load_kw: Vec<f64>,
    pub load_kvar: Vec<f64>,
    /// Per-unit PV availability per bus.
    pub pv_pu: Vec<f64>,
    pub traffic: TrafficSlice,
}

impl ScenarioHour {
    pub fn label(&self) -> String {
        format!("scenario {}, hour {}", self.scenario, self.hour)
    }
}

/// Index map of the second-stage vector `Y` of one sub-problem.
///
/// Order: per branch `(P, Q, l)`; per bus `(v, v_d)`; per PV candidate
/// `(p_pv, q_pv)`; substation `(p⁺, p⁻, q₀)`; per station node `(p_ev, p_un)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationLayout {
    pub n_branches: usize,
    pub n_buses: usize,
    pub n_pv: usize,
    /// Transport nodes that may host a station, in layout order.
    pub ev_nodes: Vec<usize>,
}

impl OperationLayout {
    pub fn new(inst: &PlanningInstance) -> Self {
        Self {
            n_branches: inst.grid.branches.len(),
            n_buses: inst.grid.buses.len(),
            n_pv: inst.pv.candidates.len(),
            ev_nodes: inst.transport.candidates().collect(),
        }
    }

    pub fn p(&self, b: usize) -> usize {
        3 * b
    }
    pub fn q(&self, b: usize) -> usize {
        3 * b + 1
    }
    pub fn l(&self, b: usize) -> usize {
        3 * b + 2
    }
    pub fn v(&self, m: usize) -> usize {
        3 * self.n_branches + 2 * m
    }
    pub fn vd(&self, m: usize) -> usize {
        3 * self.n_branches + 2 * m + 1
    }
    pub fn p_pv(&self, c: usize) -> usize {
        3 * self.n_branches + 2 * self.n_buses + 2 * c
    }
    pub fn q_pv(&self, c: usize) -> usize {
        self.p_pv(c) + 1
    }
    fn sub_base(&self) -> usize {
        3 * self.n_branches + 2 * self.n_buses + 2 * self.n_pv
    }
    pub fn p_buy(&self) -> usize {
        self.sub_base()
    }
    pub fn p_sell(&self) -> usize {
        self.sub_base() + 1
    }
    pub fn q0(&self) -> usize {
        self.sub_base() + 2
    }
    pub fn p_ev(&self, e: usize) -> usize {
        self.sub_base() + 3 + 2 * e
    }
    pub fn p_un(&self, e: usize) -> usize {
        self.p_ev(e) + 1
    }
    pub fn dim(&self) -> usize {
        self.sub_base() + 3 + 2 * self.ev_nodes.len()
    }
}

/// Builds the operation sub-problem for slot `sh` of `inst`.
pub fn build_subproblem_template(
    inst: &PlanningInstance,
    radial: &Radial,
    layout: &FirstStageLayout,
    sh: &ScenarioHour,
) -> Result<ConicTemplate> {
    let net = &inst.grid;
    let costs = &inst.costs;
    let ops = OperationLayout::new(inst);
    let base_kva = net.base_kva();
    let mut t = ConicTemplate::new(layout.dim, ops.dim(), format!("{} block {}", inst.scenarios[sh.scenario].id, sh.hour));

    // Objective: 365·π·[c⁺p⁺Δt − c⁻p⁻Δt + Σ c_p p_un Δt + Σ σ v_d].
    let w = costs.days_per_year * sh.probability;
    t.objective_y[ops.p_buy()] = w * costs.energy_buy * costs.dt_hours * base_kva;
    t.objective_y[ops.p_sell()] = -w * costs.energy_sell * costs.dt_hours * base_kva;
    for e in 0..ops.ev_nodes.len() {
        t.objective_y[ops.p_un(e)] = w * costs.unserved_penalty * costs.dt_hours * base_kva;
    }
    let vd_weight = w * costs.voltage_penalty * net.base_kv * net.base_kv;
    for m in 0..ops.n_buses {
        t.objective_y[ops.vd(m)] = vd_weight;
    }

    // PV: ‖(p, q)‖ ≤ s̄, 0 ≤ p ≤ p_fore·s̄.
    for (c, cand) in inst.pv.candidates.iter().enumerate() {
        let s_bar = layout.s_pv[c];
        t.push_soc(
            &[AffineExpr::new().y(ops.p_pv(c), 1.0), AffineExpr::new().y(ops.q_pv(c), 1.0)],
            &AffineExpr::new().x(s_bar, 1.0 / base_kva),
        );
        t.push_nonneg(&AffineExpr::new().y(ops.p_pv(c), 1.0));
        t.push_nonneg(
            &AffineExpr::new()
                .x(s_bar, sh.pv_pu[cand.bus] / base_kva)
                .y(ops.p_pv(c), -1.0),
        );
    }

    // Net injection s_m = −s_ev + s_pv − s_base, as (active, reactive) expressions.
    let injection = |m: usize| -> (AffineExpr, AffineExpr) {
        let mut p = AffineExpr::constant(-sh.load_kw[m] / base_kva);
        let mut q = AffineExpr::constant(-sh.load_kvar[m] / base_kva);
        for (c, cand) in inst.pv.candidates.iter().enumerate() {
            if cand.bus == m {
                p = p.y(ops.p_pv(c), 1.0);
                q = q.y(ops.q_pv(c), 1.0);
            }
        }
        for (e, &node) in ops.ev_nodes.iter().enumerate() {
            if inst.transport.nodes[node].grid_bus == Some(m) {
                p = p.y(ops.p_ev(e), -1.0);
            }
        }
        (p, q)
    };

    // Power balance at every bus.
    for m in 0..ops.n_buses {
        let (mut p, mut q) = injection(m);
        for &h in &radial.children[m] {
            p = p.y(ops.p(h), 1.0).y(ops.l(h), -net.r_pu(h));
            q = q.y(ops.q(h), 1.0).y(ops.l(h), -net.x_pu(h));
        }
        match radial.up_branch[m] {
            // S_mn − s_m − Σ (S_hm − z l) = 0
            Some(b) => {
                t.push_equality(&p.negated().y(ops.p(b), 1.0));
                t.push_equality(&q.negated().y(ops.q(b), 1.0));
            }
            // s_0 + s_root + Σ (S_h0 − z l) = 0 with s_0 = (p⁺ − p⁻) + j q₀
            None => {
                t.push_equality(&p.y(ops.p_buy(), 1.0).y(ops.p_sell(), -1.0));
                t.push_equality(&q.y(ops.q0(), 1.0));
            }
        }
    }

    for b in 0..ops.n_branches {
        let m = radial.branch_bus[b];
        let n = radial.parent[m].expect("branch bus has a parent");
        let (r, x) = (net.r_pu(b), net.x_pu(b));
        // v_m − v_n − 2(rP + xQ) + |z|² l = 0
        t.push_equality(
            &AffineExpr::new()
                .y(ops.v(m), 1.0)
                .y(ops.v(n), -1.0)
                .y(ops.p(b), -2.0 * r)
                .y(ops.q(b), -2.0 * x)
                .y(ops.l(b), r * r + x * x),
        );
        // P² + Q² ≤ l v_m  ⇔  ‖(2P, 2Q, l − v_m)‖ ≤ l + v_m
        t.push_soc(
            &[
                AffineExpr::new().y(ops.p(b), 2.0),
                AffineExpr::new().y(ops.q(b), 2.0),
                AffineExpr::new().y(ops.l(b), 1.0).y(ops.v(m), -1.0),
            ],
            &AffineExpr::new().y(ops.l(b), 1.0).y(ops.v(m), 1.0),
        );
        t.push_nonneg(&AffineExpr::new().y(ops.l(b), 1.0));
        t.push_nonneg(&AffineExpr::constant(net.lmax_pu(b)).y(ops.l(b), -1.0));
    }

    for m in 0..ops.n_buses {
        let (lo, hi) = net.vsq_bounds(m);
        t.push_nonneg(&AffineExpr::constant(-lo).y(ops.v(m), 1.0));
        t.push_nonneg(&AffineExpr::constant(hi).y(ops.v(m), -1.0));
        t.push_nonneg(&AffineExpr::constant(sh.v0).y(ops.vd(m), 1.0).y(ops.v(m), -1.0));
        t.push_nonneg(&AffineExpr::constant(-sh.v0).y(ops.vd(m), 1.0).y(ops.v(m), 1.0));
    }

    // p_ev + p_un = p_sp Σ T_k λ γ
    for (e, &node) in ops.ev_nodes.iter().enumerate() {
        let mut row = AffineExpr::new().y(ops.p_ev(e), 1.0).y(ops.p_un(e), 1.0);
        for (&(q, i, k), &lambda) in sh.traffic.iter().filter(|((_, i, _), _)| *i == node) {
            if let Some(&g) = layout.siting.gamma.get(&(q, i, k)) {
                let kw = inst.sizing.p_sp_kw * inst.classes[k].charge_hours * lambda;
                row = row.x(g, -kw / base_kva);
            }
        }
        t.push_equality(&row);
        t.push_nonneg(&AffineExpr::new().y(ops.p_ev(e), 1.0));
        t.push_nonneg(&AffineExpr::new().y(ops.p_un(e), 1.0));
    }

    t.push_nonneg(&AffineExpr::new().y(ops.p_buy(), 1.0));
    t.push_nonneg(&AffineExpr::new().y(ops.p_sell(), 1.0));

    t.validate()?;
    Ok(t)
}

/// `l·v_m − (P² + Q²)` per branch at a sub-problem solution.
pub fn exactness_residual(y: &[f64], inst: &PlanningInstance, radial: &Radial) -> Vec<f64> {
    let ops = OperationLayout::new(inst);
    (0..ops.n_branches)
        .map(|b| {
            let m = radial.branch_bus[b];
            let (p, q, l, v) = (y[ops.p(b)], y[ops.q(b)], y[ops.l(b)], y[ops.v(m)]);
            l * v - (p * p + q * q)
        })
        .collect()
}

/// True when every branch residual is within `1e-6·max(1, l·v)`.
pub fn relaxation_is_exact(y: &[f64], inst: &PlanningInstance, radial: &Radial) -> bool {
    let ops = OperationLayout::new(inst);
    exactness_residual(y, inst, radial)
        .iter()
        .enumerate()
        .all(|(b, r)| {
            let lv = y[ops.l(b)] * y[ops.v(radial.branch_bus[b])];
            r.abs() <= 1e-6 * lv.abs().max(1.0)
        })
}

/// Outcome of the strict-feasibility construction for one sub-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterReport {
    /// `min_m min(V̄² − v_m, v_m − V̲²)` at the no-PV, no-EV power flow.
    pub delta_v: f64,
    pub min_current_sq: f64,
    pub strictly_feasible: bool,
    pub converged: bool,
    pub message: String,
}

/// Exact branch-flow solution of a radial network for fixed bus loads.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlow {
    /// Squared voltage magnitude per bus.
    pub v: Vec<f64>,
    /// Squared current magnitude per branch.
    pub l: Vec<f64>,
    /// Sending-end complex flow per branch (toward the root).
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub iterations: usize,
}

/// Backward/forward sweep for bus consumptions `load_p + j load_q` (per
/// unit) with the root held at `sqrt(v_root)`.
pub fn power_flow(
    net: &DistributionNetwork,
    radial: &Radial,
    load_p: &[f64],
    load_q: &[f64],
    v_root: f64,
) -> Option<PowerFlow> {
    let n = net.buses.len();
    let nb = net.branches.len();
    let v0 = v_root.sqrt();
    let mut vr = vec![v0; n];
    let mut vi = vec![0.0; n];
    let mut ir = vec![0.0; nb];
    let mut ii = vec![0.0; nb];
    for iter in 1..=200 {
        // Backward: branch current (toward the load) accumulates downstream demand.
        for &m in radial.order.iter().rev() {
            let Some(b) = radial.up_branch[m] else { continue };
            // I = conj(S / V)
            let (sr, si) = (load_p[m], load_q[m]);
            let den = vr[m] * vr[m] + vi[m] * vi[m];
            let mut cr = (sr * vr[m] + si * vi[m]) / den;
            let mut ci = (sr * vi[m] - si * vr[m]) / den;
            for &h in &radial.children[m] {
                cr += ir[h];
                ci += ii[h];
            }
            ir[b] = cr;
            ii[b] = ci;
        }
        // Forward: voltage drop along each branch.
        let mut change: f64 = 0.0;
        for &m in &radial.order {
            let (Some(b), Some(up)) = (radial.up_branch[m], radial.parent[m]) else {
                continue;
            };
            let (r, x) = (net.r_pu(b), net.x_pu(b));
            let nr = vr[up] - (r * ir[b] - x * ii[b]);
            let ni = vi[up] - (r * ii[b] + x * ir[b]);
            change = change.max((nr - vr[m]).abs()).max((ni - vi[m]).abs());
            vr[m] = nr;
            vi[m] = ni;
        }
        if !change.is_finite() {
            return None;
        }
        if change < 1e-13 {
            let v: Vec<f64> = (0..n).map(|m| vr[m] * vr[m] + vi[m] * vi[m]).collect();
            let l: Vec<f64> = (0..nb).map(|b| ir[b] * ir[b] + ii[b] * ii[b]).collect();
            // Flow toward the root is the negative of the delivered power.
            let mut p = vec![0.0; nb];
            let mut q = vec![0.0; nb];
            for b in 0..nb {
                let m = radial.branch_bus[b];
                // S_toward_root = V_m · conj(−I)
                p[b] = -(vr[m] * ir[b] + vi[m] * ii[b]);
                q[b] = -(vi[m] * ir[b] - vr[m] * ii[b]);
            }
            return Some(PowerFlow {
                v,
                l,
                p,
                q,
                iterations: iter,
            });
        }
    }
    None
}

/// Builds the strictly feasible point used to argue strong duality: no PV,
/// no EV charging (everything shed), base load only, root at `v0`.
pub fn slater_check(inst: &PlanningInstance, radial: &Radial, sh: &ScenarioHour) -> SlaterReport {
    let net = &inst.grid;
    let base = net.base_kva();
    let lp: Vec<f64> = sh.load_kw.iter().map(|p| p / base).collect();
    let lq: Vec<f64> = sh.load_kvar.iter().map(|q| q / base).collect();
    let Some(pf) = power_flow(net, radial, &lp, &lq, sh.v0) else {
        return SlaterReport {
            delta_v: f64::NEG_INFINITY,
            min_current_sq: 0.0,
            strictly_feasible: false,
            converged: false,
            message: "power flow did not converge".into(),
        };
    };
    let delta_v = (0..net.buses.len())
        .map(|m| {
            let (lo, hi) = net.vsq_bounds(m);
            (hi - pf.v[m]).min(pf.v[m] - lo)
        })
        .fold(f64::INFINITY, f64::min);
    let min_current_sq = pf.l.iter().cloned().fold(f64::INFINITY, f64::min);
    let over_limit: Vec<usize> = (0..net.branches.len())
        .filter(|&b| pf.l[b] > net.lmax_pu(b))
        .collect();
    let mut message = Vec::new();
    if delta_v <= 0.0 {
        message.push(format!("voltage margin {delta_v:.3e} is not positive"));
    }
    if !(min_current_sq > 0.0) {
        message.push("a branch carries no current".to_string());
    }
    if !over_limit.is_empty() {
        message.push(format!("current limit exceeded on branches {over_limit:?}"));
    }
    SlaterReport {
        delta_v,
        min_current_sq,
        strictly_feasible: message.is_empty(),
        converged: true,
        message: message.join("; "),
    }
}

/// Extracted physical quantities of a solved sub-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationSummary {
    pub buy_kw: f64,
    pub sell_kw: f64,
    pub unserved_kw: f64,
    pub ev_served_kw: f64,
    pub voltage_pu: Vec<f64>,
    /// `sqrt(l)/Ī` per branch.
    pub loading: Vec<f64>,
}

pub fn summarize(sol: &ConicSolution, inst: &PlanningInstance) -> OperationSummary {
    let ops = OperationLayout::new(inst);
    let net = &inst.grid;
    let base = net.base_kva();
    let y = &sol.y;
    OperationSummary {
        buy_kw: y[ops.p_buy()] * base,
        sell_kw: y[ops.p_sell()] * base,
        unserved_kw: (0..ops.ev_nodes.len()).map(|e| y[ops.p_un(e)] * base).sum(),
        ev_served_kw: (0..ops.ev_nodes.len()).map(|e| y[ops.p_ev(e)] * base).sum(),
        voltage_pu: (0..ops.n_buses).map(|m| y[ops.v(m)].max(0.0).sqrt()).collect(),
        loading: (0..ops.n_branches)
            .map(|b| (y[ops.l(b)].max(0.0) / net.lmax_pu(b)).sqrt())
            .collect(),
    }
}
