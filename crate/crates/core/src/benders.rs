//! Generalized Benders decomposition with a relaxed-master warm phase.
//!
//! Phase 0 solves the continuous relaxation of the master; once its gap is
//! below `eps1` the upper bound is reset and phase 1 solves the mixed-binary
//! master until the gap is below `eps2`. Every iteration solves all
//! operation sub-problems at the master's `X̂` and adds one optimality cut
//! `z ≥ aᵀX + b` assembled from their cone multipliers. Cuts from phase 0
//! stay valid in phase 1.

use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{dualize, solve_robust, ConeDual, ConicTemplate, SolveStatus};
use crate::error::{Error, Result};
use crate::grid::{relaxation_is_exact, exactness_residual, slater_check, SlaterReport};
use crate::mip::{solve_mib, solve_relaxation, MibSolution, MibStatus};
use crate::model::{build_extensive_form, build_master_base, sample_feasible_decision, FirstStageDecision, PlanningInstance, PreparedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutMode {
    /// One cut per iteration summed over every (scenario, hour).
    Aggregated,
    /// One value variable and one cut per scenario.
    PerScenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BendersConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub max_iterations: usize,
    pub threads: usize,
    /// Relative gap for phase-1 master solves.
    pub mip_gap: f64,
    pub cut_mode: CutMode,
    /// Check every cut for tightness at `X̂` and validity at random points.
    pub audit_cuts: bool,
    pub audit_points: usize,
    pub seed: u64,
}

impl Default for BendersConfig {
    fn default() -> Self {
        Self {
            eps1: 0.005,
            eps2: 0.02,
            max_iterations: 200,
            threads: 1,
            mip_gap: 1e-4,
            cut_mode: CutMode::Aggregated,
            audit_cuts: false,
            audit_points: 20,
            seed: 1,
        }
    }
}

impl BendersConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps2 > 0.0 && self.eps1 >= 0.0) {
            return Err(Error::Input("need eps2 > 0 and eps1 >= 0".into()));
        }
        if self.threads == 0 || self.max_iterations == 0 {
            return Err(Error::Input("threads and max_iterations must be positive".into()));
        }
        if !(self.mip_gap > 0.0) {
            return Err(Error::Input("mip_gap must be positive".into()));
        }
        Ok(())
    }
}

/// `z_group ≥ aᵀX + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCut {
    pub a: Vec<f64>,
    pub b: f64,
    pub iteration: usize,
    /// Which value variable the cut bounds (0 when aggregated).
    pub group: usize,
}

impl OptimalityCut {
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + self.b
    }
}

/// Primal optimum and cone multipliers of one operation sub-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemDualSolution {
    pub label: String,
    pub primal_value: f64,
    pub dual_value: f64,
    pub duals: Vec<ConeDual>,
    pub gap: f64,
    pub y: Vec<f64>,
}

/// Solves every template at `x_hat`; results keep template order.
pub fn solve_all_subproblems(templates: &[ConicTemplate], x_hat: &[f64], threads: usize) -> Result<Vec<SubproblemDualSolution>> {
    let one = |t: &ConicTemplate| -> Result<SubproblemDualSolution> {
        let program = t.instantiate(x_hat)?;
        let sol = solve_robust(&program)?;
        match sol.status {
            SolveStatus::Optimal => Ok(SubproblemDualSolution {
                label: t.label.clone(),
                primal_value: sol.objective_value,
                dual_value: sol.dual_value,
                duals: sol.duals,
                gap: sol.gap,
                y: sol.y,
            }),
            // Shedding makes every sub-problem feasible; reaching this is a modelling bug.
            SolveStatus::Infeasible => Err(Error::Solver(format!("{}: sub-problem infeasible", t.label))),
            other => Err(Error::Solver(format!("{}: sub-problem solve ended with {other:?}", t.label))),
        }
    };
    if threads <= 1 {
        return templates.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    pool.install(|| templates.par_iter().map(one).collect())
}

/// `a = Σ −Aᵀu − μc`, `b = Σ −uᵀe − μf` over the given templates.
pub fn make_cut<'a>(
    pairs: impl IntoIterator<Item = (&'a ConicTemplate, &'a [ConeDual])>,
    dim_x: usize,
    iteration: usize,
    group: usize,
) -> OptimalityCut {
    let mut a = vec![0.0; dim_x];
    let mut b = 0.0;
    for (t, duals) in pairs {
        for (cone, dual) in t.cones.iter().zip(duals) {
            for (ai, v) in a.iter_mut().zip(cone.a.transpose_mul(&dual.u)) {
                *ai -= v;
            }
            for (ai, c) in a.iter_mut().zip(&cone.c) {
                *ai -= dual.mu * c;
            }
            b -= dual.u.iter().zip(&cone.e).map(|(u, e)| u * e).sum::<f64>() + dual.mu * cone.f;
        }
    }
    OptimalityCut { a, b, iteration, group }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: u8,
    #[serde(with = "extended_f64")]
    pub lb: f64,
    #[serde(with = "extended_f64")]
    pub ub: f64,
    #[serde(with = "extended_f64")]
    pub gap: f64,
    pub cuts: usize,
    pub wall_ms: u64,
    /// Master objective at `X̂` (investment plus value estimate).
    pub master_value: f64,
    /// `cᵀX̂ + Σ` sub-problem optima at this iteration's `X̂`.
    pub candidate_ub: f64,
    /// Largest relative primal-dual gap among this iteration's sub-problems.
    pub max_subproblem_gap: f64,
    pub master_nodes: usize,
}

/// JSON has no infinities; bounds that are still open are written as
/// the strings "inf" and "-inf".
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl IterationRecord {
    /// Equality of everything except wall time.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        Self {
            wall_ms: 0,
            ..self.clone()
        } == Self {
            wall_ms: 0,
            ..other.clone()
        }
    }
}

/// Result of checking one cut.
#[derive(Debug, Clone, PartialEq)]
pub struct CutAudit {
    pub iteration: usize,
    pub group: usize,
    /// `|aᵀX̂ + b − Σ optima at X̂| / (1 + |Σ optima|)`.
    pub tightness: f64,
    /// Largest `(aᵀX′ + b − Σ optima at X′) / (1 + |Σ optima|)` over the
    /// random points (positive means the cut overestimates).
    pub worst_validity: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BendersStatus {
    Running,
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct BendersState {
    pub iteration: usize,
    pub lb: f64,
    pub ub: f64,
    pub flag: u8,
    pub gap: f64,
    pub cuts: Vec<OptimalityCut>,
    /// Best phase-1 decision (attains `ub`).
    pub incumbent: Option<FirstStageDecision>,
    pub z_hat: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub audits: Vec<CutAudit>,
    pub ub_resets: usize,
    pub status: BendersStatus,
}

impl BendersState {
    fn new() -> Self {
        Self {
            iteration: 0,
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            flag: 0,
            gap: f64::INFINITY,
            cuts: Vec::new(),
            incumbent: None,
            z_hat: Vec::new(),
            history: Vec::new(),
            audits: Vec::new(),
            ub_resets: 0,
            status: BendersStatus::Running,
        }
    }
}

/// `(UB − LB)/UB`, with the denominator held at $1 or more so a problem
/// whose optimum is zero can still converge.
pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if !(lb.is_finite() && ub.is_finite()) {
        return f64::INFINITY;
    }
    (ub - lb) / ub.abs().max(1.0)
}

/// Runs the decomposition on `inst`.
pub fn run(inst: &PlanningInstance, cfg: &BendersConfig) -> Result<(FirstStageDecision, BendersState)> {
    let prep = PreparedModel::new(inst)?;
    run_prepared(inst, &prep, cfg)
}

pub fn run_prepared(inst: &PlanningInstance, prep: &PreparedModel, cfg: &BendersConfig) -> Result<(FirstStageDecision, BendersState)> {
    cfg.validate()?;
    let dim = prep.layout.dim;
    // Template indices per value variable.
    let groups: Vec<Vec<usize>> = match cfg.cut_mode {
        CutMode::Aggregated => vec![(0..inst.slots.len()).collect()],
        CutMode::PerScenario => (0..inst.scenarios.len())
            .map(|w| (0..inst.slots.len()).filter(|&s| inst.slots[s].scenario == w).collect())
            .collect(),
    };
    let floors: Vec<f64> = match cfg.cut_mode {
        CutMode::Aggregated => vec![inst.z_floor()],
        CutMode::PerScenario => (0..inst.scenarios.len()).map(|w| inst.z_floor_where(|sh| sh.scenario == w)).collect(),
    };
    let mut master = build_master_base(inst, prep, &floors, cfg.mip_gap)?;
    let mut state = BendersState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = Instant::now();
    let mut last_x = FirstStageDecision::zeros(&prep.layout);

    loop {
        if state.flag == 1 && state.gap <= cfg.eps2 {
            state.status = BendersStatus::Converged;
            break;
        }
        if state.iteration >= cfg.max_iterations {
            state.status = BendersStatus::IterationLimit;
            break;
        }
        state.iteration += 1;
        if state.gap <= cfg.eps1 && state.flag == 0 {
            state.ub = f64::INFINITY;
            state.flag = 1;
            state.ub_resets += 1;
        }

        // Master.
        let (y, master_bound, master_value, nodes) = if state.flag == 0 {
            let sol = solve_relaxation(&master.mib)?;
            match sol.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => return Err(Error::Infeasible("first-stage constraints are inconsistent".into())),
                s => return Err(Error::Solver(format!("relaxed master ended with {s:?}"))),
            }
            (sol.y, sol.objective_value, sol.objective_value, 1)
        } else {
            let sol = solve_mib(&master.mib)?;
            match sol.status {
                MibStatus::Optimal => {}
                MibStatus::NodeLimit if !sol.x.is_empty() => {}
                MibStatus::Infeasible => return Err(Error::Infeasible("first-stage constraints are inconsistent".into())),
                s => return Err(Error::Solver(format!("master ended with {s:?}"))),
            }
            (sol.x, sol.bound, sol.objective, sol.nodes)
        };
        let x_hat: Vec<f64> = y[..dim].to_vec();
        state.z_hat = (0..master.z.len()).map(|j| master.z_value(&y, j)).collect();
        state.lb = state.lb.max(master_bound);

        // Sub-problems and the upper bound.
        let subs = solve_all_subproblems(&prep.templates, &x_hat, cfg.threads)?;
        let investment: f64 = prep.cost.iter().zip(&x_hat).map(|(c, x)| c * x).sum();
        let candidate = investment + subs.iter().map(|s| s.dual_value).sum::<f64>();
        if candidate < state.ub {
            state.ub = candidate;
            if state.flag == 1 {
                state.incumbent = Some(FirstStageDecision { values: x_hat.clone() });
            }
        }

        // Cuts.
        for (g, members) in groups.iter().enumerate() {
            let cut = make_cut(
                members.iter().map(|&s| (&prep.templates[s], subs[s].duals.as_slice())),
                dim,
                state.iteration,
                g,
            );
            if cfg.audit_cuts {
                let total: f64 = members.iter().map(|&s| subs[s].primal_value).sum();
                let tightness = (cut.value_at(&x_hat) - total).abs() / (1.0 + total.abs());
                let mut worst = f64::NEG_INFINITY;
                let templates: Vec<ConicTemplate> = members.iter().map(|&s| prep.templates[s].clone()).collect();
                for _ in 0..cfg.audit_points {
                    let xp = sample_feasible_decision(inst, prep, &mut rng)?;
                    let at = solve_all_subproblems(&templates, &xp.values, cfg.threads)?;
                    let value: f64 = at.iter().map(|s| s.primal_value).sum();
                    worst = worst.max((cut.value_at(&xp.values) - value) / (1.0 + value.abs()));
                }
                state.audits.push(CutAudit {
                    iteration: state.iteration,
                    group: g,
                    tightness,
                    worst_validity: worst,
                    points: cfg.audit_points,
                });
            }
            master.add_cut(g, &cut.a, cut.b);
            state.cuts.push(cut);
        }

        state.gap = relative_gap(state.lb, state.ub);
        let record = IterationRecord {
            iteration: state.iteration,
            phase: state.flag,
            lb: state.lb,
            ub: state.ub,
            gap: state.gap,
            cuts: state.cuts.len(),
            wall_ms: start.elapsed().as_millis() as u64,
            master_value,
            candidate_ub: candidate,
            max_subproblem_gap: subs.iter().map(|s| s.gap).fold(0.0, f64::max),
            master_nodes: nodes,
        };
        info!(
            "iter={} phase={} lb={:.6} ub={:.6} gap={:.6e} cuts={} wall_ms={}",
            record.iteration, record.phase, record.lb, record.ub, record.gap, record.cuts, record.wall_ms
        );
        state.history.push(record);
        last_x = FirstStageDecision { values: x_hat };
    }

    let decision = state.incumbent.clone().unwrap_or(last_x);
    Ok((decision, state))
}

/// Solves the extensive form directly by branch-and-bound; the reference
/// the decomposition is measured against.
pub fn solve_monolithic(inst: &PlanningInstance, prep: &PreparedModel, mip_gap: f64) -> Result<(FirstStageDecision, MibSolution)> {
    let ef = build_extensive_form(inst, prep, mip_gap)?;
    let sol = solve_mib(&ef.mib)?;
    match sol.status {
        MibStatus::Optimal => {}
        MibStatus::NodeLimit if !sol.x.is_empty() => {}
        MibStatus::Infeasible => return Err(Error::Infeasible("extensive form is infeasible".into())),
        s => return Err(Error::Solver(format!("extensive form ended with {s:?}"))),
    }
    let x = FirstStageDecision {
        values: sol.x[..prep.layout.dim].to_vec(),
    };
    Ok((x, sol))
}

/// Strong-duality diagnostics of one sub-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub label: String,
    pub primal: f64,
    /// Optimum of the explicitly dualized program.
    pub dual: f64,
    pub relative_gap: f64,
    pub slater: SlaterReport,
    pub max_exactness_residual: f64,
    pub exact: bool,
    pub flagged: bool,
}

/// Solves each sub-problem and its explicit dual at `x_hat`, and runs the
/// strict-feasibility construction. Flags gaps above `1e-5` and missing
/// strictly feasible points.
pub fn verify_strong_duality(inst: &PlanningInstance, prep: &PreparedModel, x_hat: &[f64]) -> Result<Vec<DualityReport>> {
    prep.templates
        .iter()
        .zip(&inst.slots)
        .map(|(t, sh)| {
            let program = t.instantiate(x_hat)?;
            let primal = solve_robust(&program)?;
            let dp = dualize(&program);
            let dual_sol = solve_robust(&dp.program)?;
            let dual = dp.dual_value(dual_sol.objective_value);
            let p = primal.objective_value;
            let relative_gap = if primal.is_optimal() && dual_sol.is_optimal() {
                (p - dual).abs() / p.abs().max(1.0)
            } else {
                f64::INFINITY
            };
            let slater = slater_check(inst, &prep.radial, sh);
            let residual = exactness_residual(&primal.y, inst, &prep.radial);
            Ok(DualityReport {
                label: t.label.clone(),
                primal: p,
                dual,
                relative_gap,
                flagged: relative_gap > 1e-5 || !slater.strictly_feasible,
                slater,
                max_exactness_residual: residual.iter().cloned().fold(0.0, f64::max),
                exact: relaxation_is_exact(&primal.y, inst, &prep.radial),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::desk_instance;
    use crate::model::tests::tiny_instance;

    fn desk() -> (PlanningInstance, PreparedModel) {
        let inst = desk_instance().unwrap();
        let prep = PreparedModel::new(&inst).unwrap();
        (inst, prep)
    }

    #[test]
    fn gap_definition() {
        assert_eq!(relative_gap(90.0, 100.0), 0.1);
        assert!(relative_gap(f64::NEG_INFINITY, 100.0).is_infinite());
        assert_eq!(relative_gap(-1.0, 0.0), 1.0);
        assert!(relative_gap(-5.2e-6, -2.5e-6) < 1e-5);
    }

    #[test]
    fn zero_duals_give_a_vacuous_cut() {
        let (_, prep) = desk();
        let duals: Vec<Vec<ConeDual>> = prep.templates.iter().map(|t| t.cones.iter().map(|c| ConeDual::zero(c.rows())).collect()).collect();
        let cut = make_cut(prep.templates.iter().zip(&duals).map(|(t, d)| (t, d.as_slice())), prep.layout.dim, 1, 0);
        assert!(cut.a.iter().all(|v| *v == 0.0));
        assert_eq!(cut.b, 0.0);
    }

    #[test]
    fn empty_problem_converges_to_zero() {
        // No traffic, no load, and a range that needs no charging stop.
        let mut inst = tiny_instance(0.0, 0.0);
        inst.classes[0].range_km = 1000.0;
        let (x, state) = run(&inst, &BendersConfig::default()).unwrap();
        assert_eq!(state.status, BendersStatus::Converged);
        assert!(state.history.len() <= 4, "{:?}", state.history);
        assert!(x.values.iter().all(|v| v.abs() < 1e-6), "{:?}", x.values);
        assert!(state.ub.abs() < 1e-3);
    }

    #[test]
    fn desk_converges_with_tight_cuts() {
        let (inst, prep) = desk();
        let cfg = BendersConfig {
            audit_cuts: true,
            audit_points: 4,
            ..BendersConfig::default()
        };
        let (x, state) = run_prepared(&inst, &prep, &cfg).unwrap();
        assert_eq!(state.status, BendersStatus::Converged);
        assert_eq!(state.ub_resets, 1);
        assert!(state.lb <= state.ub);
        for a in &state.audits {
            assert!(a.tightness <= 1e-5, "{a:?}");
            assert!(a.worst_validity <= 1e-5, "{a:?}");
        }
        for r in &state.history {
            assert!(r.max_subproblem_gap <= 1e-5, "{r:?}");
        }
        for phase in 0..2 {
            let h: Vec<_> = state.history.iter().filter(|r| r.phase == phase).collect();
            for w in h.windows(2) {
                assert!(w[1].lb >= w[0].lb - 1e-9 * w[0].lb.abs());
                assert!(w[1].ub <= w[0].ub);
            }
        }
        assert!(verify_strong_duality(&inst, &prep, &x.values).unwrap().iter().all(|r| !r.flagged));
    }

    #[test]
    fn equal_tolerances_run_both_phases() {
        let (inst, prep) = desk();
        let cfg = BendersConfig {
            eps1: 0.02,
            eps2: 0.02,
            ..BendersConfig::default()
        };
        let (_, state) = run_prepared(&inst, &prep, &cfg).unwrap();
        assert_eq!(state.status, BendersStatus::Converged);
        let last0 = state.history.iter().filter(|r| r.phase == 0).last().unwrap();
        let first1 = state.history.iter().find(|r| r.phase == 1).unwrap();
        assert!(first1.lb >= last0.lb);
    }

    #[test]
    fn thread_count_does_not_change_the_run() {
        let (inst, prep) = desk();
        let one = run_prepared(&inst, &prep, &BendersConfig::default()).unwrap();
        let many = run_prepared(&inst, &prep, &BendersConfig { threads: 4, ..BendersConfig::default() }).unwrap();
        assert_eq!(one.0, many.0);
        assert_eq!(one.1.history.len(), many.1.history.len());
        assert!(one.1.history.iter().zip(&many.1.history).all(|(a, b)| a.same_trajectory(b)));

        let x = &one.0.values;
        let a = solve_all_subproblems(&prep.templates, x, 1).unwrap();
        let b = solve_all_subproblems(&prep.templates, x, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_scenario_cuts_reach_the_same_cost() {
        let (inst, prep) = desk();
        let (xa, sa) = run_prepared(&inst, &prep, &BendersConfig::default()).unwrap();
        let (xs, ss) = run_prepared(&inst, &prep, &BendersConfig { cut_mode: CutMode::PerScenario, ..BendersConfig::default() }).unwrap();
        assert_eq!(ss.status, BendersStatus::Converged);
        assert_eq!(ss.cuts.len(), ss.history.len() * inst.scenarios.len());
        let cost = |x: &FirstStageDecision| {
            let inv: f64 = prep.cost.iter().zip(&x.values).map(|(c, v)| c * v).sum();
            inv + solve_all_subproblems(&prep.templates, &x.values, 1).unwrap().iter().map(|s| s.primal_value).sum::<f64>()
        };
        let (ca, cs) = (cost(&xa), cost(&xs));
        assert!((ca - cs).abs() / ca <= 0.02 + 1e-9, "{ca} vs {cs}, {} {}", sa.gap, ss.gap);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let (inst, prep) = desk();
        let (_, state) = run_prepared(&inst, &prep, &BendersConfig { max_iterations: 2, ..BendersConfig::default() }).unwrap();
        assert_eq!(state.status, BendersStatus::IterationLimit);
        assert_eq!(state.history.len(), 2);
    }

    #[test]
    fn history_round_trips_through_json() {
        let r = IterationRecord {
            iteration: 1,
            phase: 0,
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            gap: f64::INFINITY,
            cuts: 1,
            wall_ms: 3,
            master_value: -5.0,
            candidate_ub: 7.0,
            max_subproblem_gap: 0.0,
            master_nodes: 1,
        };
        let text = serde_json::to_string(&r).unwrap();
        let back: IterationRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
