//! Branch-and-bound over binary variables with conic relaxations.
//!
//! Nodes are explored best-bound first (deeper nodes first among equal
//! bounds, then creation order). The branching variable is the most
//! fractional binary, lowest index on ties. Everything runs on one worker,
//! so results are deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::warn;

use crate::conic::{solve_robust, ConicProgram, ConicSolution, LinExpr, SolveStatus, TOL_CASCADE};
use crate::error::{Error, Result};

/// Distance from 0/1 under which a binary counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MixedBinaryConicProgram {
    pub program: ConicProgram,
    pub binaries: Vec<usize>,
    pub gap_target: f64,
    pub max_nodes: usize,
}

impl MixedBinaryConicProgram {
    pub fn new(program: ConicProgram, mut binaries: Vec<usize>, gap_target: f64) -> Result<Self> {
        program.validate()?;
        binaries.sort_unstable();
        binaries.dedup();
        if binaries.iter().any(|&b| b >= program.dim) {
            return Err(Error::Input("binary index outside the variable vector".into()));
        }
        if !(gap_target > 0.0) {
            return Err(Error::Input(format!("gap target must be positive, got {gap_target}")));
        }
        Ok(Self {
            program,
            binaries,
            gap_target,
            max_nodes: 200_000,
        })
    }

    /// The continuous relaxation with `0 ≤ b ≤ 1` for every binary and the
    /// given fixings as equalities.
    /// Continuous relaxation with `0 ≤ b ≤ 1` on every binary.
    fn relaxation(&self) -> ConicProgram {
        let mut p = self.program.clone();
        for &b in &self.binaries {
            p.push_nonneg(&LinExpr::var(b, 1.0));
            p.push_nonneg(&LinExpr::var(b, -1.0).plus(1.0));
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MibStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node budget exhausted; `x` is the best incumbent if one was found.
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MibSolution {
    pub status: MibStatus,
    /// Incumbent with binaries rounded to exact 0/1. Empty without one.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Proven lower bound.
    pub bound: f64,
    pub nodes: usize,
    /// Nodes dropped after two numerical failures.
    pub failed_nodes: usize,
}

impl MibSolution {
    pub fn gap(&self) -> f64 {
        (self.objective - self.bound) / self.objective.abs().max(1.0)
    }
}

/// Solves the continuous relaxation (binaries boxed to `[0, 1]`).
pub fn solve_relaxation(mib: &MixedBinaryConicProgram) -> Result<ConicSolution> {
    solve_robust(&mib.relaxation())
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixed: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the greatest: lowest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

fn solve_node(mib: &MixedBinaryConicProgram, fixed: &[(usize, f64)]) -> Result<ConicSolution> {
    // Fixed binaries are substituted out; keeping them as equalities next
    // to their box rows leaves the relaxation without an interior.
    let p = mib.relaxation();
    p.fix_variables(fixed, TOL_CASCADE[TOL_CASCADE.len() - 1]).solve(&p)
}

/// Most fractional binary, lowest index on ties; `None` if all are integral.
fn branching_variable(binaries: &[usize], x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &b in binaries {
        let v = x[b].clamp(0.0, 1.0);
        let frac = v.min(1.0 - v);
        if frac > INTEGRALITY_TOL && best.map_or(true, |(_, f)| frac > f) {
            best = Some((b, frac));
        }
    }
    best.map(|(b, _)| b)
}

fn within_gap(incumbent: f64, bound: f64, gap: f64) -> bool {
    (incumbent - bound) / incumbent.abs().max(1.0) <= gap
}

/// Branch-and-bound to relative gap `mib.gap_target`.
pub fn solve_mib(mib: &MixedBinaryConicProgram) -> Result<MibSolution> {
    let mut out = MibSolution {
        status: MibStatus::NodeLimit,
        x: Vec::new(),
        objective: f64::INFINITY,
        bound: f64::NEG_INFINITY,
        nodes: 0,
        failed_nodes: 0,
    };
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        fixed: Vec::new(),
    });
    let mut root = true;
    while let Some(node) = heap.pop() {
        // Best-first: the popped bound is the global lower bound.
        out.bound = out.bound.max(node.bound.min(out.objective));
        if out.objective.is_finite() && within_gap(out.objective, node.bound, mib.gap_target) {
            out.status = MibStatus::Optimal;
            return Ok(out);
        }
        if out.nodes >= mib.max_nodes {
            heap.push(node);
            break;
        }
        out.nodes += 1;
        let sol = solve_node(mib, &node.fixed)?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                if root {
                    out.status = MibStatus::Infeasible;
                    return Ok(out);
                }
                continue;
            }
            SolveStatus::Unbounded if root => {
                out.status = MibStatus::Unbounded;
                return Ok(out);
            }
            _ => {
                if root {
                    return Err(Error::Solver(format!("root relaxation failed: {:?}", sol.status)));
                }
                warn!("branch-and-bound node dropped after numerical failure at depth {}", node.depth);
                out.failed_nodes += 1;
                continue;
            }
        }
        root = false;
        let obj = sol.objective_value;
        if obj >= out.objective {
            continue;
        }
        match branching_variable(&mib.binaries, &sol.y) {
            None => {
                if obj < out.objective {
                    let mut x = sol.y;
                    for &b in &mib.binaries {
                        x[b] = x[b].round().clamp(0.0, 1.0);
                    }
                    out.x = x;
                    out.objective = obj;
                }
            }
            Some(b) => {
                for v in [0.0, 1.0] {
                    seq += 1;
                    let mut fixed = node.fixed.clone();
                    fixed.push((b, v));
                    heap.push(Node {
                        bound: obj,
                        depth: node.depth + 1,
                        seq,
                        fixed,
                    });
                }
            }
        }
    }
    if heap.is_empty() {
        // Tree exhausted: every leaf was fathomed against the incumbent.
        if out.objective.is_finite() {
            out.status = MibStatus::Optimal;
            out.bound = out.objective;
        } else {
            out.status = MibStatus::Infeasible;
        }
    }
    Ok(out)
}

/// Re-solves with every binary fixed to its value in `x`.
pub fn solve_with_binaries_fixed(mib: &MixedBinaryConicProgram, x: &[f64]) -> Result<ConicSolution> {
    let fixed: Vec<(usize, f64)> = mib.binaries.iter().map(|&b| (b, x[b].round())).collect();
    solve_node(mib, &fixed)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min −3a − 2.5b − c  s.t. ‖(a, b, c)‖ ≤ 1.5, c ≥ 0, a and b binary.
    fn knapsack() -> MixedBinaryConicProgram {
        let mut p = ConicProgram::new(3);
        p.objective = vec![-3.0, -2.5, -1.0];
        p.push_soc(
            &[LinExpr::var(0, 1.0), LinExpr::var(1, 1.0), LinExpr::var(2, 1.0)],
            &LinExpr::constant(1.5),
        );
        p.push_nonneg(&LinExpr::var(2, 1.0));
        MixedBinaryConicProgram::new(p, vec![0, 1], 1e-6).unwrap()
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let mib = knapsack();
        // Closed-form leaves: c = sqrt(2.25 − a² − b²).
        let mut best = f64::INFINITY;
        let mut arg = (0.0, 0.0);
        for a in [0.0, 1.0] {
            for b in [0.0, 1.0] {
                let c = (2.25f64 - a * a - b * b).sqrt();
                let v = -3.0 * a - 2.5 * b - c;
                if v < best {
                    best = v;
                    arg = (a, b);
                }
            }
        }
        let s = solve_mib(&mib).unwrap();
        assert_eq!(s.status, MibStatus::Optimal);
        assert!((s.objective - best).abs() < 1e-6);
        assert_eq!((s.x[0], s.x[1]), arg);
        assert!(s.bound <= s.objective + 1e-9);
        let relaxed = solve_relaxation(&mib).unwrap();
        assert!(relaxed.objective_value <= s.objective + 1e-7);
    }

    #[test]
    fn integral_root_is_one_node() {
        let mut p = ConicProgram::new(2);
        p.objective = vec![1.0, 1.0];
        p.push_nonneg(&LinExpr::var(1, 1.0).plus(-0.3));
        let mib = MixedBinaryConicProgram::new(p, vec![0], 1e-6).unwrap();
        let s = solve_mib(&mib).unwrap();
        assert_eq!(s.status, MibStatus::Optimal);
        assert_eq!(s.nodes, 1);
        assert_eq!(s.x[0], 0.0);
        assert!((s.objective - 0.3).abs() < 1e-7);
    }

    #[test]
    fn loose_gap_stops_early() {
        // Relaxation −6.06..., integral optimum −6: about 1% apart.
        let mut mib = knapsack();
        mib.gap_target = 0.5;
        let s = solve_mib(&mib).unwrap();
        assert_eq!(s.status, MibStatus::Optimal);
        assert!(s.nodes <= 3, "explored {}", s.nodes);
        assert!(s.gap() <= 0.5);
    }

    #[test]
    fn bound_fixing_is_respected() {
        let mut p = ConicProgram::new(1);
        p.objective = vec![-1.0];
        p.push_nonneg(&LinExpr::var(0, -1.0));
        let mib = MixedBinaryConicProgram::new(p, vec![0], 1e-6).unwrap();
        let r = solve_relaxation(&mib).unwrap();
        assert!(r.y[0].abs() < 1e-7);
    }

    #[test]
    fn symmetric_relaxation_is_half() {
        // min t s.t. ‖x − 0.5‖ ≤ t
        let mut p = ConicProgram::new(2);
        p.objective = vec![0.0, 1.0];
        p.push_soc(&[LinExpr::var(0, 1.0).plus(-0.5)], &LinExpr::var(1, 1.0));
        let mib = MixedBinaryConicProgram::new(p, vec![0], 1e-6).unwrap();
        let r = solve_relaxation(&mib).unwrap();
        assert!((r.y[0] - 0.5).abs() < 1e-7);
        let s = solve_mib(&mib).unwrap();
        assert!((s.objective - 0.5).abs() < 1e-6);
        // Tie between the two children: the 0 branch is created first.
        assert_eq!(s.x[0], 0.0);
    }

    #[test]
    fn infeasible_root() {
        let mut p = ConicProgram::new(1);
        p.objective = vec![1.0];
        p.push_nonneg(&LinExpr::var(0, 1.0).plus(-2.0));
        let mib = MixedBinaryConicProgram::new(p, vec![0], 1e-6).unwrap();
        assert_eq!(solve_mib(&mib).unwrap().status, MibStatus::Infeasible);
    }

    #[test]
    fn integral_infeasible_after_branching() {
        // 0.2 ≤ b ≤ 0.8 admits fractional points only.
        let mut p = ConicProgram::new(1);
        p.objective = vec![1.0];
        p.push_nonneg(&LinExpr::var(0, 1.0).plus(-0.2));
        p.push_nonneg(&LinExpr::var(0, -1.0).plus(0.8));
        let mib = MixedBinaryConicProgram::new(p, vec![0], 1e-6).unwrap();
        assert_eq!(solve_mib(&mib).unwrap().status, MibStatus::Infeasible);
    }

    #[test]
    fn refixing_reproduces_incumbent() {
        let mib = knapsack();
        let s = solve_mib(&mib).unwrap();
        let r = solve_with_binaries_fixed(&mib, &s.x).unwrap();
        assert!((r.objective_value - s.objective).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let a = solve_mib(&knapsack()).unwrap();
        let b = solve_mib(&knapsack()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let p = ConicProgram::new(1);
        assert!(MixedBinaryConicProgram::new(p.clone(), vec![3], 0.1).is_err());
        assert!(MixedBinaryConicProgram::new(p, vec![0], 0.0).is_err());
    }
}
