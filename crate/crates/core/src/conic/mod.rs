//! Second-order cone programs in the standard form
//!
//! ```text
//! min  dᵀy   s.t.  ‖B_j y + A_j x + e_j‖₂ ≤ d_jᵀy + c_jᵀx + f_j   for every block j
//! ```
//!
//! A [`ConicTemplate`] keeps the first-stage vector `x` symbolic. Fixing `x`
//! with [`ConicTemplate::instantiate`] yields a [`ConicProgram`] over `y` only,
//! which [`solve`] handles and [`dualize`] turns into its conic dual. A block
//! with zero norm rows is the affine inequality `0 ≤ d_jᵀy + c_jᵀx + f_j`;
//! equalities are stored as two opposing affine blocks.

mod dual;
mod solver;
mod sparse;

use std::fmt::Write as _;

pub use dual::{dualize, DualProgram};
pub use solver::{solve, solve_robust, ConeDual, ConicSolution, SolveStatus, DEFAULT_TOL, TOL_CASCADE};
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};

/// Sparse affine function of one variable vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(k: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: k,
        }
    }

    pub fn var(i: usize, coef: f64) -> Self {
        Self::new().term(i, coef)
    }

    pub fn term(mut self, i: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((i, coef));
        }
        self
    }

    pub fn plus(mut self, k: f64) -> Self {
        self.constant += k;
        self
    }

    pub fn negated(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, v)| (i, -v)).collect(),
            constant: -self.constant,
        }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * v[i]).sum::<f64>()
    }

    fn dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, c) in &self.terms {
            out[i] += c;
        }
        out
    }
}

/// Affine function of both the first-stage vector `x` and the second-stage
/// vector `y`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub x: Vec<(usize, f64)>,
    pub y: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(k: f64) -> Self {
        Self {
            constant: k,
            ..Self::default()
        }
    }

    pub fn y(mut self, i: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.y.push((i, coef));
        }
        self
    }

    pub fn x(mut self, i: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.x.push((i, coef));
        }
        self
    }

    pub fn plus(mut self, k: f64) -> Self {
        self.constant += k;
        self
    }

    pub fn negated(&self) -> Self {
        Self {
            x: self.x.iter().map(|&(i, v)| (i, -v)).collect(),
            y: self.y.iter().map(|&(i, v)| (i, -v)).collect(),
            constant: -self.constant,
        }
    }
}

/// One cone `‖B y + A x + e‖₂ ≤ dᵀy + cᵀx + f` of a template.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub e: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub f: f64,
}

impl ConeBlock {
    /// Builds a block from its norm rows and its right-hand side.
    pub fn from_exprs(rows: &[AffineExpr], bound: &AffineExpr, dim_x: usize, dim_y: usize) -> Self {
        let mut a = SparseMatrix::new(rows.len(), dim_x);
        let mut b = SparseMatrix::new(rows.len(), dim_y);
        let mut e = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            for &(i, v) in &row.x {
                a.push(r, i, v);
            }
            for &(i, v) in &row.y {
                b.push(r, i, v);
            }
            e.push(row.constant);
        }
        let mut c = vec![0.0; dim_x];
        for &(i, v) in &bound.x {
            c[i] += v;
        }
        let mut d = vec![0.0; dim_y];
        for &(i, v) in &bound.y {
            d[i] += v;
        }
        Self {
            a,
            b,
            e,
            c,
            d,
            f: bound.constant,
        }
    }

    pub fn rows(&self) -> usize {
        self.e.len()
    }

    pub fn is_affine(&self) -> bool {
        self.rows() == 0
    }
}

/// A second-order cone program parametric in the first-stage decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicTemplate {
    pub objective_y: Vec<f64>,
    pub cones: Vec<ConeBlock>,
    pub dim_x: usize,
    pub dim_y: usize,
    pub label: String,
}

impl ConicTemplate {
    pub fn new(dim_x: usize, dim_y: usize, label: impl Into<String>) -> Self {
        Self {
            objective_y: vec![0.0; dim_y],
            cones: Vec::new(),
            dim_x,
            dim_y,
            label: label.into(),
        }
    }

    /// `‖rows‖₂ ≤ bound`.
    pub fn push_soc(&mut self, rows: &[AffineExpr], bound: &AffineExpr) {
        let block = ConeBlock::from_exprs(rows, bound, self.dim_x, self.dim_y);
        self.cones.push(block);
    }

    /// `expr ≥ 0`.
    pub fn push_nonneg(&mut self, expr: &AffineExpr) {
        self.push_soc(&[], expr);
    }

    /// `expr = 0`, stored as the opposing pair `expr ≥ 0`, `−expr ≥ 0`.
    pub fn push_equality(&mut self, expr: &AffineExpr) {
        self.push_nonneg(expr);
        self.push_nonneg(&expr.negated());
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective_y.len() != self.dim_y {
            return Err(Error::Dimension {
                context: "template objective",
                expected: self.dim_y,
                got: self.objective_y.len(),
            });
        }
        for cone in &self.cones {
            check_block(cone, self.dim_x, self.dim_y)?;
        }
        Ok(())
    }

    /// Fixes the first-stage vector: `ē = A x̂ + e`, `f̄ = cᵀx̂ + f`.
    pub fn instantiate(&self, x_hat: &[f64]) -> Result<ConicProgram> {
        if x_hat.len() != self.dim_x {
            return Err(Error::Dimension {
                context: "instantiate",
                expected: self.dim_x,
                got: x_hat.len(),
            });
        }
        let cones = self
            .cones
            .iter()
            .map(|block| {
                let ax = block.a.mul_vec(x_hat);
                let e = block.e.iter().zip(&ax).map(|(e, ax)| e + ax).collect();
                Cone {
                    b: block.b.clone(),
                    d: block.d.clone(),
                    e,
                    f: block.f + dot(&block.c, x_hat),
                }
            })
            .collect();
        Ok(ConicProgram {
            objective: self.objective_y.clone(),
            cones,
            dim: self.dim_y,
        })
    }

    /// `Σ_j −u_jᵀ(A_j x + e_j) − μ_j (c_jᵀx + f_j)`; affine in `x`.
    pub fn dual_objective_at(&self, duals: &[ConeDual], x: &[f64]) -> Result<f64> {
        if x.len() != self.dim_x {
            return Err(Error::Dimension {
                context: "dual_objective_at x",
                expected: self.dim_x,
                got: x.len(),
            });
        }
        if duals.len() != self.cones.len() {
            return Err(Error::Dimension {
                context: "dual_objective_at cones",
                expected: self.cones.len(),
                got: duals.len(),
            });
        }
        let mut total = 0.0;
        for (block, dual) in self.cones.iter().zip(duals) {
            if dual.u.len() != block.rows() {
                return Err(Error::Dimension {
                    context: "dual_objective_at u",
                    expected: block.rows(),
                    got: dual.u.len(),
                });
            }
            let ax = block.a.mul_vec(x);
            let shift: f64 = dual
                .u
                .iter()
                .zip(ax.iter().zip(&block.e))
                .map(|(u, (ax, e))| u * (ax + e))
                .sum();
            total -= shift + dual.mu * (dot(&block.c, x) + block.f);
        }
        Ok(total)
    }
}

fn check_block(block: &ConeBlock, dim_x: usize, dim_y: usize) -> Result<()> {
    let rows = block.e.len();
    let checks = [
        ("cone A rows", rows, block.a.rows()),
        ("cone B rows", rows, block.b.rows()),
        ("cone A cols", dim_x, block.a.cols()),
        ("cone B cols", dim_y, block.b.cols()),
        ("cone c length", dim_x, block.c.len()),
        ("cone d length", dim_y, block.d.len()),
    ];
    for (context, expected, got) in checks {
        if expected != got {
            return Err(Error::Dimension {
                context,
                expected,
                got,
            });
        }
    }
    Ok(())
}

/// An instantiated cone `‖B y + e‖₂ ≤ dᵀy + f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    pub b: SparseMatrix,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub f: f64,
}

impl Cone {
    pub fn rows(&self) -> usize {
        self.e.len()
    }

    pub fn is_affine(&self) -> bool {
        self.e.is_empty()
    }

    /// `dᵀy + f − ‖B y + e‖₂`; nonnegative exactly when `y` satisfies the cone.
    pub fn slack(&self, y: &[f64]) -> f64 {
        let by = self.b.mul_vec(y);
        let norm = by
            .iter()
            .zip(&self.e)
            .map(|(a, b)| (a + b) * (a + b))
            .sum::<f64>()
            .sqrt();
        dot(&self.d, y) + self.f - norm
    }
}

/// A second-order cone program over a single variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub cones: Vec<Cone>,
    pub dim: usize,
}

impl ConicProgram {
    pub fn new(dim: usize) -> Self {
        Self {
            objective: vec![0.0; dim],
            cones: Vec::new(),
            dim,
        }
    }

    pub fn push_soc(&mut self, rows: &[LinExpr], bound: &LinExpr) {
        let mut b = SparseMatrix::new(rows.len(), self.dim);
        let mut e = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            for &(i, v) in &row.terms {
                b.push(r, i, v);
            }
            e.push(row.constant);
        }
        self.cones.push(Cone {
            b,
            d: bound.dense(self.dim),
            e,
            f: bound.constant,
        });
    }

    pub fn push_nonneg(&mut self, expr: &LinExpr) {
        self.push_soc(&[], expr);
    }

    pub fn push_equality(&mut self, expr: &LinExpr) {
        self.push_nonneg(expr);
        self.push_nonneg(&expr.negated());
    }

    /// Appends `count` fresh variables (zero objective) and returns the index
    /// of the first one.
    pub fn add_vars(&mut self, count: usize) -> usize {
        let first = self.dim;
        self.dim += count;
        self.objective.resize(self.dim, 0.0);
        for cone in &mut self.cones {
            cone.d.resize(self.dim, 0.0);
            cone.b = cone.b.remap_cols(self.dim, |c| c);
        }
        first
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.dim {
            return Err(Error::Dimension {
                context: "program objective",
                expected: self.dim,
                got: self.objective.len(),
            });
        }
        for cone in &self.cones {
            if cone.b.rows() != cone.e.len() {
                return Err(Error::Dimension {
                    context: "cone B rows",
                    expected: cone.e.len(),
                    got: cone.b.rows(),
                });
            }
            if cone.b.cols() != self.dim || cone.d.len() != self.dim {
                return Err(Error::Dimension {
                    context: "cone columns",
                    expected: self.dim,
                    got: cone.d.len().min(cone.b.cols()),
                });
            }
        }
        Ok(())
    }

    /// Substitutes `y_i = v` for each `(i, v)` in `fixed` and removes those
    /// columns. Cones left without variables are checked and dropped.
    pub fn fix_variables(&self, fixed: &[(usize, f64)], tol: f64) -> FixedProgram {
        let mut value = vec![None; self.dim];
        for &(i, v) in fixed {
            value[i] = Some(v);
        }
        let kept: Vec<usize> = (0..self.dim).filter(|&i| value[i].is_none()).collect();
        let mut new_col = vec![usize::MAX; self.dim];
        for (k, &i) in kept.iter().enumerate() {
            new_col[i] = k;
        }
        let offset: f64 = fixed.iter().map(|&(i, v)| self.objective[i] * v).sum();
        let mut program = ConicProgram::new(kept.len());
        program.objective = kept.iter().map(|&i| self.objective[i]).collect();
        let mut cone_map = Vec::with_capacity(self.cones.len());
        let mut infeasible = false;
        for cone in &self.cones {
            let mut e = cone.e.clone();
            let mut f = cone.f;
            let mut b = SparseMatrix::new(cone.rows(), kept.len());
            for &(r, c, v) in cone.b.iter() {
                match value[c] {
                    Some(x) => e[r] += v * x,
                    None => b.push(r, new_col[c], v),
                }
            }
            let mut d = vec![0.0; kept.len()];
            for (c, &v) in cone.d.iter().enumerate() {
                match value[c] {
                    Some(x) => f += v * x,
                    None => d[new_col[c]] = v,
                }
            }
            if b.nnz() == 0 && d.iter().all(|v| *v == 0.0) {
                if norm(&e) > f + tol * (1.0 + f.abs()) {
                    infeasible = true;
                }
                cone_map.push(None);
                continue;
            }
            cone_map.push(Some(program.cones.len()));
            program.cones.push(Cone { b, d, e, f });
        }
        FixedProgram {
            program,
            kept,
            offset,
            cone_map,
            infeasible,
            full: self.dim,
            fixed: fixed.to_vec(),
        }
    }

    pub fn objective_at(&self, y: &[f64]) -> f64 {
        dot(&self.objective, y)
    }

    /// Largest violation `max(0, −slack)` over all cones.
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        self.cones
            .iter()
            .map(|c| (-c.slack(y)).max(0.0))
            .fold(0.0, f64::max)
    }

    /// `Σ_j −u_jᵀē_j − μ_j f̄_j`.
    pub fn dual_objective(&self, duals: &[ConeDual]) -> f64 {
        self.cones
            .iter()
            .zip(duals)
            .map(|(cone, dual)| -dot(&dual.u, &cone.e) - dual.mu * cone.f)
            .sum()
    }

    /// Text dump: the objective, then one section per cone with `d`, `B`
    /// and `e` in coordinate form.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conic_program dim={} cones={}", self.dim, self.cones.len());
        let _ = writeln!(out, "objective");
        for (i, v) in self.objective.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(out, "{i} {v:e}");
        }
        for (j, cone) in self.cones.iter().enumerate() {
            let _ = writeln!(out, "cone {j} rows={} f={:e}", cone.rows(), cone.f);
            let _ = writeln!(out, "d");
            for (i, v) in cone.d.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                let _ = writeln!(out, "{i} {v:e}");
            }
            let _ = writeln!(out, "B");
            for &(r, c, v) in cone.b.iter() {
                let _ = writeln!(out, "{r} {c} {v:e}");
            }
            let _ = writeln!(out, "e");
            for (r, v) in cone.e.iter().enumerate() {
                let _ = writeln!(out, "{r} {v:e}");
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}


/// A program with some variables fixed; see [`ConicProgram::fix_variables`].
#[derive(Debug, Clone)]
pub struct FixedProgram {
    pub program: ConicProgram,
    /// Original index of each remaining variable.
    pub kept: Vec<usize>,
    /// Objective contribution of the fixed variables.
    pub offset: f64,
    /// Reduced cone index of each original cone, `None` if dropped.
    pub cone_map: Vec<Option<usize>>,
    /// A dropped constant cone was violated.
    pub infeasible: bool,
    full: usize,
    fixed: Vec<(usize, f64)>,
}

impl FixedProgram {
    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full];
        for (k, &i) in self.kept.iter().enumerate() {
            out[i] = y[k];
        }
        for &(i, v) in &self.fixed {
            out[i] = v;
        }
        out
    }

    /// Solves the reduced program and maps the result back to the original
    /// variables and cones.
    pub fn solve(&self, original: &ConicProgram) -> Result<ConicSolution> {
        if self.infeasible {
            return Ok(ConicSolution::failed(original, SolveStatus::Infeasible, 0));
        }
        let sol = solve_robust(&self.program)?;
        if sol.status != SolveStatus::Optimal {
            return Ok(ConicSolution::failed(original, sol.status, sol.iterations));
        }
        let duals = original
            .cones
            .iter()
            .zip(&self.cone_map)
            .map(|(c, m)| match m {
                Some(k) => sol.duals[*k].clone(),
                None => ConeDual::zero(c.rows()),
            })
            .collect();
        Ok(ConicSolution {
            status: sol.status,
            y: self.expand(&sol.y),
            objective_value: sol.objective_value + self.offset,
            duals,
            dual_value: sol.dual_value + self.offset,
            gap: sol.gap,
            iterations: sol.iterations,
        })
    }
}
