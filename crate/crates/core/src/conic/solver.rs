use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{dot, ConicProgram};
use crate::error::{Error, Result};

/// Sub-problem tolerance used throughout unless a caller overrides it.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Tolerances tried in turn by [`solve_robust`].
pub const TOL_CASCADE: [f64; 3] = [DEFAULT_TOL, 1e-8, 1e-6];

const MAX_ITER: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Multipliers of one cone: `μ ≥ ‖u‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeDual {
    pub mu: f64,
    pub u: Vec<f64>,
}

impl ConeDual {
    pub fn zero(rows: usize) -> Self {
        Self {
            mu: 0.0,
            u: vec![0.0; rows],
        }
    }

    pub fn norm_u(&self) -> f64 {
        self.u.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Pulls `u` back into the ball of radius `μ` (and `μ` to be nonnegative).
    fn project(&mut self) {
        if self.mu < 0.0 {
            self.mu = 0.0;
        }
        let n = self.norm_u();
        if n > self.mu {
            let s = if n > 0.0 { self.mu / n } else { 0.0 };
            self.u.iter_mut().for_each(|v| *v *= s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    pub objective_value: f64,
    /// One entry per cone of the program, in program order.
    pub duals: Vec<ConeDual>,
    /// `Σ −uᵀē − μ f̄` at the returned (projected) duals.
    pub dual_value: f64,
    /// `|primal − dual| / max(1, |primal|)`.
    pub gap: f64,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub(crate) fn failed(program: &ConicProgram, status: SolveStatus, iterations: u32) -> Self {
        Self {
            status,
            y: vec![0.0; program.dim],
            objective_value: f64::NAN,
            duals: program.cones.iter().map(|c| ConeDual::zero(c.rows())).collect(),
            dual_value: f64::NAN,
            gap: f64::INFINITY,
            iterations,
        }
    }
}

/// How each program cone lands in the backend problem.
enum Placement {
    /// Constant affine row that is satisfied; multiplier is zero.
    Dropped,
    /// First of an opposing affine pair mapped to one equality row; the
    /// second cone of the pair is `Dropped` and receives the negative part.
    Equality(usize),
    Nonneg(usize),
    Soc(usize),
}

/// Solves `program` to primal/dual feasibility and relative gap `tol`.
///
/// Deterministic for identical inputs. Returned duals satisfy `‖u_j‖ ≤ μ_j`
/// exactly.
pub fn solve(program: &ConicProgram, tol: f64) -> Result<ConicSolution> {
    solve_regularized(program, tol, REGULARIZATION[0])
}

fn solve_regularized(program: &ConicProgram, tol: f64, regularization: f64) -> Result<ConicSolution> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!("solver tolerance must be positive, got {tol}")));
    }
    program.validate()?;
    let n = program.dim;
    let cones = &program.cones;

    // Classify cones.
    let mut placement: Vec<Placement> = Vec::with_capacity(cones.len());
    let mut n_eq = 0;
    let mut n_ineq = 0;
    let mut soc_sizes = Vec::new();
    let mut j = 0;
    while j < cones.len() {
        let cone = &cones[j];
        if cone.is_affine() && cone.d.iter().all(|v| *v == 0.0) {
            if cone.f < -tol {
                return Ok(ConicSolution::failed(program, SolveStatus::Infeasible, 0));
            }
            placement.push(Placement::Dropped);
            j += 1;
            continue;
        }
        if cone.is_affine() && j + 1 < cones.len() && opposing(cone, &cones[j + 1]) {
            placement.push(Placement::Equality(n_eq));
            placement.push(Placement::Dropped);
            n_eq += 1;
            j += 2;
            continue;
        }
        if cone.is_affine() {
            placement.push(Placement::Nonneg(n_ineq));
            n_ineq += 1;
        } else {
            placement.push(Placement::Soc(soc_sizes.len()));
            soc_sizes.push(cone.rows() + 1);
        }
        j += 1;
    }

    let soc_offsets: Vec<usize> = soc_sizes
        .iter()
        .scan(n_eq + n_ineq, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let m = n_eq + n_ineq + soc_sizes.iter().sum::<usize>();

    // Rows: s = b − A y ∈ K with s = (dᵀy + f, B y + e).
    let (mut ri, mut ci, mut vi) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = vec![0.0; m];
    let mut emit_bound = |row: usize, cone: &super::Cone, ri: &mut Vec<usize>, ci: &mut Vec<usize>, vi: &mut Vec<f64>| {
        for (col, &v) in cone.d.iter().enumerate() {
            if v != 0.0 {
                ri.push(row);
                ci.push(col);
                vi.push(-v);
            }
        }
        b[row] = cone.f;
    };
    for (cone, place) in cones.iter().zip(&placement) {
        match *place {
            Placement::Dropped => {}
            Placement::Equality(k) => emit_bound(k, cone, &mut ri, &mut ci, &mut vi),
            Placement::Nonneg(k) => emit_bound(n_eq + k, cone, &mut ri, &mut ci, &mut vi),
            Placement::Soc(k) => {
                let off = soc_offsets[k];
                emit_bound(off, cone, &mut ri, &mut ci, &mut vi);
            }
        }
    }
    for (cone, place) in cones.iter().zip(&placement) {
        if let Placement::Soc(k) = *place {
            let off = soc_offsets[k];
            for &(r, c, v) in cone.b.iter() {
                ri.push(off + 1 + r);
                ci.push(c);
                vi.push(-v);
            }
            for (r, &e) in cone.e.iter().enumerate() {
                b[off + 1 + r] = e;
            }
        }
    }

    let scale = objective_scale(&program.objective);
    let q: Vec<f64> = program.objective.iter().map(|v| v / scale).collect();
    let a = CscMatrix::new_from_triplets(m, n, ri, ci, vi);
    let p = CscMatrix::zeros((n, n));

    let mut cone_spec = Vec::new();
    if n_eq > 0 {
        cone_spec.push(SupportedConeT::ZeroConeT(n_eq));
    }
    if n_ineq > 0 {
        cone_spec.push(SupportedConeT::NonnegativeConeT(n_ineq));
    }
    cone_spec.extend(soc_sizes.iter().map(|&s| SupportedConeT::SecondOrderConeT(s)));

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(MAX_ITER)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .static_regularization_constant(regularization)
        .build()
        .map_err(|e| Error::Solver(format!("backend settings: {e:?}")))?;

    let mut backend = DefaultSolver::new(&p, &q, &a, &b, &cone_spec, settings);
    backend.solve();
    let sol = &backend.solution;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        _ => SolveStatus::NumericalFailure,
    };
    if status != SolveStatus::Optimal {
        log::debug!("conic backend returned {:?}", sol.status);
        return Ok(ConicSolution::failed(program, status, sol.iterations));
    }

    let z: Vec<f64> = sol.z.iter().map(|v| v * scale).collect();
    let mut duals: Vec<ConeDual> = cones.iter().map(|c| ConeDual::zero(c.rows())).collect();
    for (j, place) in placement.iter().enumerate() {
        match *place {
            Placement::Dropped => {}
            Placement::Equality(k) => {
                let lambda = z[k];
                duals[j].mu = lambda.max(0.0);
                duals[j + 1].mu = (-lambda).max(0.0);
            }
            Placement::Nonneg(k) => duals[j].mu = z[n_eq + k],
            Placement::Soc(k) => {
                let off = soc_offsets[k];
                duals[j].mu = z[off];
                duals[j].u.copy_from_slice(&z[off + 1..off + 1 + cones[j].rows()]);
            }
        }
    }
    duals.iter_mut().for_each(ConeDual::project);

    let y = sol.x.clone();
    let objective_value = dot(&program.objective, &y);
    let dual_value = program.dual_objective(&duals);
    let gap = (objective_value - dual_value).abs() / objective_value.abs().max(1.0);
    Ok(ConicSolution {
        status,
        y,
        objective_value,
        duals,
        dual_value,
        gap,
        iterations: sol.iterations,
    })
}

/// Divisor applied to the objective before it reaches the backend: the
/// median nonzero magnitude. Normalizing by the largest entry instead lets a
/// few heavy penalty weights push the remaining terms below the stopping
/// tolerances, and the backend then reports optimality percent-level away
/// from the optimum.
fn objective_scale(q: &[f64]) -> f64 {
    let mut mags: Vec<f64> = q.iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    if mags.is_empty() {
        return 1.0;
    }
    mags.sort_by(f64::total_cmp);
    mags[mags.len() / 2]
}

/// Static KKT regularization tried at each tolerance level. The smaller
/// value rescues programs whose constraint data spans many decades (the
/// explicit dual of a sub-problem carries the shedding penalty as a
/// right-hand side), where the default shifts the iterates too far.
const REGULARIZATION: [f64; 2] = [1e-8, 1e-10];

/// Solves at [`DEFAULT_TOL`] and loosens the tolerance while the backend
/// stops short of it. Infeasible and unbounded verdicts are returned as is.
pub fn solve_robust(program: &ConicProgram) -> Result<ConicSolution> {
    let mut last = None;
    for &tol in &TOL_CASCADE {
        for &reg in &REGULARIZATION {
            let sol = solve_regularized(program, tol, reg)?;
            if sol.status != SolveStatus::NumericalFailure {
                return Ok(sol);
            }
            log::debug!("no convergence at tolerance {tol:e}, regularization {reg:e}");
            last = Some(sol);
        }
    }
    Ok(last.expect("cascade is non-empty"))
}

fn opposing(a: &super::Cone, b: &super::Cone) -> bool {
    b.is_affine() && a.f == -b.f && a.d.iter().zip(&b.d).all(|(x, y)| *x == -*y)
}
