use super::{ConeDual, ConicProgram, LinExpr};

/// The conic dual of a [`ConicProgram`], written as a minimization.
///
/// Variables are `(μ_1, u_1, μ_2, u_2, …)`. The dual
///
/// ```text
/// max  Σ_j −u_jᵀē_j − μ_j f̄_j
/// s.t. Σ_j B_jᵀu_j + μ_j d_j = d,   ‖u_j‖₂ ≤ μ_j
/// ```
///
/// is stored with its objective negated, so the optimal value of `program`
/// is the negated dual optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct DualProgram {
    pub program: ConicProgram,
    blocks: Vec<Block>,
}

/// Where the multipliers of one primal cone live. An adjacent opposing
/// affine pair (an equality) shares one free variable: `μ₁ − μ₂ = w`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    Cone { off: usize, rows: usize },
    PairFirst { off: usize },
    PairSecond { off: usize },
}

impl DualProgram {
    /// Dual value from the optimal value of the stored minimization.
    pub fn dual_value(&self, min_value: f64) -> f64 {
        -min_value
    }

    /// Splits a solution vector of `program` into per-cone multipliers.
    pub fn unpack(&self, w: &[f64]) -> Vec<ConeDual> {
        self.blocks
            .iter()
            .map(|b| match *b {
                Block::Cone { off, rows } => ConeDual {
                    mu: w[off],
                    u: w[off + 1..off + 1 + rows].to_vec(),
                },
                Block::PairFirst { off } => ConeDual { mu: w[off].max(0.0), u: vec![] },
                Block::PairSecond { off } => ConeDual { mu: (-w[off]).max(0.0), u: vec![] },
            })
            .collect()
    }

    /// Offset of `μ_j` in the dual variable vector (shared within an
    /// equality pair, where the variable is `μ₁ − μ₂`).
    pub fn mu_index(&self, j: usize) -> usize {
        match self.blocks[j] {
            Block::Cone { off, .. } | Block::PairFirst { off } | Block::PairSecond { off } => off,
        }
    }
}

fn opposing(a: &super::Cone, b: &super::Cone) -> bool {
    a.is_affine() && b.is_affine() && a.f == -b.f && a.d.iter().zip(&b.d).all(|(x, y)| *x == -*y)
}

/// Builds the conic dual of `program`.
pub fn dualize(program: &ConicProgram) -> DualProgram {
    let cones = &program.cones;
    let mut blocks = Vec::with_capacity(cones.len());
    let mut dim = 0;
    let mut j = 0;
    while j < cones.len() {
        if j + 1 < cones.len() && opposing(&cones[j], &cones[j + 1]) {
            blocks.push(Block::PairFirst { off: dim });
            blocks.push(Block::PairSecond { off: dim });
            dim += 1;
            j += 2;
        } else {
            blocks.push(Block::Cone { off: dim, rows: cones[j].rows() });
            dim += 1 + cones[j].rows();
            j += 1;
        }
    }
    let mut dual = ConicProgram::new(dim);
    for (cone, block) in cones.iter().zip(&blocks) {
        match *block {
            Block::Cone { off, rows } => {
                dual.objective[off] = cone.f;
                dual.objective[off + 1..off + 1 + rows].copy_from_slice(&cone.e);
            }
            Block::PairFirst { off } => dual.objective[off] = cone.f,
            Block::PairSecond { .. } => {}
        }
    }

    // Stationarity in the primal variables, one equality per coordinate.
    let mut stationarity: Vec<LinExpr> = program
        .objective
        .iter()
        .map(|&d| LinExpr::constant(-d))
        .collect();
    for (cone, block) in cones.iter().zip(&blocks) {
        let off = match *block {
            Block::PairSecond { .. } => continue,
            Block::Cone { off, .. } | Block::PairFirst { off } => off,
        };
        for (i, &v) in cone.d.iter().enumerate() {
            if v != 0.0 {
                stationarity[i].terms.push((off, v));
            }
        }
        for &(r, c, v) in cone.b.iter() {
            stationarity[c].terms.push((off + 1 + r, v));
        }
    }
    for row in &stationarity {
        dual.push_equality(row);
    }

    for block in &blocks {
        if let Block::Cone { off, rows } = *block {
            let norm: Vec<LinExpr> = (0..rows).map(|r| LinExpr::var(off + 1 + r, 1.0)).collect();
            dual.push_soc(&norm, &LinExpr::var(off, 1.0));
        }
    }
    DualProgram { program: dual, blocks }
}
