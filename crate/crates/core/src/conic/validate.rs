//! Solver-independent check of a block assignment against a problem.

use nalgebra::SymmetricEigen;

use super::problem::{evaluate, BlockKind, BlockValue, ConicProblem};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validation {
    /// Largest `|lhs - rhs|` over all equalities.
    pub max_equality_residual: f64,
    /// Smallest eigenvalue over PSD blocks and smallest entry over
    /// nonnegative blocks (`+∞` when there are none).
    pub min_block_eigenvalue: f64,
    pub max_asymmetry: f64,
    pub objective: f64,
    pub rhs_norm: f64,
}

impl Validation {
    /// Tolerances every `Optimal` solution must meet.
    pub fn meets_contract(&self) -> bool {
        self.max_equality_residual <= 1e-8 * (1.0 + self.rhs_norm)
            && self.min_block_eigenvalue >= -1e-9
            && self.max_asymmetry <= 1e-12
    }
}

pub fn min_eigenvalue(m: &nalgebra::DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = 0.5 * (m + m.transpose());
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn validate(problem: &ConicProblem, blocks: &[BlockValue]) -> Validation {
    assert_eq!(problem.blocks.len(), blocks.len(), "block count mismatch");
    let mut min_eig = f64::INFINITY;
    let mut asym = 0.0_f64;
    for (kind, value) in problem.blocks.iter().zip(blocks) {
        match (kind, value) {
            (BlockKind::Psd(s), BlockValue::Psd(m)) => {
                assert_eq!((m.nrows(), m.ncols()), (*s, *s), "PSD block shape mismatch");
                for i in 0..*s {
                    for j in i + 1..*s {
                        asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
                    }
                }
                min_eig = min_eig.min(min_eigenvalue(m));
            }
            (BlockKind::Nonneg(s), BlockValue::Vector(x)) => {
                assert_eq!(x.len(), *s);
                min_eig = x.iter().copied().fold(min_eig, f64::min);
            }
            (BlockKind::Free(s), BlockValue::Vector(x)) => assert_eq!(x.len(), *s),
            _ => panic!("block kind and value disagree"),
        }
    }
    let mut resid = 0.0_f64;
    let mut rhs_sq = 0.0;
    for eq in &problem.equalities {
        resid = resid.max((evaluate(&eq.lhs, blocks) - eq.rhs).abs());
        rhs_sq += eq.rhs * eq.rhs;
    }
    Validation {
        max_equality_residual: resid,
        min_block_eigenvalue: min_eig,
        max_asymmetry: asym,
        objective: evaluate(&problem.objective, blocks),
        rhs_norm: rhs_sq.sqrt(),
    }
}
