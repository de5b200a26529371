//! Small dense conic solver: PSD, nonnegative and free blocks with linear
//! equalities and a linear objective.

mod ipm;
mod problem;
mod validate;

pub use ipm::SolverOptions;
pub use problem::{
    evaluate, var_value, BlockKind, BlockValue, ConicProblem, ConicSolution, Equality, LinearFunctional,
    SolveStatus, Var, MAX_EQUALITIES, MAX_PSD_BLOCK,
};
pub use validate::{min_eigenvalue, validate, Validation};

use crate::error::Result;

/// A margin problem is strictly feasible iff its optimal margin exceeds this.
pub const MARGIN_TOL: f64 = 1e-8;

/// Maximizes the problem's objective.
pub fn solve(problem: &ConicProblem, iter_limit: usize) -> Result<ConicSolution> {
    solve_with(problem, SolverOptions { iter_limit, ..SolverOptions::default() })
}

pub fn solve_with(problem: &ConicProblem, opts: SolverOptions) -> Result<ConicSolution> {
    problem.check()?;
    let raw = ipm::solve_raw(problem, opts);
    let v = validate(problem, &raw.blocks);
    let mut status = raw.status;
    if status == SolveStatus::Optimal && !v.meets_contract() {
        log::debug!("optimal iterate fails validation: {v:?}");
        status = SolveStatus::NumericalBreakdown;
    }
    Ok(ConicSolution {
        status,
        blocks: raw.blocks,
        objective_value: -raw.primal_obj,
        dual_objective: -raw.dual_obj,
        max_equality_residual: v.max_equality_residual,
        min_block_eigenvalue: v.min_block_eigenvalue,
        margin: None,
        iterations: raw.iterations,
    })
}

/// Decides strict feasibility of the constraints of `problem` (its objective
/// is ignored): every block `B` in `margin_blocks` is written as `S + λI`
/// with `S` in the cone and `λ` free, and `λ` is maximized. The caller must
/// supply a normalization that keeps `λ` bounded.
///
/// The returned blocks are the original variables `B = S + λI`; `margin` is
/// `λ*`. `Optimal` means `λ* > MARGIN_TOL`, `MarginBelowTolerance` means the
/// solve succeeded but the margin did not clear the threshold.
pub fn feasibility_with_margin(
    problem: &ConicProblem,
    margin_blocks: &[usize],
    iter_limit: usize,
) -> Result<ConicSolution> {
    problem.check()?;
    let mut p = problem.clone();
    let lambda = Var::elem(p.add_free(1), 0);
    for eq in &mut p.equalities {
        let mut extra = 0.0;
        for &(v, c) in &eq.lhs.terms {
            if !margin_blocks.contains(&v.block) {
                continue;
            }
            match p.blocks[v.block] {
                BlockKind::Psd(_) if v.i == v.j => extra += c,
                BlockKind::Nonneg(_) => extra += c,
                _ => {}
            }
        }
        if extra != 0.0 {
            eq.lhs.add(lambda, extra);
        }
    }
    p.set_objective(vec![(lambda, 1.0)]);

    let sol = solve(&p, iter_limit)?;
    let lam = match &sol.blocks[lambda.block] {
        BlockValue::Vector(x) => x[0],
        BlockValue::Psd(_) => unreachable!("margin variable is a free block"),
    };
    let mut blocks = sol.blocks;
    blocks.pop();
    for &b in margin_blocks {
        match &mut blocks[b] {
            BlockValue::Psd(m) => {
                for i in 0..m.nrows() {
                    m[(i, i)] += lam;
                }
            }
            BlockValue::Vector(x) => {
                if matches!(problem.blocks[b], BlockKind::Nonneg(_)) {
                    x.iter_mut().for_each(|v| *v += lam);
                }
            }
        }
    }
    let v = validate(problem, &blocks);
    let status = match sol.status {
        SolveStatus::Optimal if lam > MARGIN_TOL => SolveStatus::Optimal,
        SolveStatus::Optimal => SolveStatus::MarginBelowTolerance,
        s => s,
    };
    Ok(ConicSolution {
        status,
        blocks,
        objective_value: lam,
        dual_objective: sol.dual_objective,
        max_equality_residual: v.max_equality_residual,
        min_block_eigenvalue: v.min_block_eigenvalue,
        margin: Some(lam),
        iterations: sol.iterations,
    })
}
