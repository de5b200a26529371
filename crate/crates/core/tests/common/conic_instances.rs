// Small conic problems whose optimal values are known in closed form.
// Shared by the core solver tests and the acceptance suite.

#![allow(dead_code)]

use jsr_certify_core::conic::{self, ConicProblem, ConicSolution, SolveStatus, Var};
use jsr_certify_core::Result;

pub enum Expected {
    /// Optimal objective value.
    Objective(f64),
    /// Margin λ* and the status it implies.
    Margin(f64, SolveStatus),
    Status(SolveStatus),
}

pub struct Instance {
    pub name: &'static str,
    pub problem: ConicProblem,
    /// `Some` for margin-pattern problems.
    pub margin_blocks: Option<Vec<usize>>,
    pub expected: Expected,
}

impl Instance {
    pub fn solve(&self) -> Result<ConicSolution> {
        match &self.margin_blocks {
            Some(blocks) => conic::feasibility_with_margin(&self.problem, blocks, 200),
            None => conic::solve(&self.problem, 200),
        }
    }

    /// `Ok(error)` when the status matches, with the objective or margin error.
    pub fn check(&self, sol: &ConicSolution) -> std::result::Result<f64, String> {
        match self.expected {
            Expected::Objective(v) => {
                if sol.status != SolveStatus::Optimal {
                    return Err(format!("status {:?}", sol.status));
                }
                Ok((sol.objective_value - v).abs())
            }
            Expected::Margin(v, status) => {
                if sol.status != status {
                    return Err(format!("status {:?}, expected {status:?}", sol.status));
                }
                let m = sol.margin.ok_or("no margin reported")?;
                Ok((m - v).abs())
            }
            Expected::Status(status) => {
                if sol.status != status {
                    return Err(format!("status {:?}, expected {status:?}", sol.status));
                }
                Ok(0.0)
            }
        }
    }
}

fn e(b: usize, i: usize, j: usize) -> Var {
    Var::entry(b, i, j)
}

fn v(b: usize, i: usize) -> Var {
    Var::elem(b, i)
}

/// `Q - AᵀQA = rhs` entrywise for a 2×2 `A` acting on PSD block `q`.
fn stein_rows(p: &mut ConicProblem, q: usize, a: [[f64; 2]; 2], rhs: [[f64; 2]; 2], dblock: Option<usize>) {
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let mut lhs = vec![(e(q, i, j), 1.0)];
        // (AᵀQA)_ij = Σ_kl a_ki Q_kl a_lj
        for k in 0..2 {
            for l in 0..2 {
                lhs.push((e(q, k, l), -a[k][i] * a[l][j]));
            }
        }
        match dblock {
            Some(d) => {
                lhs.push((e(d, i, j), -1.0));
                p.add_equality(lhs, 0.0);
            }
            None => p.add_equality(lhs, rhs[i][j]),
        }
    }
}

pub fn instances() -> Vec<Instance> {
    let mut out = Vec::new();

    // trace(X) = 3 on a 3×3 block: the largest margin is at X = I.
    let mut p = ConicProblem::new();
    let x = p.add_psd(3);
    p.add_trace_normalization(x, 3.0);
    out.push(Instance {
        name: "identity margin",
        problem: p,
        margin_blocks: Some(vec![x]),
        expected: Expected::Margin(1.0, SolveStatus::Optimal),
    });

    // max x  s.t.  x + s = 3,  x, s ≥ 0
    let mut p = ConicProblem::new();
    let l = p.add_nonneg(2);
    p.add_equality(vec![(v(l, 0), 1.0), (v(l, 1), 1.0)], 3.0);
    p.set_objective(vec![(v(l, 0), 1.0)]);
    out.push(Instance { name: "lp corner", problem: p, margin_blocks: None, expected: Expected::Objective(3.0) });

    // max x1 + x2  s.t.  x1 + 2x2 ≤ 4,  3x1 + x2 ≤ 6  → (8/5, 6/5)
    let mut p = ConicProblem::new();
    let l = p.add_nonneg(4);
    p.add_equality(vec![(v(l, 0), 1.0), (v(l, 1), 2.0), (v(l, 2), 1.0)], 4.0);
    p.add_equality(vec![(v(l, 0), 3.0), (v(l, 1), 1.0), (v(l, 3), 1.0)], 6.0);
    p.set_objective(vec![(v(l, 0), 1.0), (v(l, 1), 1.0)]);
    out.push(Instance { name: "lp vertex", problem: p, margin_blocks: None, expected: Expected::Objective(2.8) });

    // max λ  s.t.  diag(2, 1) − λI ⪰ 0
    let mut p = ConicProblem::new();
    let x = p.add_psd(2);
    let lam = p.add_free(1);
    p.add_equality(vec![(e(x, 0, 0), 1.0), (v(lam, 0), 1.0)], 2.0);
    p.add_equality(vec![(e(x, 1, 1), 1.0), (v(lam, 0), 1.0)], 1.0);
    p.add_equality(vec![(e(x, 0, 1), 1.0)], 0.0);
    p.set_objective(vec![(v(lam, 0), 1.0)]);
    out.push(Instance {
        name: "smallest eigenvalue",
        problem: p,
        margin_blocks: None,
        expected: Expected::Objective(1.0),
    });

    // min ⟨C, X⟩ over trace-one X is λ_min(C) = 1 for C = [[2, 1], [1, 2]].
    let mut p = ConicProblem::new();
    let x = p.add_psd(2);
    p.add_trace_normalization(x, 1.0);
    p.set_objective(vec![(e(x, 0, 0), -2.0), (e(x, 1, 1), -2.0), (e(x, 0, 1), -2.0)]);
    out.push(Instance {
        name: "eigenvalue by trace",
        problem: p,
        margin_blocks: None,
        expected: Expected::Objective(-1.0),
    });

    // max X12 with unit diagonal: Cauchy–Schwarz gives 1.
    let mut p = ConicProblem::new();
    let x = p.add_psd(2);
    p.add_equality(vec![(e(x, 0, 0), 1.0)], 1.0);
    p.add_equality(vec![(e(x, 1, 1), 1.0)], 1.0);
    p.set_objective(vec![(e(x, 0, 1), 1.0)]);
    out.push(Instance {
        name: "correlation bound",
        problem: p,
        margin_blocks: None,
        expected: Expected::Objective(1.0),
    });

    // max t  s.t.  [[1, t], [t, 1]] ⪰ 0,  t ≤ 1/2
    let mut p = ConicProblem::new();
    let x = p.add_psd(2);
    let s = p.add_nonneg(1);
    let t = p.add_free(1);
    p.add_equality(vec![(e(x, 0, 0), 1.0)], 1.0);
    p.add_equality(vec![(e(x, 1, 1), 1.0)], 1.0);
    p.add_equality(vec![(e(x, 0, 1), 1.0), (v(t, 0), -1.0)], 0.0);
    p.add_equality(vec![(v(t, 0), 1.0), (v(s, 0), 1.0)], 0.5);
    p.set_objective(vec![(v(t, 0), 1.0)]);
    out.push(Instance { name: "mixed cones", problem: p, margin_blocks: None, expected: Expected::Objective(0.5) });

    // Q − AᵀQA = I for A = diag(0.5, 0.8): Q = diag(4/3, 1/0.36).
    let mut p = ConicProblem::new();
    let q = p.add_psd(2);
    stein_rows(&mut p, q, [[0.5, 0.0], [0.0, 0.8]], [[1.0, 0.0], [0.0, 1.0]], None);
    p.set_objective(vec![(e(q, 0, 0), 1.0), (e(q, 1, 1), 1.0)]);
    out.push(Instance {
        name: "lyapunov diagonal",
        problem: p,
        margin_blocks: None,
        expected: Expected::Objective(4.0 / 3.0 + 1.0 / 0.36),
    });

    // A = 0.6·rotation(0.7) has AᵀA = 0.36 I, so Q = I / 0.64.
    let (sn, cs) = 0.7f64.sin_cos();
    let a = [[0.6 * cs, -0.6 * sn], [0.6 * sn, 0.6 * cs]];
    let mut p = ConicProblem::new();
    let q = p.add_psd(2);
    stein_rows(&mut p, q, a, [[1.0, 0.0], [0.0, 1.0]], None);
    p.set_objective(vec![(e(q, 0, 0), 1.0), (e(q, 1, 1), 1.0)]);
    out.push(Instance {
        name: "lyapunov rotation",
        problem: p,
        margin_blocks: None,
        expected: Expected::Objective(2.0 / 0.64),
    });

    // Common quadratic for {0.5 I, 0.9·rotation(0.3)} with trace(Q) = 2.
    // Rotation averaging makes Q = I optimal; the binding block is
    // Q − 0.81 RᵀQR = 0.19 I.
    let (sn, cs) = 0.3f64.sin_cos();
    let mut p = ConicProblem::new();
    let q = p.add_psd(2);
    let d1 = p.add_psd(2);
    let d2 = p.add_psd(2);
    p.add_trace_normalization(q, 2.0);
    stein_rows(&mut p, q, [[0.5, 0.0], [0.0, 0.5]], [[0.0; 2]; 2], Some(d1));
    stein_rows(&mut p, q, [[0.9 * cs, -0.9 * sn], [0.9 * sn, 0.9 * cs]], [[0.0; 2]; 2], Some(d2));
    out.push(Instance {
        name: "cqlf contraction pair",
        problem: p,
        margin_blocks: Some(vec![q, d1, d2]),
        expected: Expected::Margin(0.19, SolveStatus::Optimal),
    });

    // {2I}: the decrease block is −3Q, so the best margin is −3 at Q = I.
    let mut p = ConicProblem::new();
    let q = p.add_psd(2);
    let d = p.add_psd(2);
    p.add_trace_normalization(q, 2.0);
    stein_rows(&mut p, q, [[2.0, 0.0], [0.0, 2.0]], [[0.0; 2]; 2], Some(d));
    out.push(Instance {
        name: "infeasible expansion",
        problem: p,
        margin_blocks: Some(vec![q, d]),
        expected: Expected::Margin(-3.0, SolveStatus::MarginBelowTolerance),
    });

    // x + y = −1 with x, y ≥ 0.
    let mut p = ConicProblem::new();
    let l = p.add_nonneg(2);
    p.add_equality(vec![(v(l, 0), 1.0), (v(l, 1), 1.0)], -1.0);
    p.set_objective(vec![(v(l, 0), 1.0)]);
    out.push(Instance {
        name: "infeasible orthant",
        problem: p,
        margin_blocks: None,
        expected: Expected::Status(SolveStatus::Infeasible),
    });

    out
}
