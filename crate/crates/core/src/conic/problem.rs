use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest PSD block accepted by the solver.
pub const MAX_PSD_BLOCK: usize = 30;
/// Largest number of equality constraints accepted by the solver.
pub const MAX_EQUALITIES: usize = 600;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// Symmetric positive semidefinite matrix of the given order.
    Psd(usize),
    /// Vector in the nonnegative orthant.
    Nonneg(usize),
    /// Unconstrained vector.
    Free(usize),
}

impl BlockKind {
    pub fn size(&self) -> usize {
        match *self {
            BlockKind::Psd(s) | BlockKind::Nonneg(s) | BlockKind::Free(s) => s,
        }
    }
}

/// One scalar decision variable. For PSD blocks `(i, j)` with `i <= j`
/// names the symmetric entry `X_ij = X_ji`; vector blocks use `(i, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub block: usize,
    pub i: usize,
    pub j: usize,
}

impl Var {
    /// Entry `(i, j)` of a PSD block; the pair is stored in upper-triangular order.
    pub fn entry(block: usize, i: usize, j: usize) -> Var {
        Var { block, i: i.min(j), j: i.max(j) }
    }

    pub fn elem(block: usize, i: usize) -> Var {
        Var { block, i, j: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearFunctional {
    pub terms: Vec<(Var, f64)>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, var: Var, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl From<Vec<(Var, f64)>> for LinearFunctional {
    fn from(terms: Vec<(Var, f64)>) -> Self {
        LinearFunctional { terms: terms.into_iter().filter(|(_, c)| *c != 0.0).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equality {
    pub lhs: LinearFunctional,
    pub rhs: f64,
}

/// Maximize a linear objective over a product of PSD, nonnegative and free
/// blocks subject to linear equalities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProblem {
    pub blocks: Vec<BlockKind>,
    pub equalities: Vec<Equality>,
    pub objective: LinearFunctional,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, kind: BlockKind) -> usize {
        self.blocks.push(kind);
        self.blocks.len() - 1
    }

    pub fn add_psd(&mut self, size: usize) -> usize {
        self.add_block(BlockKind::Psd(size))
    }

    pub fn add_nonneg(&mut self, len: usize) -> usize {
        self.add_block(BlockKind::Nonneg(len))
    }

    pub fn add_free(&mut self, len: usize) -> usize {
        self.add_block(BlockKind::Free(len))
    }

    pub fn add_equality(&mut self, lhs: impl Into<LinearFunctional>, rhs: f64) {
        self.equalities.push(Equality { lhs: lhs.into(), rhs });
    }

    pub fn set_objective(&mut self, objective: impl Into<LinearFunctional>) {
        self.objective = objective.into();
    }

    /// Adds `trace(X_block) = value`.
    pub fn add_trace_normalization(&mut self, block: usize, value: f64) {
        let n = self.blocks[block].size();
        let lhs: Vec<_> = (0..n).map(|i| (Var::entry(block, i, i), 1.0)).collect();
        self.add_equality(lhs, value);
    }

    pub fn psd_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.blocks.iter().enumerate().filter_map(|(b, k)| match k {
            BlockKind::Psd(s) => Some((b, *s)),
            _ => None,
        })
    }

    pub fn check(&self) -> Result<()> {
        for (b, kind) in self.blocks.iter().enumerate() {
            if kind.size() == 0 {
                return Err(Error::param(format!("block {b} is empty")));
            }
            if let BlockKind::Psd(s) = kind {
                if *s > MAX_PSD_BLOCK {
                    return Err(Error::Envelope(format!(
                        "PSD block {b} has order {s} > {MAX_PSD_BLOCK}"
                    )));
                }
            }
        }
        if self.equalities.len() > MAX_EQUALITIES {
            return Err(Error::Envelope(format!(
                "{} equalities > {MAX_EQUALITIES}",
                self.equalities.len()
            )));
        }
        let check_fn = |f: &LinearFunctional, what: &str| -> Result<()> {
            for (v, c) in &f.terms {
                let kind = self
                    .blocks
                    .get(v.block)
                    .ok_or_else(|| Error::param(format!("{what} references missing block {}", v.block)))?;
                let ok = match *kind {
                    BlockKind::Psd(s) => v.i <= v.j && v.j < s,
                    BlockKind::Nonneg(s) | BlockKind::Free(s) => v.i < s && v.j == 0,
                };
                if !ok {
                    return Err(Error::param(format!("{what} references invalid entry {v:?}")));
                }
                if !c.is_finite() {
                    return Err(Error::param(format!("{what} has a non-finite coefficient")));
                }
            }
            Ok(())
        };
        for (k, eq) in self.equalities.iter().enumerate() {
            check_fn(&eq.lhs, &format!("equality {k}"))?;
            if !eq.rhs.is_finite() {
                return Err(Error::param(format!("equality {k} has a non-finite right-hand side")));
            }
        }
        check_fn(&self.objective, "objective")
    }

    /// Human-readable listing of blocks, equality triplets and right-hand
    /// sides, for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (b, kind) in self.blocks.iter().enumerate() {
            let (tag, s) = match kind {
                BlockKind::Psd(s) => ("psd", s),
                BlockKind::Nonneg(s) => ("nonneg", s),
                BlockKind::Free(s) => ("free", s),
            };
            let _ = writeln!(out, "block {b} {tag} {s}");
        }
        let fmt_terms = |f: &LinearFunctional| {
            f.terms
                .iter()
                .map(|(v, c)| format!("({},{},{},{:e})", v.block, v.i, v.j, c))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "maximize {}", fmt_terms(&self.objective));
        for eq in &self.equalities {
            let _ = writeln!(out, "eq {} = {:e}", fmt_terms(&eq.lhs), eq.rhs);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockValue {
    Psd(DMatrix<f64>),
    Vector(Vec<f64>),
}

impl BlockValue {
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockValue::Psd(m) => Some(m),
            BlockValue::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            BlockValue::Vector(v) => Some(v),
            BlockValue::Psd(_) => None,
        }
    }
}

/// Reads the value of one scalar variable from a block assignment.
pub fn var_value(blocks: &[BlockValue], v: Var) -> f64 {
    match &blocks[v.block] {
        BlockValue::Psd(m) => m[(v.i, v.j)],
        BlockValue::Vector(x) => x[v.i],
    }
}

pub fn evaluate(f: &LinearFunctional, blocks: &[BlockValue]) -> f64 {
    f.terms.iter().map(|&(v, c)| c * var_value(blocks, v)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Solved, but the maximized margin did not clear the strictness threshold.
    MarginBelowTolerance,
    IterationLimit,
    Unbounded,
    NumericalBreakdown,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub blocks: Vec<BlockValue>,
    pub objective_value: f64,
    pub dual_objective: f64,
    pub max_equality_residual: f64,
    pub min_block_eigenvalue: f64,
    /// Maximized margin λ* for margin problems.
    pub margin: Option<f64>,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Solver failed to reach any conclusion.
    pub fn is_undetermined(&self) -> bool {
        matches!(self.status, SolveStatus::IterationLimit | SolveStatus::NumericalBreakdown)
    }
}
