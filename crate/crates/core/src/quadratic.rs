//! Common quadratic Lyapunov functions and max/min-of-quadratics over De
//! Bruijn graphs.
//!
//! Nodes of the order-`l` graph are words `w = (w₁, …, w_l)` over the matrix
//! indices; switching with `A_i` moves `w` to `shift(i, w) = (i, w₁, …, w_{l−1})`.
//! Pieces are quadratic forms, so the contraction factor enters as `γ²`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{self, min_eigenvalue, BlockValue, ConicProblem, SolveStatus, Var};
use crate::error::{Error, Result};
use crate::linalg::{random_unit_vectors, Matrix, MatrixSet};
use crate::{Status, VALIDATION_SAMPLES};

pub const QUAD_ITER_LIMIT: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadKind {
    Cqlf,
    #[serde(rename = "maxq")]
    MaxOfQuadratics,
    #[serde(rename = "minq")]
    MinOfQuadratics,
}

impl QuadKind {
    pub fn name(&self) -> &'static str {
        match self {
            QuadKind::Cqlf => "cqlf",
            QuadKind::MaxOfQuadratics => "maxq",
            QuadKind::MinOfQuadratics => "minq",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseQuadraticCertificate {
    pub set: MatrixSet,
    pub kind: QuadKind,
    pub order: usize,
    pub gamma: f64,
    /// One symmetric matrix per De Bruijn node, nodes in base-`m` order with
    /// `w₁` most significant.
    pub pieces: Vec<Vec<Vec<f64>>>,
    /// Smallest eigenvalue of each LMI `γ²·Q_to − A_iᵀ Q_from A_i`, in
    /// `(i, node)` order.
    pub margins: Vec<f64>,
    /// Optimal margin of the normalized solve.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub enum QuadOutcome {
    Certificate(Box<PiecewiseQuadraticCertificate>),
    /// The margin did not clear the strictness threshold.
    None { margin: f64 },
    Undetermined { margin: Option<f64>, reason: String },
}

impl QuadOutcome {
    pub fn status(&self) -> Status {
        match self {
            QuadOutcome::Certificate(_) => Status::Feasible,
            QuadOutcome::None { .. } => Status::Infeasible,
            QuadOutcome::Undetermined { .. } => Status::Undetermined,
        }
    }

    pub fn margin(&self) -> Option<f64> {
        match self {
            QuadOutcome::Certificate(c) => Some(c.margin),
            QuadOutcome::None { margin } => Some(*margin),
            QuadOutcome::Undetermined { margin, .. } => *margin,
        }
    }

    pub fn certificate(&self) -> Option<&PiecewiseQuadraticCertificate> {
        match self {
            QuadOutcome::Certificate(c) => Some(c),
            _ => None,
        }
    }
}

/// Number of nodes `m^l`.
fn node_count(m: usize, l: usize) -> Result<usize> {
    u32::try_from(l)
        .ok()
        .and_then(|l| m.checked_pow(l))
        .ok_or_else(|| Error::Envelope(format!("{m}^{l} pieces")))
}

/// `shift(i, w)` on base-`m` node codes with `w₁` the most significant digit.
fn shift(i: usize, w: usize, m: usize, nodes: usize) -> usize {
    i * (nodes / m) + w / m
}

/// `(i, from, to)` for every LMI `A_iᵀ Q_from A_i ⪯ γ² Q_to`.
fn edges(kind: QuadKind, m: usize, order: usize) -> Result<(usize, Vec<(usize, usize, usize)>)> {
    match kind {
        QuadKind::Cqlf => Ok((1, (0..m).map(|i| (i, 0, 0)).collect())),
        _ => {
            let nodes = node_count(m, order)?;
            let mut out = Vec::with_capacity(m * nodes);
            for i in 0..m {
                for w in 0..nodes {
                    let s = shift(i, w, m, nodes);
                    out.push(match kind {
                        QuadKind::MaxOfQuadratics => (i, w, s),
                        _ => (i, s, w),
                    });
                }
            }
            Ok((nodes, out))
        }
    }
}

fn sym_entries(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |p| (p..n).map(move |q| (p, q)))
}

/// Margin problem for matrices already divided by `γ`. Blocks `0..pieces`
/// are the `Q_w`, followed by one slack block per edge. With `tied`, all
/// pieces are forced equal.
fn build_problem(
    scaled: &[Matrix],
    pieces: usize,
    edges: &[(usize, usize, usize)],
    tied: bool,
) -> Result<ConicProblem> {
    let n = scaled[0].dim();
    let mut p = ConicProblem::new();
    let q: Vec<usize> = (0..pieces).map(|_| p.add_psd(n)).collect();
    for &(i, from, to) in edges {
        let s = p.add_psd(n);
        let a = &scaled[i];
        // S = Q_to − Aᵀ Q_from A, entrywise on the upper triangle
        for (r, c) in sym_entries(n) {
            let mut lhs = vec![(Var::entry(s, r, c), 1.0), (Var::entry(q[to], r, c), -1.0)];
            // (Aᵀ Q A)_rc = Σ_{u,v} A_ur Q_uv A_vc
            let mut acc = vec![0.0; n * n];
            for u in 0..n {
                for v in 0..n {
                    acc[u.min(v) * n + u.max(v)] += a.get(u, r) * a.get(v, c);
                }
            }
            for (u, v) in sym_entries(n) {
                let w = acc[u * n + v];
                if w != 0.0 {
                    lhs.push((Var::entry(q[from], u, v), w));
                }
            }
            p.add_equality(merge(lhs), 0.0);
        }
    }
    if tied {
        for &b in &q[1..] {
            for (r, c) in sym_entries(n) {
                p.add_equality(vec![(Var::entry(b, r, c), 1.0), (Var::entry(q[0], r, c), -1.0)], 0.0);
            }
        }
    }
    let norm: Vec<_> = q.iter().flat_map(|&b| (0..n).map(move |i| (Var::entry(b, i, i), 1.0))).collect();
    p.add_equality(norm, (n * pieces) as f64);
    Ok(p)
}

fn merge(mut terms: Vec<(Var, f64)>) -> Vec<(Var, f64)> {
    terms.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(Var, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some((lv, lc)) if *lv == v => *lc += c,
            _ => out.push((v, c)),
        }
    }
    out
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

fn lmi_matrix(q_from: &DMatrix<f64>, q_to: &DMatrix<f64>, a: &Matrix, gamma: f64) -> DMatrix<f64> {
    let a = a.to_dmatrix();
    q_to * (gamma * gamma) - a.transpose() * q_from * a
}

fn search(set: &MatrixSet, kind: QuadKind, order: usize, gamma: f64, tied: bool) -> Result<QuadOutcome> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma must be positive and finite"));
    }
    if kind != QuadKind::Cqlf && order == 0 {
        return Err(Error::param("De Bruijn order must be at least 1"));
    }
    let (pieces, edges) = edges(kind, set.len(), order)?;
    let scaled: Vec<Matrix> = set.matrices().iter().map(|a| a.scale(1.0 / gamma)).collect();
    let problem = build_problem(&scaled, pieces, &edges, tied)?;
    let blocks: Vec<usize> = (0..problem.blocks.len()).collect();
    let sol = conic::feasibility_with_margin(&problem, &blocks, QUAD_ITER_LIMIT)?;
    log::debug!("{} order {order} gamma {gamma}: {:?} margin {:?}", kind.name(), sol.status, sol.margin);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::MarginBelowTolerance => return Ok(QuadOutcome::None { margin: sol.margin.unwrap_or(f64::NAN) }),
        SolveStatus::Infeasible => return Ok(QuadOutcome::None { margin: f64::NEG_INFINITY }),
        s => return Ok(QuadOutcome::Undetermined { margin: sol.margin, reason: format!("solver status {s:?}") }),
    }
    let qs: Vec<DMatrix<f64>> = (0..pieces)
        .map(|b| match &sol.blocks[b] {
            BlockValue::Psd(m) => 0.5 * (m + m.transpose()),
            BlockValue::Vector(_) => unreachable!("pieces are PSD blocks"),
        })
        .collect();
    let margins = edges
        .iter()
        .map(|&(i, from, to)| min_eigenvalue(&lmi_matrix(&qs[from], &qs[to], set.get(i), gamma)))
        .collect();
    let cert = PiecewiseQuadraticCertificate {
        set: set.clone(),
        kind,
        order: if kind == QuadKind::Cqlf { 0 } else { order },
        gamma,
        pieces: qs.iter().map(to_rows).collect(),
        margins,
        margin: sol.margin.expect("margin solve reports a margin"),
    };
    let v = validate_quadratic(&cert, crate::DEFAULT_SEED)?;
    if !v.passed {
        return Ok(QuadOutcome::Undetermined {
            margin: Some(cert.margin),
            reason: format!("certificate failed validation: {v:?}"),
        });
    }
    Ok(QuadOutcome::Certificate(Box::new(cert)))
}

/// Common quadratic Lyapunov function: `Q ≻ 0`, `A_iᵀQA_i ≺ γ²Q`, with
/// `trace(Q) = n`.
pub fn cqlf(set: &MatrixSet, gamma: f64) -> Result<QuadOutcome> {
    search(set, QuadKind::Cqlf, 0, gamma, false)
}

/// `V(x) = max_w xᵀQ_w x` with `A_iᵀ Q_w A_i ⪯ γ² Q_{shift(i,w)}`.
pub fn max_of_quadratics(set: &MatrixSet, order: usize, gamma: f64) -> Result<QuadOutcome> {
    search(set, QuadKind::MaxOfQuadratics, order, gamma, false)
}

/// `V(x) = min_w xᵀQ_w x` with `A_iᵀ Q_{shift(i,w)} A_i ⪯ γ² Q_w`.
pub fn min_of_quadratics(set: &MatrixSet, order: usize, gamma: f64) -> Result<QuadOutcome> {
    search(set, QuadKind::MinOfQuadratics, order, gamma, false)
}

/// Max-of-quadratics search with all pieces forced equal.
pub fn max_of_quadratics_tied(set: &MatrixSet, order: usize, gamma: f64) -> Result<QuadOutcome> {
    search(set, QuadKind::MaxOfQuadratics, order, gamma, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadValidation {
    pub min_piece_eigenvalue: f64,
    pub min_lmi_eigenvalue: f64,
    pub max_asymmetry: f64,
    /// Largest sampled `V(A_i x) − γ²V(x)` relative to `V(x)`.
    pub max_sampled_increase: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Solver-free check: piece count and symmetry, positive definite pieces,
/// every LMI by eigenvalues, and `V(A_i x) ≤ γ² V(x)` at random points.
pub fn validate_quadratic(cert: &PiecewiseQuadraticCertificate, seed: u64) -> Result<QuadValidation> {
    let n = cert.set.dim();
    let order = if cert.kind == QuadKind::Cqlf { 1 } else { cert.order };
    if cert.kind != QuadKind::Cqlf && order == 0 {
        return Err(Error::Malformed("order must be at least 1".into()));
    }
    let (pieces, edges) = edges(cert.kind, cert.set.len(), order)?;
    if cert.pieces.len() != pieces {
        return Err(Error::Malformed(format!("expected {pieces} pieces, found {}", cert.pieces.len())));
    }
    if cert.pieces.iter().any(|q| q.len() != n || q.iter().any(|r| r.len() != n)) {
        return Err(Error::Malformed(format!("pieces must be {n}×{n}")));
    }
    let qs: Vec<DMatrix<f64>> = cert.pieces.iter().map(|q| from_rows(q)).collect();
    let mut asym = 0.0_f64;
    for q in &qs {
        asym = asym.max((q - q.transpose()).amax());
    }
    let min_piece = qs.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
    let min_lmi = edges
        .iter()
        .map(|&(i, from, to)| min_eigenvalue(&lmi_matrix(&qs[from], &qs[to], cert.set.get(i), cert.gamma)))
        .fold(f64::INFINITY, f64::min);

    let v = |x: &[f64]| -> f64 {
        let vals = qs.iter().map(|q| {
            let mut s = 0.0;
            for r in 0..n {
                for c in 0..n {
                    s += x[r] * q[(r, c)] * x[c];
                }
            }
            s
        });
        match cert.kind {
            QuadKind::MinOfQuadratics => vals.fold(f64::INFINITY, f64::min),
            _ => vals.fold(f64::NEG_INFINITY, f64::max),
        }
    };
    let g2 = cert.gamma * cert.gamma;
    let mut worst = f64::NEG_INFINITY;
    let pts = random_unit_vectors(n, VALIDATION_SAMPLES, seed);
    for x in &pts {
        let vx = v(x);
        for a in cert.set.matrices() {
            worst = worst.max((v(&a.apply(x)) - g2 * vx) / vx.abs().max(f64::MIN_POSITIVE));
        }
    }
    let passed = asym <= 1e-12 && min_piece > conic::MARGIN_TOL && min_lmi >= -1e-8 && worst <= 1e-9;
    Ok(QuadValidation {
        min_piece_eigenvalue: min_piece,
        min_lmi_eigenvalue: min_lmi,
        max_asymmetry: asym,
        max_sampled_increase: worst,
        samples: pts.len(),
        passed,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderStatus {
    pub order: usize,
    pub pieces: usize,
    pub status: Status,
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecesReport {
    pub kind: QuadKind,
    pub per_order: Vec<OrderStatus>,
    pub min_order: Option<usize>,
    pub min_pieces: Option<usize>,
}

/// Status for every order `1..=l_max` (solved in parallel, reported in
/// order). For CQLF only a single one-piece entry is produced.
pub fn sweep_pieces(set: &MatrixSet, kind: QuadKind, l_max: usize, gamma: f64) -> Result<PiecesReport> {
    if l_max == 0 {
        return Err(Error::param("l_max must be at least 1"));
    }
    let orders: Vec<usize> = if kind == QuadKind::Cqlf { vec![1] } else { (1..=l_max).collect() };
    let per_order = orders
        .par_iter()
        .map(|&l| {
            let out = search(set, kind, l, gamma, false)?;
            let pieces = if kind == QuadKind::Cqlf { 1 } else { node_count(set.len(), l)? };
            Ok(OrderStatus { order: l, pieces, status: out.status(), margin: out.margin() })
        })
        .collect::<Result<Vec<_>>>()?;
    let first = per_order.iter().find(|s| s.status == Status::Feasible);
    Ok(PiecesReport {
        kind,
        min_order: first.map(|s| s.order),
        min_pieces: first.map(|s| s.pieces),
        per_order,
    })
}
