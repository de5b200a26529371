//! Infeasible-start primal-dual interior-point method.
//!
//! Internally the problem is put in the minimization form
//!
//! ```text
//!   min  <C, X> + c_lᵀ x_l + c_fᵀ x_f
//!   s.t. A(X) + A_l x_l + A_f x_f = b,   X ⪰ 0,  x_l ≥ 0,  x_f free
//! ```
//!
//! and solved with the HKM search direction and Mehrotra's
//! predictor-corrector scheme. Free variables enter through the augmented
//! system `[M A_f; A_fᵀ 0]` where `M` is the Schur complement.

use std::collections::BTreeMap;

use log::{debug, trace, warn};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::problem::{BlockKind, BlockValue, ConicProblem, SolveStatus};

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub iter_limit: usize,
    /// Target for relative gap and relative residuals.
    pub tol: f64,
    /// Accepted when progress stalls before `tol` is reached.
    pub loose_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { iter_limit: 200, tol: 1e-10, loose_tol: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct RawSolution {
    pub status: SolveStatus,
    pub blocks: Vec<BlockValue>,
    /// Minimization-form primal and dual objectives.
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub iterations: usize,
}

/// Entries `(p, q, value)` with `p <= q` of a symmetric coefficient matrix;
/// off-diagonal values are the matrix entries (half the variable coefficient).
type SymEntries = Vec<(usize, usize, f64)>;

struct Projector {
    d: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

struct Data {
    psd_sizes: Vec<usize>,
    lp_len: usize,
    free_len: usize,
    /// psd_rows[k][t] = (row index, entries of that row in block k)
    psd_rows: Vec<Vec<(usize, SymEntries)>>,
    lp_rows: Vec<Vec<(usize, f64)>>,
    free_rows: Vec<Vec<(usize, f64)>>,
    b: DVector<f64>,
    c_psd: Vec<DMatrix<f64>>,
    c_lp: DVector<f64>,
    c_free: DVector<f64>,
    /// problem block -> (kind, internal index or offset)
    layout: Vec<(BlockKind, usize)>,
    /// kept original rows, in internal order
    kept: Vec<usize>,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    zl: DVector<f64>,
    xf: DVector<f64>,
    y: DVector<f64>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dxl: DVector<f64>,
    dzl: DVector<f64>,
    dxf: DVector<f64>,
    dy: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rdl: DVector<f64>,
    rf: DVector<f64>,
}

enum Presolve {
    Ready(Data),
    Infeasible,
}

fn sym_inner(entries: &SymEntries, g: &DMatrix<f64>) -> f64 {
    entries
        .iter()
        .map(|&(p, q, v)| if p == q { v * g[(p, q)] } else { v * (g[(p, q)] + g[(q, p)]) })
        .sum()
}

fn sym_add(entries: &SymEntries, scale: f64, out: &mut DMatrix<f64>) {
    for &(p, q, v) in entries {
        out[(p, q)] += scale * v;
        if p != q {
            out[(q, p)] += scale * v;
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest `α` with `X + α·dX ⪰ 0`, `+∞` if unbounded.
fn psd_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let l = Cholesky::new(x.clone())?.l();
    let linv = l.clone().try_inverse()?;
    let w = &linv * dx * linv.transpose();
    let lmin = SymmetricEigen::new(symmetrize(&w))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Some(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn lp_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(xi, di)| -xi / di)
        .fold(f64::INFINITY, f64::min)
}

fn presolve(problem: &ConicProblem) -> Presolve {
    let mut psd_sizes = Vec::new();
    let mut lp_len = 0;
    let mut free_len = 0;
    let mut layout = Vec::with_capacity(problem.blocks.len());
    for kind in &problem.blocks {
        match *kind {
            BlockKind::Psd(s) => {
                layout.push((*kind, psd_sizes.len()));
                psd_sizes.push(s);
            }
            BlockKind::Nonneg(s) => {
                layout.push((*kind, lp_len));
                lp_len += s;
            }
            BlockKind::Free(s) => {
                layout.push((*kind, free_len));
                free_len += s;
            }
        }
    }

    // Merge duplicate terms and split rows by block type.
    struct Row {
        psd: BTreeMap<(usize, usize, usize), f64>,
        lp: BTreeMap<usize, f64>,
        free: BTreeMap<usize, f64>,
        rhs: f64,
    }
    let mut rows: Vec<Row> = problem
        .equalities
        .iter()
        .map(|eq| {
            let mut row = Row { psd: BTreeMap::new(), lp: BTreeMap::new(), free: BTreeMap::new(), rhs: eq.rhs };
            for &(v, c) in &eq.lhs.terms {
                let (kind, off) = layout[v.block];
                match kind {
                    BlockKind::Psd(_) => {
                        // variable coefficient c on X_pq (p<q) means matrix entries c/2
                        let val = if v.i == v.j { c } else { 0.5 * c };
                        *row.psd.entry((off, v.i, v.j)).or_default() += val;
                    }
                    BlockKind::Nonneg(_) => *row.lp.entry(off + v.i).or_default() += c,
                    BlockKind::Free(_) => *row.free.entry(off + v.i).or_default() += c,
                }
            }
            row
        })
        .collect();

    // Row equilibration: unit Frobenius norm per row.
    let row_norm = |r: &Row| -> f64 {
        let psd: f64 = r.psd.iter().map(|(&(_, p, q), v)| if p == q { v * v } else { 2.0 * v * v }).sum();
        let lp: f64 = r.lp.values().map(|v| v * v).sum();
        let fr: f64 = r.free.values().map(|v| v * v).sum();
        (psd + lp + fr).sqrt()
    };
    let mut keep = Vec::new();
    for (i, r) in rows.iter_mut().enumerate() {
        let nrm = row_norm(r);
        if nrm == 0.0 {
            if r.rhs.abs() > 1e-12 {
                return Presolve::Infeasible;
            }
            warn!("dropping empty equality {i}");
            continue;
        }
        for v in r.psd.values_mut().chain(r.lp.values_mut()).chain(r.free.values_mut()) {
            *v /= nrm;
        }
        r.rhs /= nrm;
        keep.push(i);
    }

    // Drop linearly dependent rows (checking consistency of their rhs).
    let mut col_index: BTreeMap<(u8, usize, usize, usize), usize> = BTreeMap::new();
    for &i in &keep {
        let r = &rows[i];
        for &(k, p, q) in r.psd.keys() {
            let n = col_index.len();
            col_index.entry((0, k, p, q)).or_insert(n);
        }
        for &j in r.lp.keys() {
            let n = col_index.len();
            col_index.entry((1, j, 0, 0)).or_insert(n);
        }
        for &j in r.free.keys() {
            let n = col_index.len();
            col_index.entry((2, j, 0, 0)).or_insert(n);
        }
    }
    let ncols = col_index.len();
    let dense_row = |r: &Row| -> DVector<f64> {
        let mut v = DVector::zeros(ncols);
        for (&(k, p, q), &val) in &r.psd {
            let w = if p == q { 1.0 } else { std::f64::consts::SQRT_2 };
            v[col_index[&(0, k, p, q)]] = w * val;
        }
        for (&j, &val) in &r.lp {
            v[col_index[&(1, j, 0, 0)]] = val;
        }
        for (&j, &val) in &r.free {
            v[col_index[&(2, j, 0, 0)]] = val;
        }
        v
    };
    // Gram-Schmidt with the basis expressed in terms of kept rows, so the
    // rhs of a dependent row can be predicted from the rhs of kept rows.
    let mut basis: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut kept = Vec::new();
    for &i in &keep {
        let a = dense_row(&rows[i]);
        let mut resid = a.clone();
        let mut rhs = rows[i].rhs;
        for _ in 0..2 {
            for (q, qb) in &basis {
                let c = q.dot(&resid);
                resid -= c * q;
                rhs -= c * qb;
            }
        }
        let nrm = resid.norm();
        if nrm < 1e-10 {
            if rhs.abs() > 1e-8 * (1.0 + rows[i].rhs.abs()) {
                return Presolve::Infeasible;
            }
            warn!("dropping linearly dependent equality {i}");
            continue;
        }
        basis.push((resid / nrm, rhs / nrm));
        kept.push(i);
    }

    let m = kept.len();
    let mut psd_rows: Vec<Vec<(usize, SymEntries)>> = vec![Vec::new(); psd_sizes.len()];
    let mut lp_rows = vec![Vec::new(); m];
    let mut free_rows = vec![Vec::new(); m];
    let mut b = DVector::zeros(m);
    for (t, &i) in kept.iter().enumerate() {
        let r = &rows[i];
        b[t] = r.rhs;
        let mut per_block: BTreeMap<usize, SymEntries> = BTreeMap::new();
        for (&(k, p, q), &v) in &r.psd {
            per_block.entry(k).or_default().push((p, q, v));
        }
        for (k, e) in per_block {
            psd_rows[k].push((t, e));
        }
        lp_rows[t] = r.lp.iter().map(|(&j, &v)| (j, v)).collect();
        free_rows[t] = r.free.iter().map(|(&j, &v)| (j, v)).collect();
    }

    // Minimization objective C = -objective.
    let mut c_psd: Vec<DMatrix<f64>> = psd_sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    let mut c_lp = DVector::zeros(lp_len);
    let mut c_free = DVector::zeros(free_len);
    for &(v, c) in &problem.objective.terms {
        let (kind, off) = layout[v.block];
        match kind {
            BlockKind::Psd(_) => {
                if v.i == v.j {
                    c_psd[off][(v.i, v.i)] -= c;
                } else {
                    c_psd[off][(v.i, v.j)] -= 0.5 * c;
                    c_psd[off][(v.j, v.i)] -= 0.5 * c;
                }
            }
            BlockKind::Nonneg(_) => c_lp[off + v.i] -= c,
            BlockKind::Free(_) => c_free[off + v.i] -= c,
        }
    }

    Presolve::Ready(Data {
        psd_sizes,
        lp_len,
        free_len,
        psd_rows,
        lp_rows,
        free_rows,
        b,
        c_psd,
        c_lp,
        c_free,
        layout,
        kept,
    })
}

impl Data {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn nu(&self) -> f64 {
        (self.psd_sizes.iter().sum::<usize>() + self.lp_len) as f64
    }

    fn apply_a(&self, x: &[DMatrix<f64>], xl: &DVector<f64>, xf: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (k, rows) in self.psd_rows.iter().enumerate() {
            for (i, e) in rows {
                out[*i] += sym_inner(e, &x[k]);
            }
        }
        for i in 0..self.m() {
            out[i] += self.lp_rows[i].iter().map(|&(j, v)| v * xl[j]).sum::<f64>();
            out[i] += self.free_rows[i].iter().map(|&(j, v)| v * xf[j]).sum::<f64>();
        }
        out
    }

    fn apply_at_psd(&self, y: &DVector<f64>, k: usize) -> DMatrix<f64> {
        let s = self.psd_sizes[k];
        let mut out = DMatrix::zeros(s, s);
        for (i, e) in &self.psd_rows[k] {
            sym_add(e, y[*i], &mut out);
        }
        out
    }

    fn apply_at_lp(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.lp_len);
        for (i, row) in self.lp_rows.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v * y[i];
            }
        }
        out
    }

    fn apply_at_free(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.free_len);
        for (i, row) in self.free_rows.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v * y[i];
            }
        }
        out
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let rp = &self.b - self.apply_a(&it.x, &it.xl, &it.xf);
        let rd = (0..self.psd_sizes.len())
            .map(|k| &self.c_psd[k] - &it.z[k] - self.apply_at_psd(&it.y, k))
            .collect();
        let rdl = &self.c_lp - &it.zl - self.apply_at_lp(&it.y);
        let rf = &self.c_free - self.apply_at_free(&it.y);
        Residuals { rp, rd, rdl, rf }
    }

    fn primal_obj(&self, it: &Iterate) -> f64 {
        self.c_psd.iter().zip(&it.x).map(|(c, x)| frob_dot(c, x)).sum::<f64>()
            + self.c_lp.dot(&it.xl)
            + self.c_free.dot(&it.xf)
    }

    fn c_norm(&self) -> f64 {
        let s: f64 = self.c_psd.iter().map(|c| c.norm_squared()).sum();
        (s + self.c_lp.norm_squared() + self.c_free.norm_squared()).sqrt()
    }

    fn complementarity(&self, it: &Iterate) -> f64 {
        it.x.iter().zip(&it.z).map(|(x, z)| frob_dot(x, z)).sum::<f64>() + it.xl.dot(&it.zl)
    }

    fn initial_point(&self) -> Iterate {
        let m = self.m();
        let mut x = Vec::new();
        let mut z = Vec::new();
        for (k, &s) in self.psd_sizes.iter().enumerate() {
            let sf = s as f64;
            let mut xi: f64 = 10f64.max(sf.sqrt());
            let mut eta: f64 = 10f64.max(sf.sqrt()).max(self.c_psd[k].norm());
            for (i, e) in &self.psd_rows[k] {
                let an: f64 = e
                    .iter()
                    .map(|&(p, q, v)| if p == q { v * v } else { 2.0 * v * v })
                    .sum::<f64>()
                    .sqrt();
                xi = xi.max(sf * (1.0 + self.b[*i].abs()) / (1.0 + an));
                eta = eta.max(an);
            }
            x.push(DMatrix::identity(s, s) * xi);
            z.push(DMatrix::identity(s, s) * eta);
        }
        let mut xl0: f64 = 10.0;
        let mut zl0: f64 = 10f64.max(self.c_lp.amax());
        for i in 0..m {
            let an: f64 = self.lp_rows[i].iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if an > 0.0 {
                xl0 = xl0.max((1.0 + self.b[i].abs()) / an);
                zl0 = zl0.max(an);
            }
        }
        Iterate {
            x,
            z,
            xl: DVector::from_element(self.lp_len, xl0),
            zl: DVector::from_element(self.lp_len, zl0),
            xf: DVector::zeros(self.free_len),
            y: DVector::zeros(m),
        }
    }

    /// Schur complement `M_ij = Σ_k <A_i^k, X_k A_j^k Z_k⁻¹> + Σ_l a_il a_jl x_l / z_l`.
    fn schur(&self, it: &Iterate, zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.m();
        let mut mm = DMatrix::zeros(m, m);
        for (k, rows) in self.psd_rows.iter().enumerate() {
            let s = self.psd_sizes[k];
            let x = &it.x[k];
            let zi = &zinv[k];
            for (tj, (j, ej)) in rows.iter().enumerate() {
                let mut bmat = DMatrix::zeros(s, s);
                for &(p, q, v) in ej {
                    rank_one_add(&mut bmat, v, x, p, zi, q);
                    if p != q {
                        rank_one_add(&mut bmat, v, x, q, zi, p);
                    }
                }
                for (i, ei) in &rows[..=tj] {
                    let val = sym_inner(ei, &bmat);
                    mm[(*i, *j)] += val;
                    if i != j {
                        mm[(*j, *i)] += val;
                    }
                }
            }
        }
        if self.lp_len > 0 {
            let d: Vec<f64> = it.xl.iter().zip(it.zl.iter()).map(|(x, z)| x / z).collect();
            for i in 0..m {
                for j in i..m {
                    let mut acc = 0.0;
                    // rows are short and sorted
                    let (ri, rj) = (&self.lp_rows[i], &self.lp_rows[j]);
                    let (mut a, mut b) = (0, 0);
                    while a < ri.len() && b < rj.len() {
                        match ri[a].0.cmp(&rj[b].0) {
                            std::cmp::Ordering::Less => a += 1,
                            std::cmp::Ordering::Greater => b += 1,
                            std::cmp::Ordering::Equal => {
                                acc += ri[a].1 * rj[b].1 * d[ri[a].0];
                                a += 1;
                                b += 1;
                            }
                        }
                    }
                    if acc != 0.0 {
                        mm[(i, j)] += acc;
                        if i != j {
                            mm[(j, i)] += acc;
                        }
                    }
                }
            }
        }
        mm
    }

    /// Rows of the constraint map in plain variable coordinates
    /// (`X_pq`, `p ≤ q`, per PSD block, then nonnegative, then free).
    fn dense_rows(&self) -> DMatrix<f64> {
        let mut offsets = Vec::with_capacity(self.psd_sizes.len());
        let mut off = 0;
        for &s in &self.psd_sizes {
            offsets.push(off);
            off += s * (s + 1) / 2;
        }
        let (lp_off, free_off) = (off, off + self.lp_len);
        let mut d = DMatrix::zeros(self.m(), free_off + self.free_len);
        for (k, rows) in self.psd_rows.iter().enumerate() {
            let s = self.psd_sizes[k];
            for (i, e) in rows {
                for &(p, q, v) in e {
                    d[(*i, offsets[k] + tri_index(s, p, q))] += if p == q { v } else { 2.0 * v };
                }
            }
        }
        for i in 0..self.m() {
            for &(j, v) in &self.lp_rows[i] {
                d[(i, lp_off + j)] += v;
            }
            for &(j, v) in &self.free_rows[i] {
                d[(i, free_off + j)] += v;
            }
        }
        d
    }

    /// Dense constraint rows with a factorization of their Gram matrix,
    /// used for minimum-norm corrections onto the equalities.
    fn projector(&self) -> Option<Projector> {
        let d = self.dense_rows();
        let chol = Cholesky::new(&d * d.transpose())?;
        Some(Projector { d, chol })
    }

    fn correct_step(&self, proj: &Projector, rp: &DVector<f64>, d: &mut Direction) {
        let err = rp - self.apply_a(&d.dx, &d.dxl, &d.dxf);
        let delta = proj.d.transpose() * proj.chol.solve(&err);
        self.add_flat(&delta, &mut d.dx, &mut d.dxl, &mut d.dxf);
    }

    /// Adds a vector in the flattened primal layout to the primal blocks.
    fn add_flat(&self, delta: &DVector<f64>, x: &mut [DMatrix<f64>], xl: &mut DVector<f64>, xf: &mut DVector<f64>) {
        let mut off = 0;
        for (k, &s) in self.psd_sizes.iter().enumerate() {
            for p in 0..s {
                for q in p..s {
                    let v = delta[off + tri_index(s, p, q)];
                    x[k][(p, q)] += v;
                    if p != q {
                        x[k][(q, p)] += v;
                    }
                }
            }
            off += s * (s + 1) / 2;
        }
        for j in 0..self.lp_len {
            xl[j] += delta[off + j];
        }
        off += self.lp_len;
        for j in 0..self.free_len {
            xf[j] += delta[off + j];
        }
    }

    /// Minimum-norm correction onto the affine constraint set. With
    /// `interior`, the correction must keep every block's smallest
    /// eigenvalue at least half of what it was; otherwise it only has to
    /// stay numerically inside the cones. Returns whether it was applied.
    fn polish(&self, proj: &Projector, it: &mut Iterate, interior: bool) -> bool {
        let rp = &self.b - self.apply_a(&it.x, &it.xl, &it.xf);
        if rp.amax() == 0.0 {
            return false;
        }
        let delta = proj.d.transpose() * proj.chol.solve(&rp);
        let mut cand = it.clone();
        self.add_flat(&delta, &mut cand.x, &mut cand.xl, &mut cand.xf);
        let before = rp.amax();
        let after = (&self.b - self.apply_a(&cand.x, &cand.xl, &cand.xf)).amax();
        let min_eig = |x: &DMatrix<f64>| SymmetricEigen::new(x.clone()).eigenvalues.min();
        let cone_ok = if interior {
            cand.xl.iter().zip(it.xl.iter()).all(|(&c, &o)| c >= 0.5 * o)
                && cand.x.iter().zip(&it.x).all(|(c, o)| min_eig(c) >= 0.5 * min_eig(o))
        } else {
            cand.xl.iter().all(|&v| v >= 0.0) && cand.x.iter().all(|x| min_eig(x) >= -1e-10)
        };
        if after < before && cone_ok {
            *it = cand;
            true
        } else {
            trace!("polish rejected: residual {before:e} -> {after:e}, cones ok: {cone_ok}");
            false
        }
    }

    fn free_matrix(&self) -> DMatrix<f64> {
        let mut af = DMatrix::zeros(self.m(), self.free_len);
        for (i, row) in self.free_rows.iter().enumerate() {
            for &(j, v) in row {
                af[(i, j)] += v;
            }
        }
        af
    }
}

/// Position of `(p, q)`, `p ≤ q`, in the row-wise upper triangle of order `s`.
fn tri_index(s: usize, p: usize, q: usize) -> usize {
    p * s - p * (p + 1) / 2 + q
}

/// `B += v · X[:, p] ⊗ Zinv[q, :]`
fn rank_one_add(b: &mut DMatrix<f64>, v: f64, x: &DMatrix<f64>, p: usize, zi: &DMatrix<f64>, q: usize) {
    let s = b.nrows();
    for c in 0..s {
        let zq = v * zi[(q, c)];
        if zq == 0.0 {
            continue;
        }
        for r in 0..s {
            b[(r, c)] += x[(r, p)] * zq;
        }
    }
}

enum KktFactor {
    Chol { chol: Cholesky<f64, nalgebra::Dyn>, minv_af: DMatrix<f64>, s_chol: Option<Cholesky<f64, nalgebra::Dyn>> },
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl KktFactor {
    fn new(mm: &DMatrix<f64>, af: &DMatrix<f64>) -> Option<KktFactor> {
        let m = mm.nrows();
        let nf = af.ncols();
        if let Some(chol) = Cholesky::new(mm.clone()) {
            if nf == 0 {
                return Some(KktFactor::Chol { chol, minv_af: DMatrix::zeros(m, 0), s_chol: None });
            }
            let minv_af = chol.solve(af);
            let s = af.transpose() * &minv_af;
            if let Some(s_chol) = Cholesky::new(symmetrize(&s)) {
                return Some(KktFactor::Chol { chol, minv_af, s_chol: Some(s_chol) });
            }
        }
        let mut k = DMatrix::zeros(m + nf, m + nf);
        k.view_mut((0, 0), (m, m)).copy_from(mm);
        k.view_mut((0, m), (m, nf)).copy_from(af);
        k.view_mut((m, 0), (nf, m)).copy_from(&af.transpose());
        let lu = k.lu();
        if lu.is_invertible() {
            Some(KktFactor::Lu(lu))
        } else {
            None
        }
    }

    /// Solves `[M A_f; A_fᵀ 0] [dy; dxf] = [h; rf]`.
    fn solve(&self, af: &DMatrix<f64>, h: &DVector<f64>, rf: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        match self {
            KktFactor::Chol { chol, minv_af, s_chol } => {
                let minv_h = chol.solve(h);
                match s_chol {
                    None => Some((minv_h, DVector::zeros(0))),
                    Some(sc) => {
                        let rhs = af.transpose() * &minv_h - rf;
                        let dxf = sc.solve(&rhs);
                        let dy = minv_h - minv_af * &dxf;
                        Some((dy, dxf))
                    }
                }
            }
            KktFactor::Lu(lu) => {
                let m = h.len();
                let mut rhs = DVector::zeros(m + rf.len());
                rhs.rows_mut(0, m).copy_from(h);
                rhs.rows_mut(m, rf.len()).copy_from(rf);
                let sol = lu.solve(&rhs)?;
                Some((sol.rows(0, m).into_owned(), sol.rows(m, rf.len()).into_owned()))
            }
        }
    }
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    relgap: f64,
    pinf: f64,
    dinf: f64,
}

impl Metrics {
    fn merit(&self) -> f64 {
        self.relgap.max(self.pinf).max(self.dinf)
    }
}

fn all_finite(it: &Iterate) -> bool {
    it.x.iter().chain(&it.z).all(|m| m.iter().all(|v| v.is_finite()))
        && it.xl.iter().chain(it.zl.iter()).chain(it.xf.iter()).chain(it.y.iter()).all(|v| v.is_finite())
}

pub(crate) fn solve_raw(problem: &ConicProblem, opts: SolverOptions) -> RawSolution {
    let data = match presolve(problem) {
        Presolve::Ready(d) => d,
        Presolve::Infeasible => {
            return RawSolution {
                status: SolveStatus::Infeasible,
                blocks: zero_blocks(problem),
                primal_obj: f64::NAN,
                dual_obj: f64::NAN,
                iterations: 0,
            }
        }
    };
    let af = data.free_matrix();
    let proj = data.projector();
    let nu = data.nu().max(1.0);
    let b_norm = data.b.norm();
    let c_norm = data.c_norm();
    let npsd = data.psd_sizes.len();

    let mut it = data.initial_point();
    let mut best: Option<(f64, Iterate)> = None;
    // lowest gap among nearly feasible iterates; a polish may rescue it
    let mut best_gap: Option<(f64, Iterate)> = None;
    let mut stall = 0;
    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;

    let metrics = |it: &Iterate, res: &Residuals| -> Metrics {
        let pobj = data.primal_obj(it);
        let dobj = data.b.dot(&it.y);
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let comp = data.complementarity(it);
        let relgap = (pobj - dobj).abs().max(comp.abs()) / denom;
        let pinf = res.rp.norm() / (1.0 + b_norm);
        let dsq: f64 = res.rd.iter().map(|r| r.norm_squared()).sum::<f64>()
            + res.rdl.norm_squared()
            + res.rf.norm_squared();
        let dinf = dsq.sqrt() / (1.0 + c_norm);
        Metrics { pobj, dobj, relgap, pinf, dinf }
    };

    for iter in 0..opts.iter_limit {
        iterations = iter;
        if !all_finite(&it) {
            status = SolveStatus::NumericalBreakdown;
            break;
        }
        let res = data.residuals(&it);
        let met = metrics(&it, &res);
        debug!(
            "iter {iter}: pobj {:.10e} dobj {:.10e} gap {:.2e} pinf {:.2e} dinf {:.2e}",
            met.pobj, met.dobj, met.relgap, met.pinf, met.dinf
        );
        let merit = met.merit();
        if best.as_ref().map_or(true, |(m, _)| merit < *m) {
            best = Some((merit, it.clone()));
            stall = 0;
        } else {
            stall += 1;
        }
        if met.pinf <= 1e-6
            && met.dinf <= opts.loose_tol
            && best_gap.as_ref().map_or(true, |(g, _)| met.relgap < *g)
        {
            best_gap = Some((met.relgap, it.clone()));
        }
        if merit <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }

        // Certificates of infeasibility from diverging iterates.
        let by = met.dobj;
        if by > 1e6 {
            let dres: f64 = (res
                .rd
                .iter()
                .zip(&data.c_psd)
                .map(|(r, c)| (c - r).norm_squared())
                .sum::<f64>()
                + (&data.c_lp - &res.rdl).norm_squared()
                + (&data.c_free - &res.rf).norm_squared())
            .sqrt();
            if dres / by < 1e-8 {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        let t = -met.pobj;
        if t > 1e6 && (&data.b - &res.rp).norm() / t < 1e-8 {
            status = SolveStatus::Unbounded;
            break;
        }
        if stall >= 8 {
            status = SolveStatus::NumericalBreakdown;
            break;
        }

        let mu = data.complementarity(&it) / nu;
        let zinv: Option<Vec<DMatrix<f64>>> = it
            .z
            .iter()
            .map(|z| Cholesky::new(z.clone()).map(|c| c.inverse()))
            .collect();
        let Some(zinv) = zinv.map(|v| v.into_iter().map(|m| symmetrize(&m)).collect::<Vec<_>>()) else {
            status = SolveStatus::NumericalBreakdown;
            break;
        };
        let mm = data.schur(&it, &zinv);
        let Some(kkt) = KktFactor::new(&mm, &af) else {
            status = SolveStatus::NumericalBreakdown;
            break;
        };

        let direction = |rc: &[DMatrix<f64>], rcl: &DVector<f64>| -> Option<Direction> {
            // G_k = (Rc_k - X_k Rd_k) Z_k⁻¹,  g_l = (rc_l - x_l rd_l) / z_l
            let g: Vec<DMatrix<f64>> = (0..npsd)
                .map(|k| (&rc[k] - &it.x[k] * &res.rd[k]) * &zinv[k])
                .collect();
            let gl = DVector::from_iterator(
                data.lp_len,
                (0..data.lp_len).map(|j| (rcl[j] - it.xl[j] * res.rdl[j]) / it.zl[j]),
            );
            let mut h = res.rp.clone();
            for (k, rows) in data.psd_rows.iter().enumerate() {
                for (i, e) in rows {
                    h[*i] -= sym_inner(e, &g[k]);
                }
            }
            for i in 0..data.m() {
                h[i] -= data.lp_rows[i].iter().map(|&(j, v)| v * gl[j]).sum::<f64>();
            }
            let (mut dy, mut dxf) = kkt.solve(&af, &h, &res.rf)?;
            // iterative refinement against the assembled system
            for _ in 0..2 {
                let r1 = &h - &mm * &dy - &af * &dxf;
                let r2 = &res.rf - af.transpose() * &dy;
                let (cy, cf) = kkt.solve(&af, &r1, &r2)?;
                dy += cy;
                dxf += cf;
            }
            let mut dx = Vec::with_capacity(npsd);
            let mut dz = Vec::with_capacity(npsd);
            for k in 0..npsd {
                let dzk = &res.rd[k] - data.apply_at_psd(&dy, k);
                let dxk = symmetrize(&((&rc[k] - &it.x[k] * &dzk) * &zinv[k]));
                dx.push(dxk);
                dz.push(dzk);
            }
            let dzl = &res.rdl - data.apply_at_lp(&dy);
            let dxl = DVector::from_iterator(
                data.lp_len,
                (0..data.lp_len).map(|j| (rcl[j] - it.xl[j] * dzl[j]) / it.zl[j]),
            );
            let mut d = Direction { dx, dz, dxl, dzl, dxf, dy };
            // The recovered primal step inherits the conditioning of Z⁻¹;
            // project it so that A·dx reproduces the primal residual.
            if let Some(p) = &proj {
                data.correct_step(p, &res.rp, &mut d);
            }
            Some(d)
        };

        let max_steps = |d: &Direction| -> Option<(f64, f64)> {
            let mut ap = lp_step(&it.xl, &d.dxl);
            let mut ad = lp_step(&it.zl, &d.dzl);
            for k in 0..npsd {
                ap = ap.min(psd_step(&it.x[k], &d.dx[k])?);
                ad = ad.min(psd_step(&it.z[k], &d.dz[k])?);
            }
            Some((ap, ad))
        };

        // predictor
        let rc_aff: Vec<DMatrix<f64>> = (0..npsd).map(|k| -(&it.x[k] * &it.z[k])).collect();
        let rcl_aff = -it.xl.component_mul(&it.zl);
        let Some(aff) = direction(&rc_aff, &rcl_aff) else {
            status = SolveStatus::NumericalBreakdown;
            break;
        };
        let Some((ap_a, ad_a)) = max_steps(&aff) else {
            status = SolveStatus::NumericalBreakdown;
            break;
        };
        let (ap_a, ad_a) = (ap_a.min(1.0), ad_a.min(1.0));
        let mut comp_aff = 0.0;
        for k in 0..npsd {
            comp_aff += frob_dot(&(&it.x[k] + ap_a * &aff.dx[k]), &(&it.z[k] + ad_a * &aff.dz[k]));
        }
        comp_aff += (&it.xl + ap_a * &aff.dxl).dot(&(&it.zl + ad_a * &aff.dzl));
        let mu_aff = comp_aff / nu;
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powi(3).min(1.0) } else { 0.0 };

        // corrector
        let rc: Vec<DMatrix<f64>> = (0..npsd)
            .map(|k| {
                let s = it.x[k].nrows();
                DMatrix::identity(s, s) * (sigma * mu) - &it.x[k] * &it.z[k] - &aff.dx[k] * &aff.dz[k]
            })
            .collect();
        let rcl = DVector::from_iterator(
            data.lp_len,
            (0..data.lp_len).map(|j| sigma * mu - it.xl[j] * it.zl[j] - aff.dxl[j] * aff.dzl[j]),
        );
        let Some(dir) = direction(&rc, &rcl) else {
            status = SolveStatus::NumericalBreakdown;
            break;
        };
        let Some((ap, ad)) = max_steps(&dir) else {
            status = SolveStatus::NumericalBreakdown;
            break;
        };
        let tau = 0.95;
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            status = SolveStatus::NumericalBreakdown;
            break;
        }
        for k in 0..npsd {
            it.x[k] = symmetrize(&(&it.x[k] + ap * &dir.dx[k]));
            it.z[k] = symmetrize(&(&it.z[k] + ad * &dir.dz[k]));
        }
        it.xl += ap * &dir.dxl;
        it.zl += ad * &dir.dzl;
        it.xf += ap * &dir.dxf;
        it.y += ad * &dir.dy;
        iterations = iter + 1;

    }

    // Fall back to the best iterate seen when the loop stopped early,
    // trying a polish on the candidates before giving up.
    let mut final_it = match status {
        SolveStatus::Optimal | SolveStatus::Infeasible | SolveStatus::Unbounded => it,
        _ => {
            let (merit, best_it) = best.expect("at least one iterate evaluated");
            let mut rescued = None;
            for cand in std::iter::once(best_it.clone()).chain(best_gap.map(|(_, c)| c)) {
                let mut cand = cand;
                if let Some(p) = &proj {
                    data.polish(p, &mut cand, false);
                }
                let m = metrics(&cand, &data.residuals(&cand)).merit();
                debug!("fallback candidate merit after polish {m:e}");
                if m <= opts.loose_tol {
                    rescued = Some(cand);
                    break;
                }
            }
            match rescued {
                Some(c) => {
                    status = SolveStatus::Optimal;
                    c
                }
                None => {
                    debug!("best merit {merit:e} above loose tolerance");
                    best_it
                }
            }
        }
    };
    if status == SolveStatus::Optimal {
        if let Some(p) = &proj {
            data.polish(p, &mut final_it, false);
        }
    }
    let pobj = data.primal_obj(&final_it);
    let dobj = data.b.dot(&final_it.y);
    debug!("finished with {status:?} after {iterations} iterations ({} rows kept)", data.kept.len());
    RawSolution {
        status,
        blocks: extract_blocks(&data, &final_it),
        primal_obj: pobj,
        dual_obj: dobj,
        iterations,
    }
}

fn extract_blocks(data: &Data, it: &Iterate) -> Vec<BlockValue> {
    data.layout
        .iter()
        .map(|&(kind, off)| match kind {
            BlockKind::Psd(_) => BlockValue::Psd(it.x[off].clone()),
            BlockKind::Nonneg(s) => BlockValue::Vector(it.xl.rows(off, s).iter().copied().collect()),
            BlockKind::Free(s) => BlockValue::Vector(it.xf.rows(off, s).iter().copied().collect()),
        })
        .collect()
}

fn zero_blocks(problem: &ConicProblem) -> Vec<BlockValue> {
    problem
        .blocks
        .iter()
        .map(|k| match *k {
            BlockKind::Psd(s) => BlockValue::Psd(DMatrix::zeros(s, s)),
            BlockKind::Nonneg(s) | BlockKind::Free(s) => BlockValue::Vector(vec![0.0; s]),
        })
        .collect()
}
