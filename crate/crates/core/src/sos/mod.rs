//! Sum-of-squares polynomial Lyapunov functions.
//!
//! A degree-`d` form `p` certifies `ρ(Σ) < γ` when `p` and every
//! `γᵈ·p(x) − p(A_i x)` are sums of squares with a strictly positive
//! definite Gram matrix over the degree-`d/2` monomial basis.

mod poly;

pub use poly::{composition_matrix, monomials, HomogeneousPolynomial, MonomialIndex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conic::{self, min_eigenvalue, BlockValue, ConicProblem, LinearFunctional, SolveStatus, Var};
use crate::error::{Error, Result};
use crate::jsr::{rho_lower, rho_upper};
use crate::linalg::{random_unit_vectors, Matrix, MatrixSet};
use crate::{Status, DEFAULT_SEED, VALIDATION_SAMPLES};

/// Margins in `[-UNDETERMINED_BAND, MARGIN_TOL]` are too close to zero to
/// call either way.
pub const UNDETERMINED_BAND: f64 = 1e-7;
/// Largest accepted Gram reconstruction residual.
pub const GRAM_TOL: f64 = 1e-7;
/// Iteration limit used for every SOS solve.
pub const SOS_ITER_LIMIT: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramCertificate {
    pub basis: Vec<Vec<u32>>,
    pub gram: Vec<Vec<f64>>,
    pub margin: f64,
}

impl GramCertificate {
    fn from_matrix(n: usize, half: u32, m: &DMatrix<f64>, margin: f64) -> Self {
        let gram = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect())
            .collect();
        GramCertificate { basis: monomials(n, half), gram, margin }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let s = self.gram.len();
        DMatrix::from_fn(s, s, |i, j| self.gram[i][j])
    }

    /// The polynomial `z(x)ᵀ G z(x)`.
    pub fn polynomial(&self) -> Result<HomogeneousPolynomial> {
        let s = self.basis.len();
        if s == 0 || self.gram.len() != s || self.gram.iter().any(|r| r.len() != s) {
            return Err(Error::Malformed("Gram matrix does not match its basis".into()));
        }
        let n = self.basis[0].len();
        let half: u32 = self.basis[0].iter().sum();
        if self.basis != monomials(n, half) {
            return Err(Error::Malformed("Gram basis is not the graded-lex monomial basis".into()));
        }
        let idx = MonomialIndex::new(n, 2 * half);
        let mut coeffs = vec![0.0; idx.len()];
        let mut e = vec![0; n];
        for a in 0..s {
            for b in 0..s {
                for k in 0..n {
                    e[k] = self.basis[a][k] + self.basis[b][k];
                }
                coeffs[idx.get(&e).expect("degree adds up")] += self.gram[a][b];
            }
        }
        HomogeneousPolynomial::from_coeffs(n, 2 * half, coeffs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SosLyapunovCertificate {
    pub set: MatrixSet,
    pub degree: u32,
    pub gamma: f64,
    pub p: HomogeneousPolynomial,
    pub gram_p: GramCertificate,
    /// One per matrix, for `γᵈ·p(x) − p(A_i x)`.
    pub gram_decrease: Vec<GramCertificate>,
    /// Optimal margin of the normalized solve.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub enum SosOutcome {
    Feasible(Box<SosLyapunovCertificate>),
    Infeasible { margin: Option<f64> },
    Undetermined { margin: Option<f64>, reason: String },
}

impl SosOutcome {
    pub fn status(&self) -> Status {
        match self {
            SosOutcome::Feasible(_) => Status::Feasible,
            SosOutcome::Infeasible { .. } => Status::Infeasible,
            SosOutcome::Undetermined { .. } => Status::Undetermined,
        }
    }

    pub fn margin(&self) -> Option<f64> {
        match self {
            SosOutcome::Feasible(c) => Some(c.margin),
            SosOutcome::Infeasible { margin } | SosOutcome::Undetermined { margin, .. } => *margin,
        }
    }

    pub fn certificate(&self) -> Option<&SosLyapunovCertificate> {
        match self {
            SosOutcome::Feasible(c) => Some(c),
            _ => None,
        }
    }
}

/// Pairs `(a, b)`, `a ≤ b`, of half-degree basis indices grouped by the
/// degree-`d` monomial `z_a z_b`, with the coefficient that `G_ab` carries.
fn gram_pairs(n: usize, half: u32) -> Vec<Vec<(usize, usize, f64)>> {
    let basis = monomials(n, half);
    let idx = MonomialIndex::new(n, 2 * half);
    let mut out = vec![Vec::new(); idx.len()];
    let mut e = vec![0; n];
    for a in 0..basis.len() {
        for b in a..basis.len() {
            for k in 0..n {
                e[k] = basis[a][k] + basis[b][k];
            }
            out[idx.get(&e).expect("degree adds up")].push((a, b, if a == b { 1.0 } else { 2.0 }));
        }
    }
    out
}

fn check_degree(d: u32) -> Result<u32> {
    if d < 2 || d % 2 != 0 {
        return Err(Error::param(format!("degree must be even and at least 2, got {d}")));
    }
    Ok(d / 2)
}

/// SOS membership problem: one PSD Gram block per target, with each target
/// coefficient matched by the Gram entries whose basis-pair product gives
/// that monomial. Returns the problem and the blocks flagged for a margin.
pub fn gram_problem(targets: &[HomogeneousPolynomial], margins: &[bool]) -> Result<(ConicProblem, Vec<usize>)> {
    let first = targets.first().ok_or_else(|| Error::param("gram_problem needs at least one target"))?;
    if margins.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: targets.len(), found: margins.len() });
    }
    let (n, d) = (first.n(), first.degree());
    let half = check_degree(d)?;
    let pairs = gram_pairs(n, half);
    let size = monomials(n, half).len();
    let mut problem = ConicProblem::new();
    let mut margin_blocks = Vec::new();
    for (t, flag) in targets.iter().zip(margins) {
        if t.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: t.n() });
        }
        if t.degree() != d {
            return Err(Error::param(format!("target degrees differ: {} vs {d}", t.degree())));
        }
        let b = problem.add_psd(size);
        if *flag {
            margin_blocks.push(b);
        }
        for (m, ps) in pairs.iter().enumerate() {
            let lhs: Vec<_> = ps.iter().map(|&(i, j, c)| (Var::entry(b, i, j), c)).collect();
            problem.add_equality(lhs, t.coeffs()[m]);
        }
    }
    Ok((problem, margin_blocks))
}

fn is_even_monomial(e: &[u32]) -> bool {
    e.iter().all(|k| k % 2 == 0)
}

/// Lyapunov problem for the matrices already divided by `γ`: block 0 is the
/// Gram matrix of `p`, block `1 + i` the Gram matrix of `p − p∘(A_i/γ)`.
fn lyapunov_problem(scaled: &[Matrix], n: usize, d: u32) -> Result<ConicProblem> {
    let half = check_degree(d)?;
    let pairs = gram_pairs(n, half);
    let size = monomials(n, half).len();
    let nmon = pairs.len();
    let mut problem = ConicProblem::new();
    let pb = problem.add_psd(size);

    // coefficient t of p as a functional of block 0
    let coeff = |t: usize, w: f64, f: &mut LinearFunctional| {
        for &(i, j, c) in &pairs[t] {
            f.add(Var::entry(pb, i, j), w * c);
        }
    };

    for a in scaled {
        let m = composition_matrix(n, d, a);
        let gb = problem.add_psd(size);
        for t in 0..nmon {
            let mut f = LinearFunctional::new();
            for &(i, j, c) in &pairs[t] {
                f.add(Var::entry(gb, i, j), c);
            }
            // − (p_t − Σ_s M_ts p_s)
            for s in 0..nmon {
                let w = if s == t { 1.0 } else { 0.0 } - m[(t, s)];
                if w.abs() > 1e-300 {
                    coeff(s, -w, &mut f);
                }
            }
            problem.add_equality(merge_terms(f), 0.0);
        }
    }

    let mut norm = LinearFunctional::new();
    for (t, e) in monomials(n, d).iter().enumerate() {
        if is_even_monomial(e) {
            coeff(t, 1.0, &mut norm);
        }
    }
    problem.add_equality(merge_terms(norm), 1.0);
    Ok(problem)
}

fn merge_terms(f: LinearFunctional) -> LinearFunctional {
    let mut terms = f.terms;
    terms.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(Var, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some((lv, lc)) if *lv == v => *lc += c,
            _ => out.push((v, c)),
        }
    }
    out.into()
}

/// Searches a degree-`d` SOS Lyapunov function certifying contraction factor
/// `gamma`. Normalization: `p`'s coefficients on monomials with only even
/// exponents sum to 1.
pub fn sos_lyapunov_feasible(set: &MatrixSet, d: u32, gamma: f64) -> Result<SosOutcome> {
    let half = check_degree(d)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma must be positive and finite"));
    }
    let n = set.dim();
    let scaled: Vec<Matrix> = set.matrices().iter().map(|a| a.scale(1.0 / gamma)).collect();
    let problem = lyapunov_problem(&scaled, n, d)?;
    let blocks: Vec<usize> = (0..problem.blocks.len()).collect();
    let sol = conic::feasibility_with_margin(&problem, &blocks, SOS_ITER_LIMIT)?;
    let lam = sol.margin;
    log::debug!("sos d={d} gamma={gamma}: {:?} margin {lam:?}", sol.status);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::MarginBelowTolerance => {
            let l = lam.unwrap_or(f64::NAN);
            return Ok(if l < -UNDETERMINED_BAND {
                SosOutcome::Infeasible { margin: lam }
            } else {
                SosOutcome::Undetermined { margin: lam, reason: format!("margin {l:e} inside the undetermined band") }
            });
        }
        SolveStatus::Infeasible => return Ok(SosOutcome::Infeasible { margin: None }),
        s => return Ok(SosOutcome::Undetermined { margin: lam, reason: format!("solver status {s:?}") }),
    }
    let lam = lam.expect("margin solve reports a margin");

    let mat = |b: usize| match &sol.blocks[b] {
        BlockValue::Psd(m) => m.clone(),
        BlockValue::Vector(_) => unreachable!("Gram blocks are PSD"),
    };
    let gram_p = GramCertificate::from_matrix(n, half, &mat(0), lam);
    let p = gram_p.polynomial()?;
    let gd = gamma.powi(d as i32);
    let gram_decrease = (0..set.len())
        .map(|i| GramCertificate::from_matrix(n, half, &(mat(1 + i) * gd), lam * gd))
        .collect();
    let cert = SosLyapunovCertificate {
        set: set.clone(),
        degree: d,
        gamma,
        p,
        gram_p,
        gram_decrease,
        margin: lam,
    };
    let v = validate_sos(&cert, DEFAULT_SEED)?;
    if !v.passed {
        return Ok(SosOutcome::Undetermined { margin: Some(lam), reason: format!("certificate failed validation: {v:?}") });
    }
    Ok(SosOutcome::Feasible(Box::new(cert)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SosValidation {
    pub max_gram_residual: f64,
    /// `min_eig(G) − margin` over all Gram matrices (must be ≥ −1e-9·scale).
    pub min_eigenvalue_slack: f64,
    pub min_margin: f64,
    /// Smallest sampled `p(x)` and `γᵈp(x) − p(A_i x)` after adding the
    /// rounding allowance from the coefficient residual.
    pub min_sampled_value: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Solver-free check of a certificate.
pub fn validate_sos(cert: &SosLyapunovCertificate, seed: u64) -> Result<SosValidation> {
    let n = cert.set.dim();
    let d = cert.degree;
    check_degree(d)?;
    if cert.p.n() != n || cert.p.degree() != d {
        return Err(Error::Malformed("polynomial does not match the matrix set".into()));
    }
    if cert.gram_decrease.len() != cert.set.len() {
        return Err(Error::Malformed("need one decrease Gram matrix per matrix".into()));
    }
    let gd = cert.gamma.powi(d as i32);
    let mut targets = vec![cert.p.clone()];
    for a in cert.set.matrices() {
        targets.push(cert.p.scale(gd).sub(&cert.p.compose_linear(a)?)?);
    }
    let grams: Vec<&GramCertificate> = std::iter::once(&cert.gram_p).chain(&cert.gram_decrease).collect();

    let mut max_res = 0.0_f64;
    let mut slack = f64::INFINITY;
    let mut min_margin = f64::INFINITY;
    let mut ok = true;
    let mut allowances = Vec::new();
    for (g, t) in grams.iter().zip(&targets) {
        let rec = g.polynomial()?;
        if rec.n() != n || rec.degree() != d {
            return Err(Error::Malformed("Gram basis has the wrong degree".into()));
        }
        let diff = rec.sub(t)?;
        max_res = max_res.max(diff.coeffs().iter().fold(0.0, |m, c| m.max(c.abs())));
        allowances.push(diff.coeffs().iter().map(|c| c.abs()).sum::<f64>());
        let scale = g.margin.abs().max(1.0);
        let s = min_eigenvalue(&g.matrix()) - g.margin;
        slack = slack.min(s);
        ok &= s >= -1e-9 * scale;
        min_margin = min_margin.min(g.margin);
        ok &= g.margin > conic::MARGIN_TOL;
    }
    ok &= max_res <= GRAM_TOL;

    // |x^α| ≤ 1 on the unit sphere, so a coefficient residual r shifts the
    // value by at most ‖r‖₁.
    let mut min_val = f64::INFINITY;
    let pts = random_unit_vectors(n, VALIDATION_SAMPLES, seed);
    for x in &pts {
        let px = cert.p.eval(x);
        let rounding = 1e-12 * (1.0 + px.abs());
        min_val = min_val.min(px + allowances[0] + rounding);
        for (i, a) in cert.set.matrices().iter().enumerate() {
            let q = cert.p.eval(&a.apply(x));
            let v = gd * px - q;
            let rounding = 1e-12 * (1.0 + (gd * px).abs() + q.abs());
            min_val = min_val.min(v + allowances[1 + i] + rounding);
        }
    }
    ok &= min_val >= 0.0;
    Ok(SosValidation {
        max_gram_residual: max_res,
        min_eigenvalue_slack: slack,
        min_margin,
        min_sampled_value: min_val,
        samples: pts.len(),
        passed: ok,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegreeStatus {
    pub degree: u32,
    pub status: Status,
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinDegreeReport {
    pub min_degree: Option<u32>,
    pub per_degree: Vec<DegreeStatus>,
}

impl MinDegreeReport {
    /// `d:status` pairs joined with `;`, e.g. `2:infeasible;4:feasible`.
    pub fn status_string(&self) -> String {
        self.per_degree.iter().map(|s| format!("{}:{}", s.degree, s.status)).collect::<Vec<_>>().join(";")
    }
}

/// Smallest even degree `≤ d_max` admitting an SOS Lyapunov function at
/// `γ = 1`. Degrees are tried in increasing order and the sweep stops at the
/// first feasible one; undetermined degrees are reported, never skipped over
/// silently.
pub fn min_sos_degree(set: &MatrixSet, d_max: u32) -> Result<MinDegreeReport> {
    if d_max < 2 || d_max % 2 != 0 {
        return Err(Error::param(format!("d_max must be even and at least 2, got {d_max}")));
    }
    let mut per_degree = Vec::new();
    for d in (2..=d_max).step_by(2) {
        let out = sos_lyapunov_feasible(set, d, 1.0)?;
        let status = out.status();
        per_degree.push(DegreeStatus { degree: d, status, margin: out.margin() });
        if status == Status::Feasible {
            return Ok(MinDegreeReport { min_degree: Some(d), per_degree });
        }
    }
    Ok(MinDegreeReport { min_degree: None, per_degree })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SosUpperBound {
    pub value: f64,
    pub certificate: SosLyapunovCertificate,
    /// Every probed `γ` with its outcome, in probe order.
    pub probes: Vec<(f64, Status)>,
}

/// Smallest certified `γ` (to within `tol`) for degree-`d` SOS Lyapunov
/// functions, bisecting between the length-4 product bounds. The upper end
/// is pushed up until it is certified. Undetermined probes count as
/// uncertified, so the returned value is always backed by a certificate.
pub fn jsr_upper_sos(set: &MatrixSet, d: u32, tol: f64) -> Result<SosUpperBound> {
    check_degree(d)?;
    if !(tol > 0.0) {
        return Err(Error::param("tol must be positive"));
    }
    let mut lo = rho_lower(set, 4)?.value;
    let mut hi = rho_upper(set, 4)?.value.max(lo);
    let mut probes = Vec::new();
    let mut best: Option<SosLyapunovCertificate> = None;

    let mut step = tol.max(1e-6 * hi);
    for _ in 0..60 {
        if hi <= 0.0 {
            hi = step;
        }
        let out = sos_lyapunov_feasible(set, d, hi)?;
        probes.push((hi, out.status()));
        if let SosOutcome::Feasible(c) = out {
            best = Some(*c);
            break;
        }
        lo = lo.max(hi);
        hi += step;
        step *= 2.0;
    }
    let Some(mut cert) = best else {
        return Err(Error::Undetermined(format!(
            "no certified gamma found for degree {d}; probes: {probes:?}"
        )));
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let out = sos_lyapunov_feasible(set, d, mid)?;
        probes.push((mid, out.status()));
        match out {
            SosOutcome::Feasible(c) => {
                hi = mid;
                cert = *c;
            }
            _ => lo = mid,
        }
    }
    Ok(SosUpperBound { value: hi, certificate: cert, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{blondel_et_al, lagarias_wang, lagarias_wang_experiment, lagarias_wang_midpoint};
    use crate::jsr::{gripenberg, GripenbergOptions};

    fn poly(n: usize, d: u32, terms: &[(&[u32], f64)]) -> HomogeneousPolynomial {
        HomogeneousPolynomial::from_terms(n, d, terms.iter().copied()).unwrap()
    }

    #[test]
    fn gram_problem_examples() {
        let x2y2 = poly(2, 2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]);
        let (p, mb) = gram_problem(&[x2y2], &[true]).unwrap();
        let sol = conic::feasibility_with_margin(&p, &mb, 100).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.margin.unwrap() - 1.0).abs() < 1e-8);
        let g = sol.blocks[0].matrix().unwrap();
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-7);

        // x²y² is SOS only with a singular Gram matrix
        let q = poly(2, 4, &[(&[2, 2], 1.0)]);
        let (p, _) = gram_problem(&[q.clone()], &[false]).unwrap();
        assert!(conic::solve(&p, 100).unwrap().is_optimal());
        let (p, mb) = gram_problem(&[q], &[true]).unwrap();
        let sol = conic::feasibility_with_margin(&p, &mb, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::MarginBelowTolerance);
        assert!(sol.margin.unwrap() < 1e-8);

        let neg = poly(2, 2, &[(&[2, 0], -1.0)]);
        let (p, _) = gram_problem(&[neg], &[false]).unwrap();
        assert_eq!(conic::solve(&p, 100).unwrap().status, SolveStatus::Infeasible);

        let odd = poly(2, 3, &[(&[3, 0], 1.0)]);
        assert!(gram_problem(&[odd], &[false]).is_err());
    }

    #[test]
    fn trivial_lyapunov_examples() {
        let half = MatrixSet::new("half", vec![Matrix::identity(2).scale(0.5)]).unwrap();
        let out = sos_lyapunov_feasible(&half, 2, 1.0).unwrap();
        let cert = out.certificate().expect("0.5 I has a quadratic Lyapunov function");
        assert!(validate_sos(cert, 7).unwrap().passed);

        let twice = MatrixSet::new("two", vec![Matrix::identity(2).scale(2.0)]).unwrap();
        for d in [2, 4] {
            assert_eq!(sos_lyapunov_feasible(&twice, d, 1.0).unwrap().status(), Status::Infeasible);
        }
        let rot = MatrixSet::new("rot", vec![Matrix::rotation(0.5).scale(0.9)]).unwrap();
        assert_eq!(min_sos_degree(&rot, 4).unwrap().min_degree, Some(2));
        assert!(sos_lyapunov_feasible(&half, 3, 1.0).is_err());
        assert!(sos_lyapunov_feasible(&half, 2, 0.0).is_err());
    }

    #[test]
    fn experiment_k2_needs_degree_six() {
        let set = lagarias_wang_experiment(2).unwrap();
        assert_eq!(sos_lyapunov_feasible(&set, 4, 1.0).unwrap().status(), Status::Infeasible);
        let out = sos_lyapunov_feasible(&set, 6, 1.0).unwrap();
        let cert = out.certificate().expect("degree 6 certificate");
        let v = validate_sos(cert, 1).unwrap();
        assert!(v.passed, "{v:?}");
        let report = min_sos_degree(&set, 8).unwrap();
        assert_eq!(report.min_degree, Some(6));
        assert_eq!(report.status_string(), "2:infeasible;4:infeasible;6:feasible");
    }

    #[test]
    fn tampered_certificate_is_rejected() {
        let set = lagarias_wang_experiment(2).unwrap();
        let mut cert = sos_lyapunov_feasible(&set, 6, 1.0).unwrap().certificate().unwrap().clone();
        cert.gamma *= 0.9;
        assert!(!validate_sos(&cert, 42).unwrap().passed);
    }

    #[test]
    fn scaled_identity_upper_bound() {
        let set = MatrixSet::new("a", vec![Matrix::identity(2).scale(0.7)]).unwrap();
        let ub = jsr_upper_sos(&set, 2, 1e-4).unwrap();
        assert!(ub.value >= 0.7 && ub.value <= 0.7 + 2e-4, "{}", ub.value);
    }

    #[test]
    fn sos_bounds_are_consistent_with_product_bounds() {
        let set = blondel_et_al(0.7).unwrap();
        let ub = jsr_upper_sos(&set, 2, 1e-3).unwrap();
        let br = gripenberg(&set, GripenbergOptions::default()).unwrap();
        assert!(ub.value >= br.lower);

        let lw = lagarias_wang(2, lagarias_wang_midpoint(2), false).unwrap();
        let ub = jsr_upper_sos(&lw, 6, 1e-3).unwrap();
        assert!(ub.value >= 1.0 - 1e-3);
    }
}
